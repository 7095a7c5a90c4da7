"""CSV ingestion, resampling, splitting, windowing, synthetic generation."""

import numpy as np
import pytest

from deep_disagg import (CsvError, CsvSchema, EnergySeries, HomeDataset, SynthConfig,
                         chained_product, effective_dictionary, home_csv_text, load_csv,
                         lsq_code, resample_mean, split_homes, synth_generate, validate,
                         windowize)


def write(tmp_path, text, name="home.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        path = write(tmp_path, "timestamp,fridge,tv\n0,1.5,2.0\n1,2.5,3.0\n2,3.5,4.0\n")
        home = load_csv(path)
        assert set(home.appliance_series) == {"fridge", "tv"}
        assert len(home.appliance_series["fridge"]) == 3
        assert home.home_id == "home"
        assert np.array_equal(home.appliance_series["tv"].values, [2.0, 3.0, 4.0])

    def test_duplicate_timestamp_names_line(self, tmp_path):
        path = write(tmp_path, "timestamp,a\n0,1.0\n5,2.0\n5,3.0\n")
        with pytest.raises(CsvError, match="line 4"):
            load_csv(path)

    def test_rows_sorted_by_timestamp(self, tmp_path):
        path = write(tmp_path, "timestamp,a\n5,2.0\n0,1.0\n10,3.0\n")
        home = load_csv(path)
        assert np.array_equal(home.appliance_series["a"].timestamps, [0, 5, 10])
        assert np.array_equal(home.appliance_series["a"].values, [1.0, 2.0, 3.0])

    def test_aggregate_synthesized_as_exact_sum(self, tmp_path):
        path = write(tmp_path, "timestamp,a,b\n0,0.1,0.2\n1,1.1,2.2\n2,3.3,4.4\n")
        home = load_csv(path)
        table = np.array([[0.1, 0.2], [1.1, 2.2], [3.3, 4.4]])
        expected = table[:, 0] + table[:, 1]
        assert np.array_equal(home.aggregate_or_sum().values, expected)

    def test_aggregate_column_used_when_present(self, tmp_path):
        path = write(tmp_path, "timestamp,a,aggregate\n0,1.0,9.0\n1,2.0,9.5\n")
        home = load_csv(path)
        assert np.array_equal(home.aggregate_or_sum().values, [9.0, 9.5])
        assert "aggregate" not in home.appliance_series

    def test_malformed_number_names_line(self, tmp_path):
        path = write(tmp_path, "timestamp,a\n0,1.0\n1,oops\n")
        with pytest.raises(CsvError, match="line 3"):
            load_csv(path)

    def test_wrong_column_count_names_line(self, tmp_path):
        path = write(tmp_path, "timestamp,a,b\n0,1.0,2.0\n1,3.0\n")
        with pytest.raises(CsvError, match="line 3"):
            load_csv(path)

    def test_missing_policy_drop_and_zero(self, tmp_path):
        text = "timestamp,a,b\n0,1.0,2.0\n1,,3.0\n2,4.0,5.0\n"
        dropped = load_csv(write(tmp_path, text, "d.csv"), CsvSchema(missing_policy="drop"))
        assert np.array_equal(dropped.appliance_series["a"].timestamps, [0, 2])
        zeroed = load_csv(write(tmp_path, text, "z.csv"), CsvSchema(missing_policy="zero"))
        assert np.array_equal(zeroed.appliance_series["a"].values, [1.0, 0.0, 4.0])

    def test_negative_policies(self, tmp_path):
        text = "timestamp,a\n0,-1.0\n1,2.0\n"
        kept = load_csv(write(tmp_path, text, "k.csv"))
        assert kept.appliance_series["a"].values[0] == -1.0
        clamped = load_csv(write(tmp_path, text, "c.csv"), CsvSchema(negative_policy="clamp"))
        assert clamped.appliance_series["a"].values[0] == 0.0
        with pytest.raises(CsvError):
            load_csv(write(tmp_path, text, "e.csv"), CsvSchema(negative_policy="error"))

    def test_header_errors(self, tmp_path):
        with pytest.raises(CsvError, match="line 1"):
            load_csv(write(tmp_path, "time,a\n0,1.0\n", "h1.csv"))
        with pytest.raises(CsvError, match="line 1"):
            load_csv(write(tmp_path, "timestamp,a,a\n0,1.0,2.0\n", "h2.csv"))

    def test_round_trip_through_writer(self, tmp_path):
        cfg = SynthConfig(n_appliances=2, layer_widths=(6, 4), window_length=8,
                          windows_per_appliance=5, seed=3)
        home = synth_generate(cfg)[0][0]
        path = write(tmp_path, home_csv_text(home), "rt.csv")
        loaded = load_csv(path)
        for key, series in home.appliance_series.items():
            assert loaded.appliance_series[key].values.tobytes() == series.values.tobytes()
        assert loaded.aggregate_or_sum().values.tobytes() == \
            home.aggregate_or_sum().values.tobytes()


class TestResampleMean:
    def series(self, values, period=1):
        return EnergySeries(np.arange(len(values)) * period, values)

    def test_pairwise_mean(self):
        out = resample_mean(self.series([1.0, 2.0, 3.0, 4.0]), 2)
        assert np.array_equal(out.values, [1.5, 3.5])
        assert np.array_equal(out.timestamps, [0, 2])

    def test_identity_window(self):
        out = resample_mean(self.series([1.0, 2.0, 3.0]), 1)
        assert np.array_equal(out.values, [1.0, 2.0, 3.0])

    def test_trailing_partial_dropped(self):
        out = resample_mean(self.series([1.0, 2.0, 3.0]), 2)
        assert np.array_equal(out.values, [1.5])

    def test_energy_preserved_up_to_truncation(self):
        rng = np.random.default_rng(0)
        values = np.abs(rng.standard_normal(103))
        series = EnergySeries(np.arange(103) * 5, values)
        out = resample_mean(series, 20)  # 4 samples per window
        kept = values[:(103 // 4) * 4]
        assert np.sum(out.values) * 20 == pytest.approx(np.sum(kept) * 5, rel=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            resample_mean(self.series([1.0, 2.0], period=10), 5)  # window < period
        with pytest.raises(ValueError):
            resample_mean(self.series([1.0, 2.0], period=10), 15)  # not a multiple
        uneven = EnergySeries([0, 1, 3], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            resample_mean(uneven, 2)


class TestSplitHomes:
    def homes(self, n):
        series = {"a": EnergySeries([0, 1], [1.0, 2.0])}
        return [HomeDataset(f"h{i}", series) for i in range(n)]

    def test_eighty_twenty(self):
        train, test = split_homes(self.homes(10), 0.8, seed=0)
        assert len(train) == 8 and len(test) == 2

    def test_deterministic(self):
        first = split_homes(self.homes(9), 0.8, seed=42)
        second = split_homes(self.homes(9), 0.8, seed=42)
        assert [h.home_id for h in first[0]] == [h.home_id for h in second[0]]
        assert [h.home_id for h in first[1]] == [h.home_id for h in second[1]]

    def test_five_homes_floor_but_at_least_one(self):
        train, test = split_homes(self.homes(5), 0.8, seed=1)
        assert len(train) == 4 and len(test) == 1

    def test_partition(self):
        homes = self.homes(7)
        train, test = split_homes(homes, 0.6, seed=3)
        train_ids = {h.home_id for h in train}
        test_ids = {h.home_id for h in test}
        assert train_ids | test_ids == {h.home_id for h in homes}
        assert train_ids & test_ids == set()

    def test_errors(self):
        with pytest.raises(ValueError):
            split_homes(self.homes(1), 0.8, seed=0)
        with pytest.raises(ValueError):
            split_homes(self.homes(4), 1.0, seed=0)


class TestWindowize:
    def series(self, n):
        return EnergySeries(np.arange(n), np.arange(n, dtype=float) + 1.0)

    def test_exact_division(self):
        sm = windowize(self.series(6), 3)
        assert sm.data.shape == (3, 2)
        assert np.array_equal(sm.data[:, 0], [1.0, 2.0, 3.0])
        assert np.array_equal(sm.data[:, 1], [4.0, 5.0, 6.0])

    def test_trailing_sample_dropped(self):
        sm = windowize(self.series(7), 3)
        assert sm.data.shape == (3, 2)

    def test_whole_series_single_column(self):
        sm = windowize(self.series(5), 5)
        assert sm.data.shape == (5, 1)
        assert np.array_equal(sm.data[:, 0], self.series(5).values)

    def test_concatenation_reconstructs_series(self):
        series = self.series(11)
        sm = windowize(series, 4)
        rebuilt = sm.data.T.reshape(-1)
        assert np.array_equal(rebuilt, series.values[:8])

    def test_window_seconds(self):
        series = EnergySeries(np.arange(6) * 10, np.ones(6))
        assert windowize(series, 3).window_seconds == 30.0

    def test_too_short(self):
        with pytest.raises(ValueError):
            windowize(self.series(2), 3)


class TestSynthGenerate:
    def test_noiseless_aggregate_is_exact_sum(self):
        cfg = SynthConfig(n_appliances=3, layer_widths=(8, 5), window_length=12,
                          windows_per_appliance=6, noise_std=0.0, seed=0)
        homes, _ = synth_generate(cfg)
        home = homes[0]
        total = None
        for key in sorted(home.appliance_series):
            values = home.appliance_series[key].values
            total = np.array(values) if total is None else total + values
        assert np.array_equal(home.aggregate_or_sum().values, total)

    def test_full_density_in_basis_column_space(self):
        cfg = SynthConfig(n_appliances=1, layer_widths=(8, 5), window_length=12,
                          windows_per_appliance=10, code_density=1.0, noise_std=0.0, seed=1)
        homes, models = synth_generate(cfg)
        x = windowize(homes[0].appliance_series["appliance_00"], 12).data
        basis = chained_product(models[0].dictionary.layers)
        projected = basis @ lsq_code(basis, x)
        assert np.linalg.norm(x - projected) <= 1e-8

    def test_same_seed_bit_identical(self):
        cfg = SynthConfig(n_appliances=2, layer_widths=(6, 4), window_length=8,
                          windows_per_appliance=5, seed=7, n_homes=2)
        first_homes, first_models = synth_generate(cfg)
        second_homes, second_models = synth_generate(cfg)
        for h1, h2 in zip(first_homes, second_homes):
            for key in h1.appliance_series:
                assert h1.appliance_series[key].values.tobytes() == \
                    h2.appliance_series[key].values.tobytes()
        for m1, m2 in zip(first_models, second_models):
            for l1, l2 in zip(m1.dictionary.layers, m2.dictionary.layers):
                assert l1.matrix.tobytes() == l2.matrix.tobytes()

    def test_ground_truth_models_valid(self):
        cfg = SynthConfig(n_appliances=2, layer_widths=(6, 4), window_length=8,
                          windows_per_appliance=5, seed=2)
        _, models = synth_generate(cfg)
        for model in models:
            assert validate(model, expected_window_length=8) == []
            eff = effective_dictionary(model, renormalize=False)
            assert np.all(eff.matrix >= 0)  # physical signals need non-negative atoms

    def test_noise_clamped_non_negative(self):
        cfg = SynthConfig(n_appliances=1, layer_widths=(6, 4), window_length=8,
                          windows_per_appliance=20, noise_std=5.0, seed=3)
        homes, _ = synth_generate(cfg)
        assert np.all(homes[0].appliance_series["appliance_00"].values >= 0)

    def test_homes_share_dictionaries_not_codes(self):
        cfg = SynthConfig(n_appliances=1, layer_widths=(6, 4), window_length=8,
                          windows_per_appliance=5, seed=4, n_homes=2)
        homes, _ = synth_generate(cfg)
        a = homes[0].appliance_series["appliance_00"].values
        b = homes[1].appliance_series["appliance_00"].values
        assert not np.array_equal(a, b)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(code_density=0.0)
        with pytest.raises(ValueError):
            SynthConfig(noise_std=-1.0)
        with pytest.raises(ValueError):
            SynthConfig(n_appliances=0)
