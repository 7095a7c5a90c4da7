"""End-to-end command line flows on small synthetic problems."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from deep_disagg.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def synth_args(out, seed=0, homes=1, windows=12, appliances=2, widths="6,4", window=8):
    return ["synth", "--appliances", str(appliances), "--widths", widths,
            "--window", str(window), "--windows", str(windows), "--density", "0.3",
            "--noise", "0", "--homes", str(homes), "--seed", str(seed), "--out", str(out)]


class TestSynth:
    def test_outputs_exist_and_schema_valid(self, runner, tmp_path):
        out = tmp_path / "synth"
        run_ok(runner, synth_args(out))
        csv_path = out / "home_00.csv"
        assert csv_path.exists()
        header = csv_path.read_text().splitlines()[0]
        assert header == "timestamp,appliance_00,appliance_01,aggregate"
        assert (out / "truth_model_appliance_00.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["version"]

    def test_noiseless_aggregate_equals_sum(self, runner, tmp_path):
        out = tmp_path / "synth"
        run_ok(runner, synth_args(out))
        rows = (out / "home_00.csv").read_text().strip().splitlines()[1:]
        for row in rows:
            cells = row.split(",")
            a, b, agg = float(cells[1]), float(cells[2]), float(cells[3])
            assert a + b == agg

    def test_same_seed_identical_files(self, runner, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        run_ok(runner, synth_args(out1, seed=5))
        run_ok(runner, synth_args(out2, seed=5))
        assert (out1 / "home_00.csv").read_bytes() == (out2 / "home_00.csv").read_bytes()
        assert (out1 / "truth_model_appliance_00.json").read_bytes() == \
            (out2 / "truth_model_appliance_00.json").read_bytes()


class TestTrain:
    def test_exact_training_writes_models_and_traces(self, runner, tmp_path):
        data = tmp_path / "data"
        run_ok(runner, synth_args(data, windows=20, widths="8,6", window=8))
        out = tmp_path / "models"
        run_ok(runner, ["train", str(data / "home_00.csv"), "--solver", "exact",
                        "--widths", "8,6,4", "--lambda", "1e-3", "--mu", "1,1",
                        "--iters", "15", "--seed", "0", "--window", "8",
                        "--out", str(out)])
        for appliance in ("appliance_00", "appliance_01"):
            assert (out / f"model_{appliance}.json").exists()
            trace = (out / f"trace_{appliance}.csv").read_text().splitlines()
            assert trace[0] == "iter,objective,gap1,gap2"
            assert len(trace) == 16
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["solver"] == "exact"

    def test_greedy_single_width_matches_shallow_dictionaries(self, runner, tmp_path):
        data = tmp_path / "data"
        run_ok(runner, synth_args(data, windows=20, widths="6,4", window=8))
        out_g, out_s = tmp_path / "g", tmp_path / "s"
        common = [str(data / "home_00.csv"), "--widths", "6", "--lambda", "1e-3",
                  "--iters", "10", "--seed", "3", "--window", "8"]
        run_ok(runner, ["train", *common, "--solver", "greedy", "--out", str(out_g)])
        run_ok(runner, ["train", *common, "--solver", "shallow", "--out", str(out_s)])
        for appliance in ("appliance_00", "appliance_01"):
            greedy = json.loads((out_g / f"model_{appliance}.json").read_text())
            shallow = json.loads((out_s / f"model_{appliance}.json").read_text())
            assert greedy["layers"] == shallow["layers"]
            assert greedy["layer_widths"] == shallow["layer_widths"]

    def test_rerun_identical_model_files(self, runner, tmp_path):
        data = tmp_path / "data"
        run_ok(runner, synth_args(data, windows=16, widths="6,4", window=8))
        out1, out2 = tmp_path / "m1", tmp_path / "m2"
        args = [str(data / "home_00.csv"), "--solver", "greedy", "--widths", "6,4",
                "--iters", "8", "--seed", "1", "--window", "8", "--jobs", "2"]
        run_ok(runner, ["train", *args, "--out", str(out1)])
        run_ok(runner, ["train", *args, "--out", str(out2)])
        for appliance in ("appliance_00", "appliance_01"):
            assert (out1 / f"model_{appliance}.json").read_bytes() == \
                (out2 / f"model_{appliance}.json").read_bytes()

    def test_failure_writes_error_record(self, runner, tmp_path):
        data = tmp_path / "data"
        run_ok(runner, synth_args(data, windows=12, window=8))
        out = tmp_path / "bad"
        result = runner.invoke(main, ["train", str(data / "home_00.csv"), "--solver",
                                      "shallow", "--widths", "6,4", "--window", "8",
                                      "--out", str(out)])
        assert result.exit_code == 1
        record = json.loads((out / "error.json").read_text())
        assert record["command"] == "train"
        assert record["error"] == "ValueError"


class TestDisaggregateAndEvaluate:
    @pytest.fixture()
    def pipeline(self, runner, tmp_path):
        data = tmp_path / "data"
        run_ok(runner, synth_args(data, homes=2, windows=30, appliances=2,
                                  widths="8,5", window=8, seed=2))
        models = tmp_path / "models"
        run_ok(runner, ["train", str(data / "home_00.csv"), "--solver", "greedy",
                        "--widths", "8,5", "--iters", "12", "--seed", "2",
                        "--window", "8", "--out", str(models)])
        est = tmp_path / "est"
        run_ok(runner, ["disaggregate", str(data / "home_01.csv"), "--models",
                        str(models), "--lambda", "1e-3", "--out", str(est)])
        return data, models, est

    def test_estimates_file_reconstructs_aggregate(self, pipeline):
        _, _, est = pipeline
        lines = (est / "estimates.csv").read_text().strip().splitlines()
        assert lines[0] == "timestamp,appliance_00,appliance_01,residual,aggregate"
        for row in lines[1:]:
            cells = [float(c) for c in row.split(",")[1:]]
            estimates, residual, aggregate = cells[:-2], cells[-2], cells[-1]
            total = 0.0
            for value in estimates:
                total = total + value
            assert aggregate - total == residual

    def test_single_appliance_self_reconstruction(self, runner, tmp_path):
        import numpy as np
        from deep_disagg import GreedyConfig, load_csv, train_greedy, windowize

        data = tmp_path / "data"
        run_ok(runner, synth_args(data, appliances=1, windows=40, widths="8,5",
                                  window=8, seed=4))
        models = tmp_path / "models"
        run_ok(runner, ["train", str(data / "home_00.csv"), "--solver", "greedy",
                        "--widths", "8,5", "--iters", "12", "--seed", "4",
                        "--window", "8", "--out", str(models)])
        est = tmp_path / "est"
        # near-zero penalty: the re-solve should match the training fit itself
        run_ok(runner, ["disaggregate", str(data / "home_00.csv"), "--models",
                        str(models), "--lambda", "1e-8", "--iters", "5000",
                        "--tol", "1e-14", "--out", str(est)])

        rows = [[float(c) for c in line.split(",")[1:]]
                for line in (est / "estimates.csv").read_text().strip().splitlines()[1:]]
        table = np.array(rows)
        rel = np.linalg.norm(table[:, -2]) / np.linalg.norm(table[:, -1])

        # the same training run re-done in process gives the fit to beat
        home = load_csv(data / "home_00.csv")
        x = windowize(home.appliance_series["appliance_00"], 8)
        deep, code, _ = train_greedy(x.data, GreedyConfig((8, 5), lam=1e-3,
                                                          per_layer_iters=12, seed=4))
        train_rel = np.linalg.norm(x.data - deep.chained_product() @ code.matrix) \
            / np.linalg.norm(x.data)
        assert rel <= train_rel + 1e-6

    def test_zero_aggregate_zero_estimates(self, runner, tmp_path, pipeline):
        _, models, _ = pipeline
        zero_csv = tmp_path / "zero.csv"
        rows = ["timestamp,a,b"] + [f"{t},0.0,0.0" for t in range(16)]
        zero_csv.write_text("\n".join(rows) + "\n")
        out = tmp_path / "zero_est"
        run_ok(runner, ["disaggregate", str(zero_csv), "--models", str(models),
                        "--out", str(out)])
        for row in (out / "estimates.csv").read_text().strip().splitlines()[1:]:
            assert all(float(c) == 0.0 for c in row.split(",")[1:])

    def test_evaluate_perfect_estimates(self, runner, tmp_path):
        truth_csv = tmp_path / "truth.csv"
        rows = ["timestamp,a,b"] + [f"{t},{1.0 + t},{2.0 * t}" for t in range(6)]
        truth_csv.write_text("\n".join(rows) + "\n")
        est_csv = tmp_path / "est.csv"
        rows = ["timestamp,a,b,residual"] + [f"{t},{1.0 + t},{2.0 * t},0.0" for t in range(6)]
        est_csv.write_text("\n".join(rows) + "\n")
        out = tmp_path / "eval"
        run_ok(runner, ["evaluate", str(truth_csv), str(est_csv), "--out", str(out)])
        report = json.loads((out / "report.json").read_text())
        assert report["accuracy"] == 1.0
        assert (out / "report.csv").exists()

    def test_evaluate_zero_estimates_half(self, runner, tmp_path):
        truth_csv = tmp_path / "truth.csv"
        rows = ["timestamp,a,b"] + [f"{t},{1.0 + t},{2.0 + t}" for t in range(6)]
        truth_csv.write_text("\n".join(rows) + "\n")
        est_csv = tmp_path / "est.csv"
        rows = ["timestamp,a,b"] + [f"{t},0.0,0.0" for t in range(6)]
        est_csv.write_text("\n".join(rows) + "\n")
        out = tmp_path / "eval"
        run_ok(runner, ["evaluate", str(truth_csv), str(est_csv), "--out", str(out)])
        assert json.loads((out / "report.json").read_text())["accuracy"] == 0.5

    def test_evaluate_hand_computed_case(self, runner, tmp_path):
        truth_csv = tmp_path / "truth.csv"
        truth_csv.write_text("timestamp,n1,n2\n0,1.0,1.0\n1,1.0,0.0\n")
        est_csv = tmp_path / "est.csv"
        est_csv.write_text("timestamp,n1,n2\n0,1.0,1.0\n1,0.0,1.0\n")
        out = tmp_path / "eval"
        run_ok(runner, ["evaluate", str(truth_csv), str(est_csv), "--out", str(out)])
        report = json.loads((out / "report.json").read_text())
        assert report["accuracy"] == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_evaluate_with_plots(self, runner, tmp_path, pipeline):
        data, _, est = pipeline
        out = tmp_path / "eval"
        run_ok(runner, ["evaluate", str(data / "home_01.csv"),
                        str(est / "estimates.csv"), "--plot", "--out", str(out)])
        for appliance in ("appliance_00", "appliance_01"):
            svg = out / f"plot_{appliance}.svg"
            assert svg.exists()
            assert b"<svg" in svg.read_bytes()[:500]
        report = json.loads((out / "report.json").read_text())
        assert 0.0 <= report["accuracy"] <= 1.0

    def test_evaluate_misaligned_inputs_fail(self, runner, tmp_path):
        truth_csv = tmp_path / "truth.csv"
        truth_csv.write_text("timestamp,a\n0,1.0\n1,2.0\n")
        est_csv = tmp_path / "est.csv"
        est_csv.write_text("timestamp,a\n5,1.0\n6,2.0\n")
        result = runner.invoke(main, ["evaluate", str(truth_csv), str(est_csv),
                                      "--out", str(tmp_path / "eval")])
        assert result.exit_code == 1

    def test_window_mismatch_fails(self, runner, tmp_path, pipeline):
        data, models, _ = pipeline
        short_csv = tmp_path / "short.csv"
        rows = ["timestamp,a"] + [f"{t},1.0" for t in range(4)]  # shorter than one window
        short_csv.write_text("\n".join(rows) + "\n")
        result = runner.invoke(main, ["disaggregate", str(short_csv), "--models",
                                      str(models), "--out", str(tmp_path / "bad")])
        assert result.exit_code == 1
        assert (tmp_path / "bad" / "error.json").exists()


class TestManifest:
    def test_manifest_fields(self, runner, tmp_path):
        out = tmp_path / "synth"
        run_ok(runner, synth_args(out))
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest) == {"command", "config", "seed", "inputs", "outputs",
                                 "duration_seconds", "version"}
        assert manifest["seed"] == 0
        assert any(path.endswith("home_00.csv") for path in manifest["outputs"])
        assert manifest["duration_seconds"] >= 0.0
