"""Dataset ingestion, resampling, windowing, home splits, and synthetic data.

The only ingestion format is CSV with a header row
``timestamp,<id1>,<id2>,...[,aggregate]``: integer epoch-second timestamps,
decimal watt readings, UTF-8, LF line endings. When the aggregate column is
absent it is synthesized as the row-wise sum of the appliance columns.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (ApplianceModel, DeepDictionary, EnergySeries, LayerDictionary,
                    SignalMatrix, chained_product)
from .sparse_ops import normalize_columns

AGGREGATE_COLUMN = "aggregate"


class CsvError(ValueError):
    """Malformed CSV input; messages carry the offending line number."""


@dataclass(frozen=True)
class CsvSchema:
    """Ingestion policies.

    missing_policy: "drop" removes rows with empty cells, "zero" fills them
    with 0. negative_policy: "keep" leaves negative readings alone, "clamp"
    raises them to 0, "error" rejects the file.
    """

    missing_policy: str = "drop"
    negative_policy: str = "keep"

    def __post_init__(self):
        if self.missing_policy not in ("drop", "zero"):
            raise ValueError(f"unknown missing_policy {self.missing_policy!r}")
        if self.negative_policy not in ("keep", "clamp", "error"):
            raise ValueError(f"unknown negative_policy {self.negative_policy!r}")


@dataclass(frozen=True)
class HomeDataset:
    """All series for one home, keyed by appliance id."""

    home_id: str
    appliance_series: dict[str, EnergySeries]
    aggregate_series: EnergySeries | None = None

    def aggregate_or_sum(self) -> EnergySeries:
        """The stored aggregate, or the exact sum of the appliance series."""
        if self.aggregate_series is not None:
            return self.aggregate_series
        ids = list(self.appliance_series)
        if not ids:
            raise ValueError("home has no series")
        first = self.appliance_series[ids[0]]
        total = np.array(first.values)
        for key in ids[1:]:
            total = total + self.appliance_series[key].values
        return EnergySeries(first.timestamps, total, appliance_id=AGGREGATE_COLUMN)


def load_csv(path, schema: CsvSchema | None = None) -> HomeDataset:
    """Parse one home's CSV file.

    Rows are sorted by timestamp; a duplicated timestamp is rejected with the
    line number of the second occurrence, as is any malformed row. Missing
    values follow schema.missing_policy.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvError("line 1: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "timestamp":
            raise CsvError("line 1: first column must be 'timestamp'")
        columns = header[1:]
        if not columns:
            raise CsvError("line 1: no appliance columns")
        if len(set(columns)) != len(columns):
            raise CsvError("line 1: duplicate column names")

        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvError(f"line {line_no}: expected {len(header)} columns, found {len(row)}")
            try:
                ts = int(row[0])
            except ValueError:
                raise CsvError(f"line {line_no}: invalid timestamp {row[0]!r}") from None
            values = []
            missing = False
            for name, cell in zip(columns, row[1:]):
                cell = cell.strip()
                if cell == "":
                    missing = True
                    values.append(0.0)
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvError(f"line {line_no}: invalid number {cell!r} "
                                   f"in column {name}") from None
            if missing and schema.missing_policy == "drop":
                continue
            rows.append((ts, line_no, values))

    if not rows:
        raise CsvError("no data rows after applying the missing-value policy")
    rows.sort(key=lambda item: item[0])
    for prev, cur in zip(rows, rows[1:]):
        if cur[0] == prev[0]:
            raise CsvError(f"line {cur[1]}: duplicate timestamp {cur[0]}")

    timestamps = np.array([row[0] for row in rows], dtype=float)
    table = np.array([row[2] for row in rows], dtype=float)
    if schema.negative_policy == "error" and np.any(table < 0):
        raise CsvError("negative readings present and negative_policy is 'error'")
    if schema.negative_policy == "clamp":
        table = np.maximum(table, 0.0)

    appliance_series: dict[str, EnergySeries] = {}
    aggregate = None
    appliance_columns = [c for c in columns if c != AGGREGATE_COLUMN]
    for name in columns:
        series = EnergySeries(timestamps, table[:, columns.index(name)], appliance_id=name)
        if name == AGGREGATE_COLUMN:
            aggregate = series
        else:
            appliance_series[name] = series
    if aggregate is None:
        # exact left-to-right sum in column order
        total = np.array(table[:, columns.index(appliance_columns[0])])
        for name in appliance_columns[1:]:
            total = total + table[:, columns.index(name)]
        aggregate = EnergySeries(timestamps, total, appliance_id=AGGREGATE_COLUMN)
    return HomeDataset(home_id=path.stem, appliance_series=appliance_series,
                       aggregate_series=aggregate)


def home_csv_text(dataset: HomeDataset) -> str:
    """Render a home as CSV (appliance columns in sorted order, then aggregate)."""
    ids = sorted(dataset.appliance_series)
    if not ids:
        raise ValueError("home has no series")
    aggregate = dataset.aggregate_or_sum()
    timestamps = dataset.appliance_series[ids[0]].timestamps
    for key in ids:
        if not np.array_equal(dataset.appliance_series[key].timestamps, timestamps):
            raise ValueError(f"series {key} is not aligned with the others")
    buffer = io.StringIO()
    buffer.write("timestamp," + ",".join(ids) + f",{AGGREGATE_COLUMN}\n")
    for i, ts in enumerate(timestamps):
        if float(ts) != int(ts):
            raise ValueError("timestamps must be integer epoch seconds")
        cells = [str(int(ts))]
        cells.extend(repr(float(dataset.appliance_series[key].values[i])) for key in ids)
        cells.append(repr(float(aggregate.values[i])))
        buffer.write(",".join(cells) + "\n")
    return buffer.getvalue()


def resample_mean(series: EnergySeries, window_seconds: float) -> EnergySeries:
    """Average non-overlapping windows; the trailing partial window is dropped.

    Requires uniformly sampled input and a window that is a positive multiple
    of the sampling period. Timestamps of the output are the window starts.
    """
    if len(series) < 2:
        raise ValueError("need at least 2 samples to resample")
    diffs = np.diff(series.timestamps)
    period = float(diffs[0])
    if not np.all(np.abs(diffs - period) <= 1e-9 * max(period, 1.0)):
        raise ValueError("series is not uniformly sampled")
    if window_seconds < period:
        raise ValueError(f"window {window_seconds}s is smaller than the sampling period {period}s")
    n = int(round(window_seconds / period))
    if abs(n * period - window_seconds) > 1e-9 * window_seconds:
        raise ValueError(f"window {window_seconds}s is not a multiple of the period {period}s")
    usable = (len(series) // n) * n
    values = series.values[:usable].reshape(-1, n).mean(axis=1)
    timestamps = series.timestamps[:usable:n]
    return EnergySeries(timestamps, values, appliance_id=series.appliance_id)


def split_homes(datasets: list[HomeDataset], train_fraction: float, seed: int):
    """Seeded shuffle of the homes, then a disjoint train/test split.

    The test side gets floor(n * (1 - train_fraction)) homes but never fewer
    than one; every home lands on exactly one side.
    """
    if len(datasets) < 2:
        raise ValueError("need at least 2 homes to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be strictly between 0 and 1")
    n = len(datasets)
    # the epsilon keeps exact products like 10 * 0.2 from flooring down
    n_test = int(np.floor(n * (1.0 - train_fraction) + 1e-9))
    n_test = min(max(n_test, 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    train = [datasets[i] for i in order[:n - n_test]]
    test = [datasets[i] for i in order[n - n_test:]]
    return train, test


def windowize(series: EnergySeries, window_length: int) -> SignalMatrix:
    """Cut a series into consecutive non-overlapping windows, one per column.

    The trailing partial window is dropped. The series must hold at least one
    full window.
    """
    if window_length < 1:
        raise ValueError("window_length must be at least 1")
    if len(series) < window_length:
        raise ValueError(f"series has {len(series)} samples, need at least {window_length}")
    n_windows = len(series) // window_length
    data = series.values[:n_windows * window_length].reshape(n_windows, window_length).T
    period = series.period_seconds if len(series) >= 2 else 1.0
    return SignalMatrix(data, window_seconds=window_length * period)


@dataclass(frozen=True)
class SynthConfig:
    """Settings for synthetic data generation.

    One set of generating dictionaries is drawn per appliance and shared by
    all homes; each home then draws its own sparse activations. Atom entries
    are drawn non-negative so the synthetic power signals stay physical.
    """

    n_appliances: int = 3
    layer_widths: tuple[int, ...] = (24, 12)
    window_length: int = 64
    windows_per_appliance: int = 200
    code_density: float = 0.2
    noise_std: float = 0.0
    seed: int = 0
    n_homes: int = 1
    sample_period_seconds: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if self.n_appliances < 1 or self.n_homes < 1:
            raise ValueError("need at least one appliance and one home")
        if not self.layer_widths or any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must all be at least 1")
        if not 0.0 < self.code_density <= 1.0:
            raise ValueError("code_density must be in (0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.window_length < 1 or self.windows_per_appliance < 1:
            raise ValueError("window_length and windows_per_appliance must be at least 1")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths)


def synth_generate(cfg: SynthConfig):
    """Generate seeded synthetic homes together with their generating models.

    Per appliance: unit-column non-negative layer dictionaries. Per home and
    appliance: a sparse non-negative activation matrix at the configured
    density (Bernoulli mask times Uniform[0.5, 1.5) amplitudes); the appliance
    windows are the cascade product times the activations, plus optional
    Gaussian noise clamped at zero. The aggregate is the exact sum of the
    appliance series.

    Returns (homes, models): a list of HomeDataset and the ground-truth
    ApplianceModel list.
    """
    rng = np.random.default_rng(cfg.seed)
    models = []
    for a in range(cfg.n_appliances):
        layers = []
        rows = cfg.window_length
        for width in cfg.layer_widths:
            mat = np.abs(rng.standard_normal((rows, width)))
            mat, _ = normalize_columns(mat, rng)
            layers.append(LayerDictionary(mat, unit_columns=True))
            rows = width
        dictionary = DeepDictionary(tuple(layers), cfg.layer_widths)
        models.append(ApplianceModel(
            appliance_id=f"appliance_{a:02d}",
            dictionary=dictionary,
            training_config={"solver": "synthetic-truth", "seed": cfg.seed,
                             "code_density": cfg.code_density,
                             "noise_std": cfg.noise_std}))

    m, s = cfg.window_length, cfg.windows_per_appliance
    n_samples = m * s
    timestamps = np.arange(n_samples, dtype=float) * cfg.sample_period_seconds
    homes = []
    for h in range(cfg.n_homes):
        appliance_series: dict[str, EnergySeries] = {}
        total = np.zeros(n_samples)
        for model in models:
            basis = chained_product(model.dictionary.layers)
            k = cfg.layer_widths[-1]
            mask = rng.random((k, s)) < cfg.code_density
            activations = rng.uniform(0.5, 1.5, (k, s)) * mask
            windows = basis @ activations
            if cfg.noise_std > 0:
                windows = np.maximum(windows + rng.normal(0.0, cfg.noise_std, windows.shape), 0.0)
            values = windows.T.reshape(-1)  # column after column restores the timeline
            appliance_series[model.appliance_id] = EnergySeries(
                timestamps, values, appliance_id=model.appliance_id)
            total = total + values
        aggregate = EnergySeries(timestamps, total, appliance_id=AGGREGATE_COLUMN)
        homes.append(HomeDataset(home_id=f"home_{h:02d}",
                                 appliance_series=appliance_series,
                                 aggregate_series=aggregate))
    return homes, models
