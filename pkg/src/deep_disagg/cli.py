"""Command line pipeline: synthetic data, training, disaggregation, evaluation.

Every command writes its outputs plus a ``manifest.json`` capturing the full
configuration, seed, input and output paths, wall-clock duration, and library
version; rerunning a command with the same configuration reproduces the data
outputs byte for byte. On failure a machine-readable ``error.json`` is written
and the exit code is nonzero. Set the DEEP_DISAGG_LOG environment variable
(DEBUG, INFO, ...) for solver trace verbosity.
"""

from __future__ import annotations

import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__
from .data import AGGREGATE_COLUMN, SynthConfig, home_csv_text, load_csv, resample_mean, \
    synth_generate, windowize
from .disaggregate import DisaggConfig, disaggregate
from .exact import ExactConfig, exact_trace_csv, train_exact
from .greedy import GreedyConfig, train_greedy
from .metrics import evaluate as evaluate_maps, report_to_csv, report_to_json
from .model import ApplianceModel, DeepDictionary, load_model, model_to_json, validate
from .shallow import ShallowConfig, learn_shallow
from .sparse_ops import IstaOptions

logger = logging.getLogger(__name__)

RESERVED_COLUMNS = {AGGREGATE_COLUMN, "residual"}
SOLVER_DEFAULT_ITERS = {"shallow": 30, "greedy": 20, "exact": 200}


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written alongside every command's outputs."""

    command: str
    config: dict
    seed: int | None
    inputs: list[str]
    outputs: list[str]
    duration_seconds: float
    version: str


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_manifest(out_dir: Path, command: str, config: dict, seed: int | None,
                    inputs: list, outputs: list, started: float) -> Path:
    manifest = RunManifest(command=command, config=config, seed=seed,
                           inputs=[str(p) for p in inputs],
                           outputs=[str(p) for p in outputs],
                           duration_seconds=time.time() - started,
                           version=__version__)
    path = out_dir / "manifest.json"
    atomic_write_text(path, json.dumps(asdict(manifest), indent=2) + "\n")
    return path


def _fail(out_dir: Path, command: str, exc: BaseException) -> None:
    record = {"command": command, "error": type(exc).__name__, "message": str(exc)}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_dir / "error.json", json.dumps(record, indent=2) + "\n")
    except OSError:
        pass
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}") from None


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None


@click.group()
@click.version_option(version=__version__)
def main():
    """Multi-layer dictionary learning for appliance-level energy disaggregation."""
    level = os.environ.get("DEEP_DISAGG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


@main.command()
@click.option("--appliances", default=3, show_default=True, help="Number of synthetic appliances.")
@click.option("--widths", default="24,12", show_default=True,
              help="Atoms per layer, comma separated.")
@click.option("--window", default=64, show_default=True, help="Samples per window.")
@click.option("--windows", default=200, show_default=True,
              help="Windows per appliance per home.")
@click.option("--density", default=0.2, show_default=True, help="Sparse activation density.")
@click.option("--noise", default=0.0, show_default=True, help="Gaussian noise stddev (watts).")
@click.option("--homes", default=1, show_default=True, help="Number of homes to generate.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def synth(appliances, widths, window, windows, density, noise, homes, seed, out):
    """Generate a seeded synthetic dataset with known generating models."""
    started = time.time()
    try:
        cfg = SynthConfig(n_appliances=appliances, layer_widths=_parse_ints(widths),
                          window_length=window, windows_per_appliance=windows,
                          code_density=density, noise_std=noise, seed=seed, n_homes=homes)
        out.mkdir(parents=True, exist_ok=True)
        home_list, models = synth_generate(cfg)
        outputs = []
        for home in home_list:
            path = out / f"{home.home_id}.csv"
            atomic_write_text(path, home_csv_text(home))
            outputs.append(path)
        for model in models:
            path = out / f"truth_model_{model.appliance_id}.json"
            atomic_write_text(path, model_to_json(model))
            outputs.append(path)
        config = asdict(cfg) | {"layer_widths": list(cfg.layer_widths)}
        outputs.append(_write_manifest(out, "synth", config, seed, [], outputs, started))
    except Exception as exc:
        _fail(out, "synth", exc)


def _training_matrices(csv_paths, window: int, resample: int | None) -> dict[str, np.ndarray]:
    """Windowized training data per appliance, pooled across the input files."""
    blocks: dict[str, list[np.ndarray]] = {}
    for path in csv_paths:
        home = load_csv(path)
        for appliance_id in sorted(home.appliance_series):
            series = home.appliance_series[appliance_id]
            if resample:
                series = resample_mean(series, resample)
            blocks.setdefault(appliance_id, []).append(windowize(series, window).data)
    if not blocks:
        raise ValueError("no appliance columns found in the training data")
    return {key: np.hstack(parts) for key, parts in blocks.items()}


def _train_one(appliance_id: str, data: np.ndarray, solver: str, widths, lam, mu,
               iters, tol, seed, init, nonneg, window):
    """Train one appliance; returns (model, trace_csv_text)."""
    config = {"solver": solver, "layer_widths": list(widths), "lam": lam,
              "mu": list(mu), "iters": iters, "tol": tol, "seed": seed,
              "init": init, "nonneg": nonneg, "window_length": window}
    if solver == "shallow":
        if len(widths) != 1:
            raise ValueError("the shallow solver takes exactly one width")
        dictionary, code, trace = learn_shallow(
            data, ShallowConfig(n_atoms=widths[0], lam=lam, outer_iters=iters,
                                nonneg_codes=nonneg, seed=seed))
        deep = DeepDictionary((dictionary,), widths)
        text = _half_step_trace_csv([trace])
    elif solver == "greedy":
        deep, code, traces = train_greedy(
            data, GreedyConfig(widths, lam=lam, per_layer_iters=iters,
                               nonneg_final=nonneg, seed=seed))
        text = _half_step_trace_csv(traces)
    elif solver == "exact":
        deep, code, trace = train_exact(
            data, ExactConfig(widths, lam=lam, mu=mu, max_iters=iters, tol=tol,
                              nonneg_final=nonneg, seed=seed, init=init))
        text = exact_trace_csv(trace)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    model = ApplianceModel(appliance_id=appliance_id, dictionary=deep, training_config=config)
    return model, text


def _half_step_trace_csv(traces) -> str:
    lines = ["layer,step,phase,objective,fidelity"]
    for layer_idx, trace in enumerate(traces, start=1):
        for step_idx, entry in enumerate(trace):
            lines.append(f"{layer_idx},{step_idx},{entry.phase},"
                         f"{entry.objective!r},{entry.fidelity!r}")
    return "\n".join(lines) + "\n"


@main.command()
@click.argument("data_csv", nargs=-1, required=True,
                type=click.Path(exists=True, path_type=Path))
@click.option("--solver", type=click.Choice(["shallow", "greedy", "exact"]),
              default="exact", show_default=True)
@click.option("--widths", default="24,12", show_default=True,
              help="Atoms per layer, comma separated.")
@click.option("--lambda", "lam", default=1e-3, show_default=True, help="l1 weight.")
@click.option("--mu", default="1.0", show_default=True,
              help="Coupling weights for the exact solver.")
@click.option("--iters", default=None, type=int,
              help="Outer iterations (defaults: shallow 30, greedy 20, exact 200).")
@click.option("--tol", default=1e-6, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True, help="Parallel appliance trainings.")
@click.option("--window", default=144, show_default=True, help="Samples per training window.")
@click.option("--resample", default=None, type=int,
              help="Average the series over this many seconds before windowing.")
@click.option("--init", type=click.Choice(["random", "from_greedy"]),
              default="from_greedy", show_default=True, help="Exact solver initialization.")
@click.option("--nonneg/--no-nonneg", default=True, show_default=True,
              help="Constrain final codes to be non-negative.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def train(data_csv, solver, widths, lam, mu, iters, tol, seed, jobs, window,
          resample, init, nonneg, out):
    """Learn one multi-layer dictionary per appliance from training CSVs."""
    started = time.time()
    try:
        width_list = _parse_ints(widths)
        mu_list = _parse_floats(mu)
        if iters is None:
            iters = SOLVER_DEFAULT_ITERS[solver]
        out.mkdir(parents=True, exist_ok=True)
        matrices = _training_matrices(data_csv, window, resample)

        def task(item):
            appliance_id, data = item
            logger.info("training %s on %s windows", appliance_id, data.shape[1])
            return appliance_id, _train_one(appliance_id, data, solver, width_list,
                                            lam, mu_list, iters, tol, seed, init,
                                            nonneg, window)

        items = sorted(matrices.items())
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(task, items))
        else:
            results = [task(item) for item in items]

        outputs = []
        for appliance_id, (model, trace_text) in results:
            model_path = out / f"model_{appliance_id}.json"
            atomic_write_text(model_path, model_to_json(model))
            trace_path = out / f"trace_{appliance_id}.csv"
            atomic_write_text(trace_path, trace_text)
            outputs.extend([model_path, trace_path])
        config = {"solver": solver, "widths": list(width_list), "lambda": lam,
                  "mu": list(mu_list), "iters": iters, "tol": tol, "seed": seed,
                  "jobs": jobs, "window": window, "resample": resample,
                  "init": init, "nonneg": nonneg}
        outputs.append(_write_manifest(out, "train", config, seed, list(data_csv),
                                       outputs, started))
    except Exception as exc:
        _fail(out, "train", exc)


def _load_models(model_paths) -> list[ApplianceModel]:
    paths: list[Path] = []
    for raw in model_paths:
        path = Path(raw)
        if path.is_dir():
            paths.extend(sorted(p for p in path.glob("*.json")
                                if p.name not in ("manifest.json", "error.json", "report.json")))
        else:
            paths.append(path)
    if not paths:
        raise ValueError("no model files found")
    models = []
    for path in paths:
        model = load_model(path)
        violations = validate(model)
        if violations:
            raise ValueError(f"invalid model {path}: " + "; ".join(violations))
        models.append(model)
    return models


@main.command(name="disaggregate")
@click.argument("aggregate_csv", type=click.Path(exists=True, path_type=Path))
@click.option("--models", "model_paths", multiple=True, required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Model JSON files or directories containing them.")
@click.option("--lambda", "lam", default=1e-3, show_default=True, help="l1 weight.")
@click.option("--iters", default=300, show_default=True, help="ISTA iterations.")
@click.option("--tol", default=1e-6, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def disaggregate_cmd(aggregate_csv, model_paths, lam, iters, tol, out):
    """Split an aggregate meter CSV into per-appliance estimate columns.

    The output file holds one estimate column per appliance plus 'residual'
    and 'aggregate' columns; aggregate minus the estimate columns (summed left
    to right) equals the residual column exactly.
    """
    started = time.time()
    try:
        out.mkdir(parents=True, exist_ok=True)
        models = _load_models(model_paths)
        window_lengths = {m.dictionary.window_length for m in models}
        if len(window_lengths) != 1:
            raise ValueError(f"models disagree on window length: {sorted(window_lengths)}")
        window = window_lengths.pop()

        home = load_csv(aggregate_csv)
        series = home.aggregate_or_sum()
        matrix = windowize(series, window)
        cfg = DisaggConfig(lam=lam, ista=IstaOptions(max_iters=iters, tol=tol, nonneg=True))
        result = disaggregate(matrix, models, cfg)

        n_kept = matrix.window_length * matrix.n_windows
        timestamps = series.timestamps[:n_kept]
        ids = sorted(result.per_appliance_estimate)
        lines = ["timestamp," + ",".join(ids) + f",residual,{AGGREGATE_COLUMN}"]
        flat = {key: result.per_appliance_estimate[key].data.T.reshape(-1) for key in ids}
        flat_residual = result.residual_matrix.data.T.reshape(-1)
        flat_aggregate = matrix.data.T.reshape(-1)
        for i, ts in enumerate(timestamps):
            cells = [str(int(ts))]
            cells.extend(repr(float(flat[key][i])) for key in ids)
            cells.append(repr(float(flat_residual[i])))
            cells.append(repr(float(flat_aggregate[i])))
            lines.append(",".join(cells))
        estimates_path = out / "estimates.csv"
        atomic_write_text(estimates_path, "\n".join(lines) + "\n")

        config = {"lambda": lam, "iters": iters, "tol": tol,
                  "models": [str(p) for p in model_paths], "window": window}
        outputs = [estimates_path]
        outputs.append(_write_manifest(out, "disaggregate", config, None,
                                       [aggregate_csv], outputs, started))
    except Exception as exc:
        _fail(out, "disaggregate", exc)


@main.command(name="evaluate")
@click.argument("truth_csv", type=click.Path(exists=True, path_type=Path))
@click.argument("estimates_csv", type=click.Path(exists=True, path_type=Path))
@click.option("--plot", is_flag=True, help="Also write per-appliance SVG figures.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def evaluate_cmd(truth_csv, estimates_csv, plot, out):
    """Score estimate columns against ground-truth columns.

    Estimate timestamps must appear in the truth file (estimates are usually
    truncated to whole windows); the appliance columns of the estimates file
    must all exist in the truth file.
    """
    started = time.time()
    try:
        out.mkdir(parents=True, exist_ok=True)
        truth_home = load_csv(truth_csv)
        est_home = load_csv(estimates_csv)
        est_ids = sorted(set(est_home.appliance_series) - RESERVED_COLUMNS)
        if not est_ids:
            raise ValueError("no appliance estimate columns found")
        missing = [i for i in est_ids if i not in truth_home.appliance_series]
        if missing:
            raise ValueError(f"estimates cover appliances missing from the truth: {missing}")

        truth_ts = truth_home.appliance_series[est_ids[0]].timestamps
        est_ts = est_home.appliance_series[est_ids[0]].timestamps
        idx = np.searchsorted(truth_ts, est_ts)
        if np.any(idx >= truth_ts.size) or not np.array_equal(truth_ts[idx], est_ts):
            raise ValueError("estimate timestamps do not align with the truth file")

        truth_map = {key: truth_home.appliance_series[key].values[idx].reshape(-1, 1)
                     for key in est_ids}
        est_map = {key: est_home.appliance_series[key].values.reshape(-1, 1)
                   for key in est_ids}
        report = evaluate_maps(truth_map, est_map)

        report_json = out / "report.json"
        report_csv = out / "report.csv"
        atomic_write_text(report_json, report_to_json(report))
        atomic_write_text(report_csv, report_to_csv(report))
        outputs = [report_json, report_csv]
        if plot:
            from .plots import plot_estimate_vs_truth
            for key in est_ids:
                path = out / f"plot_{key}.svg"
                plot_estimate_vs_truth(est_ts, truth_map[key].ravel(),
                                       est_map[key].ravel(), key, path)
                outputs.append(path)
        config = {"plot": plot}
        outputs.append(_write_manifest(out, "evaluate", config, None,
                                       [truth_csv, estimates_csv], outputs, started))
        click.echo(f"accuracy: {report.accuracy:.4f}")
    except Exception as exc:
        _fail(out, "evaluate", exc)


if __name__ == "__main__":
    main()
