"""Disaggregation quality metrics and report serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import matrix_of


@dataclass(frozen=True)
class EvalReport:
    """Overall accuracy plus one normalized error per appliance."""

    accuracy: float
    per_appliance_error: dict[str, float]
    n_timesteps: int
    n_appliances: int


def disagg_accuracy(truth: dict, estimates: dict) -> float:
    """Disaggregation accuracy: 1 minus the total absolute per-appliance error
    over twice the total true aggregate energy.

    The factor 2 in the denominator discounts the double counting of errors
    by the absolute value: energy wrongly assigned to one appliance is also
    missing from another. Identical inputs score exactly 1; all-zero
    estimates of a non-negative truth score exactly 0.5.
    """
    if set(truth) != set(estimates):
        raise ValueError("truth and estimate appliance sets differ")
    if not truth:
        raise ValueError("no appliances to score")
    num = 0.0
    den = 0.0
    for key in sorted(truth):
        t = matrix_of(truth[key])
        e = matrix_of(estimates[key])
        if t.shape != e.shape:
            raise ValueError(f"shape mismatch for {key}: {t.shape} vs {e.shape}")
        num += float(np.sum(np.abs(e - t)))
        # summing the truth appliance by appliance equals summing the
        # aggregate over time, and keeps the est=0 score exactly 0.5
        den += float(np.sum(t))
    den *= 2.0
    if den <= 0:
        raise ValueError("total true aggregate energy must be positive")
    return 1.0 - num / den


def normalized_error(truth, estimate) -> float:
    """Total absolute error relative to the total absolute truth."""
    t = matrix_of(truth)
    e = matrix_of(estimate)
    if t.shape != e.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {e.shape}")
    den = float(np.sum(np.abs(t)))
    if den <= 0:
        raise ValueError("true signal has zero total magnitude")
    return float(np.sum(np.abs(e - t))) / den


def evaluate(truth: dict, estimates: dict) -> EvalReport:
    """Score estimates against truth; both map appliance id to a signal matrix."""
    accuracy = disagg_accuracy(truth, estimates)
    errors = {key: normalized_error(truth[key], estimates[key]) for key in sorted(truth)}
    first = matrix_of(truth[next(iter(sorted(truth)))])
    return EvalReport(accuracy=accuracy, per_appliance_error=errors,
                      n_timesteps=int(first.size), n_appliances=len(truth))


def report_to_json(report: EvalReport) -> str:
    doc = {
        "accuracy": report.accuracy,
        "per_appliance_error": report.per_appliance_error,
        "n_timesteps": report.n_timesteps,
        "n_appliances": report.n_appliances,
    }
    return json.dumps(doc, indent=2) + "\n"


def report_to_csv(report: EvalReport) -> str:
    lines = ["metric,appliance_id,value"]
    lines.append(f"accuracy,,{report.accuracy!r}")
    for key, err in report.per_appliance_error.items():
        lines.append(f"normalized_error,{key},{err!r}")
    lines.append(f"n_timesteps,,{report.n_timesteps}")
    lines.append(f"n_appliances,,{report.n_appliances}")
    return "\n".join(lines) + "\n"


def write_report_json(report: EvalReport, path) -> None:
    Path(path).write_text(report_to_json(report), encoding="utf-8")


def write_report_csv(report: EvalReport, path) -> None:
    Path(path).write_text(report_to_csv(report), encoding="utf-8")
