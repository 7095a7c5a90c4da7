"""Figure rendering for evaluation reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_estimate_vs_truth(timestamps, truth, estimate, appliance_id: str, path) -> None:
    """Line plot of actual (red) versus predicted (blue) power, saved as SVG."""
    ts = np.asarray(timestamps, dtype=float)
    fig, ax = plt.subplots(figsize=(8.0, 3.0))
    ax.plot(ts, np.asarray(truth, dtype=float), color="red", lw=1.0, label="actual")
    ax.plot(ts, np.asarray(estimate, dtype=float), color="blue", lw=1.0, label="predicted")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("power (W)")
    ax.set_title(appliance_id)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
