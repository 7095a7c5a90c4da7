"""Single-layer dictionary learning by alternating minimization.

One alternation is a sparse-coding half-step (ISTA on the code) followed by a
dictionary half-step (least-squares update, then column normalization with the
paired code rows rescaled so the product is unchanged).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .model import LayerDictionary, SparseCode, matrix_of
from .sparse_ops import IstaOptions, ista_solve, lsq_dictionary, normalize_columns

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShallowConfig:
    """Settings for single-layer training."""

    n_atoms: int
    lam: float = 1e-3
    outer_iters: int = 30
    nonneg_codes: bool = True
    seed: int = 0
    ista: IstaOptions | None = None

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be at least 1")
        if self.outer_iters < 1:
            raise ValueError("outer_iters must be at least 1")
        if self.lam <= 0:
            raise ValueError("lam must be positive")


@dataclass(frozen=True)
class TraceEntry:
    """Objective snapshot after one half-step.

    phase is "init", "code" (after the sparse-coding half-step) or
    "dictionary" (after the dictionary update and normalization). objective is
    the full reconstruction-plus-l1 value, fidelity the squared reconstruction
    error alone. The full objective never increases across a "code" entry and
    the fidelity never increases across a "dictionary" entry; normalization
    rescales code rows, so it moves the l1 term but never the fidelity.
    """

    phase: str
    objective: float
    fidelity: float


def _objective_pair(d, x, z, lam):
    resid = x - d @ z
    fid = float(np.sum(resid * resid))
    return fid + lam * float(np.sum(np.abs(z))), fid


def _fidelity(d, x, z):
    resid = x - d @ z
    return float(np.sum(resid * resid))


def init_dictionary(m: int, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded standard-normal dictionary with unit columns."""
    d = rng.standard_normal((m, n_atoms))
    d, _ = normalize_columns(d, rng)
    return d


def alternation_steps(x: np.ndarray, cfg: ShallowConfig, rng: np.random.Generator,
                      d_init: np.ndarray | None = None, z_init: np.ndarray | None = None):
    """Yield (dictionary, code, TraceEntry) after the initial state and after
    every half-step of the alternation. Shared by the single-layer solvers so
    they follow the exact same update path."""
    if d_init is None:
        d = init_dictionary(x.shape[0], cfg.n_atoms, rng)
    else:
        d = np.array(matrix_of(d_init), dtype=float)
        if d.shape != (x.shape[0], cfg.n_atoms):
            raise ValueError(f"d_init has shape {d.shape}, expected {(x.shape[0], cfg.n_atoms)}")
    z = np.zeros((cfg.n_atoms, x.shape[1])) if z_init is None else np.array(z_init, dtype=float)
    opts = replace(cfg.ista or IstaOptions(), nonneg=cfg.nonneg_codes)

    obj, fid = _objective_pair(d, x, z, cfg.lam)
    yield d, z, TraceEntry("init", obj, fid)
    for it in range(cfg.outer_iters):
        z = ista_solve(d, x, cfg.lam, opts, z0=z).matrix
        obj, fid = _objective_pair(d, x, z, cfg.lam)
        yield d, z, TraceEntry("code", obj, fid)

        d_new = lsq_dictionary(x, z)
        # the ridge fallback for a rank-deficient code can, in principle, give
        # a slightly worse fit than the incumbent dictionary; keep the old one
        # then so the half-step stays a monotone partial minimizer
        if _fidelity(d_new, x, z) > fid:
            d_new = d
        d, scales = normalize_columns(d_new, rng)
        z = scales[:, None] * z
        obj, fid = _objective_pair(d, x, z, cfg.lam)
        yield d, z, TraceEntry("dictionary", obj, fid)
        logger.debug("shallow iter %d objective %.6e", it, obj)


def learn_shallow(signals, cfg: ShallowConfig, d_init: np.ndarray | None = None):
    """Learn a single dictionary layer and its sparse code.

    Parameters
    ----------
    signals : SignalMatrix or array
        Data windows, one per column.
    cfg : ShallowConfig
    d_init : optional array
        Initial dictionary; defaults to a seeded random unit-column matrix.

    Returns
    -------
    (LayerDictionary, SparseCode, list[TraceEntry])
        Final unit-column dictionary, final code, and one trace entry per
        half-step (plus the initial state).
    """
    x = matrix_of(signals)
    if x.size == 0:
        raise ValueError("empty training data")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite training data")
    if cfg.n_atoms >= x.size:
        raise ValueError(f"n_atoms {cfg.n_atoms} too large for {x.shape} data")
    rng = np.random.default_rng(cfg.seed)

    trace = []
    d = z = None
    for d, z, entry in alternation_steps(x, cfg, rng, d_init=d_init):
        trace.append(entry)
    dictionary = LayerDictionary(d, unit_columns=True)
    code = SparseCode(z, nonneg=cfg.nonneg_codes, lam=cfg.lam)
    return dictionary, code, trace
