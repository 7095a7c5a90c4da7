"""Layer-by-layer training of a multi-layer dictionary.

Each layer factors the previous layer's code; only the last layer's code is
sparsity-penalized (and optionally sign-constrained). Information flows
strictly forward: once a layer is trained it is never revisited.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import DeepDictionary, LayerDictionary, chained_product, matrix_of
from .shallow import ShallowConfig, TraceEntry, learn_shallow, init_dictionary, _fidelity
from .sparse_ops import IstaOptions, lsq_code, lsq_dictionary, normalize_columns

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GreedyConfig:
    """Settings for greedy layer-wise training."""

    layer_widths: tuple[int, ...]
    lam: float = 1e-3
    per_layer_iters: int = 20
    nonneg_final: bool = True
    seed: int = 0
    ista: IstaOptions | None = None

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if not self.layer_widths or any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must all be at least 1")
        if self.per_layer_iters < 1:
            raise ValueError("per_layer_iters must be at least 1")
        if self.lam <= 0:
            raise ValueError("lam must be positive")


def fit_linear_layer(signals, n_atoms: int, iters: int, rng: np.random.Generator):
    """Alternating least-squares factorization data ~ dictionary @ code, no sparsity.

    Returns (unit-column dictionary, code, trace). Each half-step is an exact
    minimizer of the fit (the ridge fallback update is rejected if it would
    make the fit worse), and normalization keeps the product unchanged, so the
    traced objective is non-increasing.
    """
    x = matrix_of(signals)
    d = init_dictionary(x.shape[0], n_atoms, rng)
    z = np.zeros((n_atoms, x.shape[1]))

    fid = _fidelity(d, x, z)
    trace = [TraceEntry("init", fid, fid)]
    for _ in range(iters):
        z_new = lsq_code(d, x)
        if _fidelity(d, x, z_new) <= fid:
            z = z_new
        fid = _fidelity(d, x, z)
        trace.append(TraceEntry("code", fid, fid))

        d_new = lsq_dictionary(x, z)
        if _fidelity(d_new, x, z) > fid:
            d_new = d
        d, scales = normalize_columns(d_new, rng)
        z = scales[:, None] * z
        fid = _fidelity(d, x, z)
        trace.append(TraceEntry("dictionary", fid, fid))
    return d, z, trace


def train_greedy(signals, cfg: GreedyConfig):
    """Train a deep dictionary one layer at a time.

    Layers before the last are plain least-squares factorizations of the
    running code; the last layer is single-layer sparse coding on the
    second-to-last code. With a single width this is exactly
    :func:`learn_shallow` with the same seed.

    Returns (DeepDictionary, SparseCode, traces) where traces holds one
    half-step trace list per layer.
    """
    x = matrix_of(signals)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite training data")
    widths = cfg.layer_widths

    layers: list[LayerDictionary] = []
    traces: list[list[TraceEntry]] = []
    current = x
    for j, width in enumerate(widths[:-1]):
        rng = np.random.default_rng((cfg.seed, j))
        d, z, layer_trace = fit_linear_layer(current, width, cfg.per_layer_iters, rng)
        layers.append(LayerDictionary(d, unit_columns=True))
        traces.append(layer_trace)
        logger.debug("greedy layer %d fit %.6e", j + 1, layer_trace[-1].objective)
        current = z

    shallow_cfg = ShallowConfig(n_atoms=widths[-1], lam=cfg.lam,
                                outer_iters=cfg.per_layer_iters,
                                nonneg_codes=cfg.nonneg_final,
                                seed=cfg.seed, ista=cfg.ista)
    last, code, last_trace = learn_shallow(current, shallow_cfg)
    layers.append(last)
    traces.append(last_trace)

    deep = DeepDictionary(tuple(layers), widths)
    return deep, code, traces


def deep_objective(signals, layers, code, lam: float) -> float:
    """Squared reconstruction error through the full layer cascade plus
    lam times the l1 norm of the final code."""
    x = matrix_of(signals)
    z = matrix_of(code)
    product = chained_product(layers)
    if product.shape[1] != z.shape[0]:
        raise ValueError(f"cascade has {product.shape[1]} atoms but code has {z.shape[0]} rows")
    if product.shape[0] != x.shape[0]:
        raise ValueError(f"cascade rows {product.shape[0]} != signal rows {x.shape[0]}")
    resid = x - product @ z
    return float(np.sum(resid * resid)) + lam * float(np.sum(np.abs(z)))
