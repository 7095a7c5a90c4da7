"""Joint training of all dictionary layers by variable splitting.

The cascade constraint is relaxed with one auxiliary matrix per inner layer
and an additive (Bregman-style) relaxation matrix per splitting. Every outer
iteration sweeps the sub-problems in chain order: each dictionary update and
each auxiliary update is a closed-form least-squares solve, the final code is
an l1-penalized solve via ISTA, and the relaxation matrices are then updated
from the constraint residuals. Raw iterates may oscillate, so the solver
tracks the best state seen (lowest cascade objective) and returns that.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .greedy import GreedyConfig, deep_objective, train_greedy
from .model import DeepDictionary, LayerDictionary, SparseCode, matrix_of
from .shallow import ShallowConfig, alternation_steps, learn_shallow
from .sparse_ops import (IstaOptions, ista_solve, lsq_code, lsq_dictionary,
                         normalize_columns, _solve_gram)

logger = logging.getLogger(__name__)

# outer iterations with relative objective change below tol needed to stop
STALL_ITERS = 5


@dataclass(frozen=True)
class ExactConfig:
    """Settings for the joint splitting solver."""

    layer_widths: tuple[int, ...]
    lam: float = 1e-3
    mu: tuple[float, ...] | float = 1.0
    max_iters: int = 200
    tol: float = 1e-6
    nonneg_final: bool = True
    seed: int = 0
    init: str = "from_greedy"
    greedy_iters: int = 20
    ista: IstaOptions | None = None

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if not self.layer_widths or any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must all be at least 1")
        n_couplings = max(len(self.layer_widths) - 1, 1)
        mu = self.mu
        if np.isscalar(mu):
            mu = (float(mu),) * n_couplings
        else:
            mu = tuple(float(m) for m in mu)
        object.__setattr__(self, "mu", mu)
        if len(self.layer_widths) > 1 and len(self.mu) != len(self.layer_widths) - 1:
            raise ValueError(f"need {len(self.layer_widths) - 1} coupling weights, got {len(self.mu)}")
        if any(m <= 0 for m in self.mu):
            raise ValueError("coupling weights must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.init not in ("random", "from_greedy"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class ExactState:
    """Mutable working state of the splitting solver.

    layers holds the dictionaries, auxiliaries the per-splitting relaxed
    codes, bregmans the additive relaxation matrices, code the final sparse
    code. auxiliaries[j] has as many rows as layers[j] has columns.
    """

    layers: list[np.ndarray]
    auxiliaries: list[np.ndarray]
    bregmans: list[np.ndarray]
    code: np.ndarray


@dataclass(frozen=True)
class ExactTraceEntry:
    """Per-outer-iteration record: cascade objective and splitting gaps."""

    iteration: int
    objective: float
    gaps: tuple[float, ...] = field(default_factory=tuple)


def solve_stacked_lsq(top, bottom, eps: float | None = None) -> np.ndarray:
    """Minimize w1*||C1 - A1 Y||_F^2 + w2*||C2 - A2 Y||_F^2 over Y.

    top and bottom are (matrix, target, weight) triples sharing the unknown Y.
    Solved through the stacked normal equations; with bottom matrix equal to
    the identity this covers the auxiliary updates exactly.
    """
    a1, c1, w1 = top
    a2, c2, w2 = bottom
    a1, c1 = matrix_of(a1), matrix_of(c1)
    a2, c2 = matrix_of(a2), matrix_of(c2)
    if a1.shape[1] != a2.shape[1]:
        raise ValueError(f"unknown has {a1.shape[1]} rows for the top block "
                         f"but {a2.shape[1]} for the bottom block")
    if a1.shape[0] != c1.shape[0] or a2.shape[0] != c2.shape[0]:
        raise ValueError("target rows do not match their matrix")
    if c1.shape[1] != c2.shape[1]:
        raise ValueError("targets must have the same number of columns")
    gram = w1 * (a1.T @ a1) + w2 * (a2.T @ a2)
    rhs = w1 * (a1.T @ c1) + w2 * (a2.T @ c2)
    return _solve_gram(gram, rhs, eps)


def bregman_update(aux, next_dictionary, next_code, breg) -> np.ndarray:
    """Additive relaxation update: aux - next_dictionary @ next_code - breg."""
    return matrix_of(aux) - matrix_of(next_dictionary) @ matrix_of(next_code) - matrix_of(breg)


def _next_code(state: ExactState, j: int) -> np.ndarray:
    """Code the (j+1)-th dictionary acts on: the next auxiliary, or the final code."""
    return state.auxiliaries[j + 1] if j + 1 < len(state.auxiliaries) else state.code


def sweep_once(x: np.ndarray, state: ExactState, mu: tuple[float, ...], lam: float,
               ista_opts: IstaOptions, rng: np.random.Generator) -> None:
    """One outer sweep: dictionaries and auxiliaries down the chain, the final
    code by ISTA, then all relaxation updates. Mutates state in place.

    Each dictionary is unit-normalized right at its own update, before the
    variable downstream of it is solved, so every later sub-problem and the
    relaxation residuals see consistent scales. Each auxiliary is re-solved
    immediately after its dictionary, so only the final code needs the
    compensating row rescale (it warm-starts the l1 solve).
    """
    n = len(state.layers)
    for j in range(n - 1):
        target = x if j == 0 else state.auxiliaries[j - 1] - state.bregmans[j - 1]
        w_top = 1.0 if j == 0 else mu[j - 1]
        state.layers[j], _ = normalize_columns(lsq_dictionary(target, state.auxiliaries[j]),
                                               rng)
        coupled = state.layers[j + 1] @ _next_code(state, j) + state.bregmans[j]
        eye = np.eye(state.auxiliaries[j].shape[0])
        state.auxiliaries[j] = solve_stacked_lsq((state.layers[j], target, w_top),
                                                 (eye, coupled, mu[j]))
    target = state.auxiliaries[-1] - state.bregmans[-1]
    state.layers[-1], scales = normalize_columns(lsq_dictionary(target, state.code), rng)
    state.code = scales[:, None] * state.code
    # dividing the last block by its coupling weight turns it into a plain
    # l1 problem with weight lam/mu
    state.code = ista_solve(state.layers[-1], target, lam / mu[-1],
                            ista_opts, z0=state.code).matrix
    for j in range(n - 1):
        state.bregmans[j] = bregman_update(state.auxiliaries[j], state.layers[j + 1],
                                           _next_code(state, j), state.bregmans[j])


def feasibility_gaps(state: ExactState) -> tuple[float, ...]:
    """Frobenius norms of the splitting residuals, one per inner layer."""
    gaps = []
    for j in range(len(state.layers) - 1):
        resid = state.auxiliaries[j] - state.layers[j + 1] @ _next_code(state, j)
        gaps.append(float(np.linalg.norm(resid)))
    return tuple(gaps)


def _check_finite(state: ExactState, iteration: int) -> None:
    arrays = state.layers + state.auxiliaries + state.bregmans + [state.code]
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite state at iteration {iteration}")


def _init_state(x: np.ndarray, cfg: ExactConfig, rng: np.random.Generator):
    """Initial dictionaries plus code, either random or taken from a greedy run."""
    widths = cfg.layer_widths
    if cfg.init == "from_greedy":
        greedy_cfg = GreedyConfig(widths, lam=cfg.lam, per_layer_iters=cfg.greedy_iters,
                                  nonneg_final=cfg.nonneg_final, seed=cfg.seed, ista=cfg.ista)
        deep, code, _ = train_greedy(x, greedy_cfg)
        layers = [np.array(layer.matrix) for layer in deep.layers]
        z = np.array(code.matrix)
    else:
        layers = []
        rows = x.shape[0]
        for width in widths:
            d = rng.standard_normal((rows, width))
            d, _ = normalize_columns(d, rng)
            layers.append(d)
            rows = width
        z = np.zeros((widths[-1], x.shape[1]))
    # auxiliaries start as the least-squares chain codes of the initial layers
    auxiliaries = []
    current = x
    for j in range(len(widths) - 1):
        current = lsq_code(layers[j], current)
        auxiliaries.append(current)
    bregmans = [np.zeros_like(a) for a in auxiliaries]
    return ExactState(layers, auxiliaries, bregmans, z)


def _train_single_layer(x: np.ndarray, cfg: ExactConfig):
    """Degenerate one-layer case: no splitting, so run the plain alternation
    with this solver's stopping rule and best-state tracking."""
    shallow_cfg = ShallowConfig(n_atoms=cfg.layer_widths[0], lam=cfg.lam,
                                outer_iters=cfg.max_iters,
                                nonneg_codes=cfg.nonneg_final,
                                seed=cfg.seed, ista=cfg.ista)
    rng = np.random.default_rng(cfg.seed)
    d_init = z_init = None
    if cfg.init == "from_greedy":
        warm_cfg = replace(shallow_cfg, outer_iters=cfg.greedy_iters)
        warm_dict, warm_code, _ = learn_shallow(x, warm_cfg)
        d_init, z_init = np.array(warm_dict.matrix), np.array(warm_code.matrix)

    best_obj = np.inf
    best = None
    trace: list[ExactTraceEntry] = []
    prev_obj = None
    streak = 0
    iteration = 0
    for d, z, entry in alternation_steps(x, shallow_cfg, rng, d_init=d_init, z_init=z_init):
        if entry.objective < best_obj:
            best_obj = entry.objective
            best = (np.array(d), np.array(z))
        if entry.phase != "dictionary":
            continue
        obj = entry.objective
        trace.append(ExactTraceEntry(iteration, obj, ()))
        if prev_obj is not None:
            rel = abs(obj - prev_obj) / max(abs(prev_obj), 1e-30)
            streak = streak + 1 if rel < cfg.tol else 0
        prev_obj = obj
        iteration += 1
        if streak >= STALL_ITERS:
            break
    d_best, z_best = best
    deep = DeepDictionary((LayerDictionary(d_best, unit_columns=True),), cfg.layer_widths)
    return deep, SparseCode(z_best, nonneg=cfg.nonneg_final, lam=cfg.lam), trace


def train_exact(signals, cfg: ExactConfig):
    """Jointly train all layers of a deep dictionary.

    Parameters
    ----------
    signals : SignalMatrix or array
        Data windows, one per column.
    cfg : ExactConfig

    Returns
    -------
    (DeepDictionary, SparseCode, list[ExactTraceEntry])
        Best-seen unit-column layers and code, plus one trace entry per outer
        iteration (raw iterate objective and splitting gaps). With
        init="from_greedy" the returned cascade objective never exceeds the
        greedy solution's, because the greedy state seeds the incumbent.
    """
    x = matrix_of(signals)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite training data")
    if len(cfg.layer_widths) == 1:
        return _train_single_layer(x, cfg)

    rng = np.random.default_rng(cfg.seed)
    state = _init_state(x, cfg, rng)
    ista_opts = replace(cfg.ista or IstaOptions(max_iters=100, tol=1e-8),
                        nonneg=cfg.nonneg_final)

    best_obj = deep_objective(x, state.layers, state.code, cfg.lam)
    best = ([np.array(layer) for layer in state.layers], np.array(state.code))
    trace: list[ExactTraceEntry] = []
    prev_obj = best_obj
    streak = 0
    for iteration in range(cfg.max_iters):
        sweep_once(x, state, cfg.mu, cfg.lam, ista_opts, rng)
        _check_finite(state, iteration)
        obj = deep_objective(x, state.layers, state.code, cfg.lam)
        gaps = feasibility_gaps(state)
        trace.append(ExactTraceEntry(iteration, obj, gaps))
        logger.debug("exact iter %d objective %.6e max gap %.3e",
                     iteration, obj, max(gaps))
        if obj < best_obj:
            best_obj = obj
            best = ([np.array(layer) for layer in state.layers], np.array(state.code))
        rel = abs(obj - prev_obj) / max(abs(prev_obj), 1e-30)
        streak = streak + 1 if rel < cfg.tol else 0
        prev_obj = obj
        if streak >= STALL_ITERS:
            break

    layers_best, z_best = best
    deep = DeepDictionary(tuple(LayerDictionary(m, unit_columns=True) for m in layers_best),
                          cfg.layer_widths)
    return deep, SparseCode(z_best, nonneg=cfg.nonneg_final, lam=cfg.lam), trace


def exact_trace_csv(trace: list[ExactTraceEntry]) -> str:
    """Render a training trace as CSV rows iter,objective,gap1..gapN."""
    n_gaps = max((len(entry.gaps) for entry in trace), default=0)
    header = "iter,objective" + "".join(f",gap{j + 1}" for j in range(n_gaps))
    lines = [header]
    for entry in trace:
        cells = [str(entry.iteration), repr(entry.objective)]
        cells.extend(repr(g) for g in entry.gaps)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
