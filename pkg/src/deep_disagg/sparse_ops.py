"""Low-level numerical kernels shared by the dictionary-learning solvers.

All functions are pure: they never mutate their inputs and are safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import SparseCode, matrix_of

# Tikhonov scale engaged only when a Gram matrix is not positive definite
GRAM_RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class IstaOptions:
    """Controls for the iterative soft-thresholding solver."""

    max_iters: int = 300
    tol: float = 1e-6
    nonneg: bool = False
    step: float | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def soft_threshold(v, theta):
    """sign(v) * max(|v| - theta, 0), elementwise; theta must be non-negative."""
    if theta < 0:
        raise ValueError("threshold must be non-negative")
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def nonneg_soft_threshold(v, theta):
    """max(v - theta, 0), elementwise; the prox for an l1 penalty plus v >= 0."""
    if theta < 0:
        raise ValueError("threshold must be non-negative")
    return np.maximum(np.asarray(v, dtype=float) - theta, 0.0)


def spectral_step(matrix) -> float:
    """Step size 1/(2*sigma_max^2), the largest safe step for the gradient of
    the squared Frobenius data-fit term."""
    d = matrix_of(matrix)
    if not np.any(d):
        raise ValueError("zero matrix has no spectral step")
    sigma = float(np.linalg.norm(d, 2))
    return 1.0 / (2.0 * sigma * sigma)


def _solve_gram(gram: np.ndarray, rhs: np.ndarray, eps: float | None) -> np.ndarray:
    """Solve (gram + eps*I) sol = rhs for a PSD gram matrix.

    With eps=None the unregularized system is tried first (Cholesky); the
    scale-aware ridge eps = GRAM_RIDGE_SCALE * trace/k only kicks in when the
    gram is rank deficient. Pass an explicit eps (0 allowed) to force either
    behaviour.
    """
    k = gram.shape[0]
    if eps is None:
        try:
            sol = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
            if np.all(np.isfinite(sol)):
                return sol
        except scipy.linalg.LinAlgError:
            pass
        eps = GRAM_RIDGE_SCALE * float(np.trace(gram)) / k
    if eps <= 0.0:
        if not np.any(gram):
            # fully degenerate system: rhs is necessarily zero in the
            # least-squares settings below, and the minimum-norm answer is zero
            return np.zeros_like(rhs)
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram + eps * np.eye(k)), rhs)


def lsq_code(dictionary, signals, eps: float | None = None) -> np.ndarray:
    """Least-squares code: the matrix minimizing the squared Frobenius
    reconstruction error for fixed dictionary."""
    d = matrix_of(dictionary)
    x = matrix_of(signals)
    if d.shape[0] != x.shape[0]:
        raise ValueError(f"dictionary rows {d.shape[0]} != signal rows {x.shape[0]}")
    return _solve_gram(d.T @ d, d.T @ x, eps)


def lsq_dictionary(signals, code, eps: float | None = None) -> np.ndarray:
    """Least-squares dictionary: the matrix minimizing the squared Frobenius
    reconstruction error for fixed code."""
    x = matrix_of(signals)
    z = matrix_of(code)
    if x.shape[1] != z.shape[1]:
        raise ValueError(f"signal columns {x.shape[1]} != code columns {z.shape[1]}")
    return _solve_gram(z @ z.T, z @ x.T, eps).T


def normalize_columns(matrix, rng: np.random.Generator | None = None):
    """Scale every column to unit l2 norm.

    Returns (unit_matrix, scales) where scales holds the original norms. A
    zero column is replaced by a fresh random unit column and its scale is
    recorded as 0, so rescaling the paired code row by the scale keeps the
    product unchanged.
    """
    d = np.array(matrix_of(matrix), dtype=float)
    scales = np.linalg.norm(d, axis=0)
    dead = scales == 0.0
    if np.any(dead):
        if rng is None:
            rng = np.random.default_rng(0)
        for j in np.flatnonzero(dead):
            column = rng.standard_normal(d.shape[0])
            d[:, j] = column / np.linalg.norm(column)
    live = ~dead
    d[:, live] /= scales[live]
    return d, scales


def l1_objective(dictionary, signals, code, lam: float) -> float:
    """Squared Frobenius reconstruction error plus lam times the l1 norm of the code."""
    d = matrix_of(dictionary)
    x = matrix_of(signals)
    z = matrix_of(code)
    resid = x - d @ z
    return float(np.sum(resid * resid)) + lam * float(np.sum(np.abs(z)))


def ista_solve(dictionary, signals, lam: float, opts: IstaOptions | None = None,
               z0: np.ndarray | None = None, return_trace: bool = False):
    """Iterative soft thresholding for the l1-penalized least-squares code.

    Minimizes the squared reconstruction error plus lam * ||Z||_1, with Z
    constrained non-negative when opts.nonneg is set. Uses a constant step
    from :func:`spectral_step` (or opts.step), which makes the objective
    non-increasing across iterations; stops when the relative objective
    change drops below opts.tol or after opts.max_iters iterations.

    Started from the zero code (the default), the returned objective never
    exceeds the objective of the zero matrix. Pass z0 to warm-start.
    """
    opts = opts or IstaOptions()
    d = matrix_of(dictionary)
    x = matrix_of(signals)
    if d.shape[0] != x.shape[0]:
        raise ValueError(f"dictionary rows {d.shape[0]} != signal rows {x.shape[0]}")
    if lam <= 0:
        raise ValueError("lam must be positive")
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(x))):
        raise ValueError("non-finite inputs")

    if not np.any(d):
        # a zero dictionary reconstructs nothing; the penalty forces Z = 0
        z = np.zeros((d.shape[1], x.shape[1]))
        code = SparseCode(z, nonneg=opts.nonneg, lam=float(lam))
        trace = [l1_objective(d, x, z, lam)]
        return (code, trace) if return_trace else code

    step = opts.step if opts.step is not None else spectral_step(d)
    prox = nonneg_soft_threshold if opts.nonneg else soft_threshold
    if z0 is None:
        z = np.zeros((d.shape[1], x.shape[1]))
    else:
        z = np.array(matrix_of(z0), dtype=float)
        if opts.nonneg:
            z = np.maximum(z, 0.0)
    obj = l1_objective(d, x, z, lam)
    trace = [obj]
    for _ in range(opts.max_iters):
        grad = 2.0 * (d.T @ (d @ z - x))
        z = prox(z - step * grad, step * lam)
        new_obj = l1_objective(d, x, z, lam)
        trace.append(new_obj)
        done = abs(obj - new_obj) <= opts.tol * max(abs(obj), 1e-30)
        obj = new_obj
        if done:
            break
    code = SparseCode(z, nonneg=opts.nonneg, lam=float(lam))
    return (code, trace) if return_trace else code
