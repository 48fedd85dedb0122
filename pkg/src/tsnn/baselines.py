"""Spectral comparison methods: USVT and SoftImpute.

Both are plain reimplementations of the standard constructions
(Chatterjee 2015; Mazumder, Hastie & Tibshirani 2010) on top of a dense SVD.
Spectral estimates are defined everywhere, so ``neighbor_count`` is filled
with the number of observed entries and ``undefined_mask`` is all False.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ObservedMatrix, observed_fraction
from .estimators import CompletionResult

DEFAULT_LAMBDA_GRID = tuple(np.geomspace(1.0, 12.0, 10))


@dataclass(frozen=True)
class SpectralConfig:
    usvt_eta: float = 2.02
    si_lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    si_max_iter: int = 100
    si_tol: float = 1e-5


def _dense_result(matrix: ObservedMatrix, estimate: np.ndarray) -> CompletionResult:
    count = np.full(matrix.shape, int(matrix.mask.sum()), dtype=np.int64)
    return CompletionResult(estimate, count, np.zeros(matrix.shape, dtype=bool))


def usvt_complete(matrix: ObservedMatrix, eta_mult: float = 2.02) -> CompletionResult:
    """Universal singular value thresholding.

    Observed values are divided by their largest magnitude so entries lie in
    [-1, 1]; unobserved cells are zero-filled. Singular values below
    ``eta_mult * sqrt(max(n, m) * p_hat)`` are dropped, the rest rescaled by
    ``1 / p_hat``, and the result clipped to the observed range.
    """
    if not matrix.mask.any():
        raise ValueError("USVT needs at least one observed entry")
    obs = matrix.values[matrix.mask]
    scale = float(np.max(np.abs(obs)))
    if scale == 0.0:
        return _dense_result(matrix, np.zeros(matrix.shape))
    p_hat = observed_fraction(matrix)
    Y = matrix.filled(0.0) / scale
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    keep = s >= eta_mult * np.sqrt(max(matrix.shape) * p_hat)
    W = (U[:, keep] * s[keep]) @ Vt[keep] / p_hat
    W = np.clip(W * scale, obs.min(), obs.max())
    return _dense_result(matrix, W)


def soft_threshold_svd(Z: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    shrunk = np.maximum(s - lam, 0.0)
    k = int(np.count_nonzero(shrunk))
    return (U[:, :k] * shrunk[:k]) @ Vt[:k], shrunk


def soft_impute_objective(matrix: ObservedMatrix, Z: np.ndarray, lam: float) -> float:
    resid = np.where(matrix.mask, matrix.filled(0.0) - Z, 0.0)
    return 0.5 * float(np.sum(resid ** 2)) + lam * float(np.linalg.svd(Z, compute_uv=False).sum())


def soft_impute_complete(
    matrix: ObservedMatrix,
    lam: float,
    max_iter: int = 100,
    tol: float = 1e-5,
    init: Optional[np.ndarray] = None,
    trace: Optional[list] = None,
) -> CompletionResult:
    """Iterate Z <- S_lam(P_obs(X) + P_miss(Z)) until the relative change drops below ``tol``.

    ``trace``, when given, collects the penalized objective after every step.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    X = matrix.filled(0.0)
    Z = np.zeros(matrix.shape) if init is None else np.array(init, dtype=float)
    for _ in range(max_iter):
        filled = np.where(matrix.mask, X, Z)
        Z_new, _ = soft_threshold_svd(filled, lam)
        change = float(np.sum((Z_new - Z) ** 2))
        base = float(np.sum(Z ** 2))
        Z = Z_new
        if trace is not None:
            trace.append(soft_impute_objective(matrix, Z, lam))
        if change <= tol * max(base, 1e-300):
            break
    return _dense_result(matrix, Z)


def soft_impute_best(
    matrix: ObservedMatrix,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    target: Optional[np.ndarray] = None,
    eval_mask: Optional[np.ndarray] = None,
    max_iter: int = 100,
    tol: float = 1e-5,
) -> tuple[float, CompletionResult, list]:
    """Fit every lambda (largest first, warm-started) and keep the best on ``eval_mask``.

    ``target`` defaults to the observed values; pass the ground truth to score
    against the signal.
    """
    if target is None:
        target = matrix.filled(0.0)
    if eval_mask is None:
        eval_mask = matrix.mask
    if not np.any(eval_mask):
        raise ValueError("empty evaluation set")
    scores = {}
    fits = {}
    Z = None
    for lam in sorted(grid, reverse=True):
        res = soft_impute_complete(matrix, lam, max_iter, tol, init=Z)
        Z = res.theta_hat
        scores[lam] = float(np.mean((res.theta_hat[eval_mask] - target[eval_mask]) ** 2))
        fits[lam] = res
    best = min(sorted(scores), key=lambda lam: scores[lam])
    table = [{"lambda": float(lam), "score": scores[lam]} for lam in sorted(scores)]
    return float(best), fits[best], table
