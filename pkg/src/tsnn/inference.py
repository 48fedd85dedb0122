"""Noise-level estimates and per-entry normal confidence intervals."""
from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional, Union

import numpy as np

from .core import GroundTruth, ObservedMatrix
from .estimators import CompletionResult
from .neighborhoods import JointNeighborhood, NeighborhoodSet


@dataclass(frozen=True)
class NoiseEstimate:
    sigma_hat: float
    n_used: int


@dataclass(frozen=True)
class IntervalGrid:
    lower: np.ndarray
    upper: np.ndarray
    level: float
    sd_mode: str  # "oracle" | "estimated"
    adjusted: bool

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.lower) & np.isfinite(self.upper)


def normal_quantile(level: float) -> float:
    """Two-sided critical value z such that P(|Z| <= z) = level."""
    if not 0 < level < 1:
        if level == 0:
            return 0.0
        raise ValueError("level must lie in [0, 1)")
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def estimate_noise_sd(
    matrix: ObservedMatrix,
    result: CompletionResult,
    restrict_to: Optional[np.ndarray] = None,
) -> NoiseEstimate:
    """Root mean squared residual over observed (and optionally restricted) entries."""
    use = matrix.mask.copy()
    if restrict_to is not None:
        use &= np.asarray(restrict_to, dtype=bool)
    count = int(use.sum())
    if count == 0:
        raise ValueError("no observed entries to estimate the noise level from")
    if np.isnan(result.theta_hat[use]).any():
        raise ValueError("completion is undefined on some counted entries; apply a fallback first")
    resid = matrix.values[use] - result.theta_hat[use]
    return NoiseEstimate(float(np.sqrt(np.mean(resid ** 2))), count)


def within_neighborhood_sd(matrix: ObservedMatrix, joint: JointNeighborhood, theta_hat_ij: float) -> float:
    if joint.count <= 1:
        return 0.0
    vals = matrix.values[joint.pairs[:, 0], joint.pairs[:, 1]]
    return float(np.sqrt(np.sum((vals - theta_hat_ij) ** 2) / (joint.count - 1)))


def within_neighborhood_sd_grid(
    matrix: ObservedMatrix,
    result: CompletionResult,
    row_set: NeighborhoodSet,
    col_set: NeighborhoodSet,
    exclude_target: bool = False,
) -> np.ndarray:
    """``within_neighborhood_sd`` for every entry at once.

    Uses sum over the joint neighborhood of ``(X - t)^2 = S2 - 2 t S1 + c t^2``
    with S1, S2 from indicator products.
    """
    XA = matrix.filled(0.0)
    R = row_set.indicator.astype(float)
    C = col_set.indicator.astype(float)
    s1 = R @ XA @ C.T
    s2 = R @ (XA * XA) @ C.T
    if exclude_target:
        own = np.outer(np.diag(row_set.indicator), np.diag(col_set.indicator)) & matrix.mask
        s1 = s1 - np.where(own, XA, 0.0)
        s2 = s2 - np.where(own, XA * XA, 0.0)
    c = result.neighbor_count.astype(float)
    t = np.where(result.undefined_mask, 0.0, result.theta_hat)
    ss = np.maximum(s2 - 2 * t * s1 + c * t * t, 0.0)
    out = np.zeros(matrix.shape)
    big = c > 1
    out[big] = np.sqrt(ss[big] / (c[big] - 1))
    return out


def confidence_intervals(
    result: CompletionResult,
    sd: Union[float, np.ndarray],
    level: float = 0.95,
    within_sd: Optional[np.ndarray] = None,
    sd_mode: str = "estimated",
) -> IntervalGrid:
    """theta_hat +/- z * sd / sqrt(count); entries with count 0 get NaN bounds.

    ``within_sd`` switches on the finite-sample adjustment: the per-entry SD
    becomes ``sd + within_sd``.
    """
    z = normal_quantile(level)
    total_sd = np.broadcast_to(np.asarray(sd, dtype=float), result.shape)
    if within_sd is not None:
        total_sd = total_sd + within_sd
    count = result.neighbor_count
    ok = count > 0
    half = np.full(result.shape, np.nan)
    half[ok] = z * total_sd[ok] / np.sqrt(count[ok])
    centre = np.where(ok, result.theta_hat, np.nan)
    return IntervalGrid(centre - half, centre + half, level, sd_mode, within_sd is not None)


def coverage_rate(intervals: IntervalGrid, truth: GroundTruth, eval_set: np.ndarray) -> float:
    """Fraction of evaluated entries with lower <= theta <= upper; undefined entries are skipped."""
    use = np.asarray(eval_set, dtype=bool) & intervals.defined
    if not use.any():
        raise ValueError("no evaluable entries")
    theta = truth.theta[use]
    hit = (intervals.lower[use] <= theta) & (theta <= intervals.upper[use])
    return float(hit.mean())
