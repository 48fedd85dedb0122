"""Pairwise squared distances between rows (or columns) of a partially observed matrix."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .core import GroundTruth, LatentModel, ObservedMatrix


@dataclass(frozen=True)
class DistanceTable:
    d_sq: np.ndarray
    overlap: np.ndarray
    axis: str  # "row" | "column"

    @property
    def size(self) -> int:
        return self.d_sq.shape[0]

    def offdiag_finite(self) -> np.ndarray:
        """Finite off-diagonal entries, each unordered pair once."""
        iu = np.triu_indices(self.size, k=1)
        vals = self.d_sq[iu]
        return vals[np.isfinite(vals)]


@numba.njit(cache=True, parallel=True)
def _pairwise_masked(values, mask, d_sq, overlap):
    k, width = values.shape
    for a in numba.prange(k):
        for b in range(a + 1, k):
            total = 0.0
            count = 0
            for j in range(width):
                if mask[a, j] and mask[b, j]:
                    diff = values[a, j] - values[b, j]
                    total += diff * diff
                    count += 1
            overlap[a, b] = count
            overlap[b, a] = count
            if count > 0:
                d = total / count
            else:
                d = np.inf
            d_sq[a, b] = d
            d_sq[b, a] = d


def _masked_table(values: np.ndarray, mask: np.ndarray, noise_var: Optional[float], axis: str) -> DistanceTable:
    values = np.ascontiguousarray(values, dtype=np.float64)
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    k = values.shape[0]
    d_sq = np.zeros((k, k))
    overlap = np.zeros((k, k), dtype=np.int64)
    _pairwise_masked(values, mask, d_sq, overlap)
    np.fill_diagonal(overlap, mask.sum(axis=1))
    if noise_var is not None:
        if noise_var < 0:
            raise ValueError("noise_var must be nonnegative")
        off = ~np.eye(k, dtype=bool) & np.isfinite(d_sq)
        d_sq[off] -= 2.0 * noise_var
    np.fill_diagonal(d_sq, 0.0)
    d_sq.flags.writeable = False
    overlap.flags.writeable = False
    return DistanceTable(d_sq, overlap, axis)


def estimated_row_distances(matrix: ObservedMatrix, noise_var: Optional[float] = None) -> DistanceTable:
    """Mean squared difference over co-observed columns for every pair of rows.

    Pairs with no co-observed column get ``inf``. When ``noise_var`` is given,
    every finite off-diagonal entry is shifted down by ``2 * noise_var``
    (entries may go negative; they are not clamped).
    """
    return _masked_table(matrix.values, matrix.mask, noise_var, "row")


def estimated_col_distances(matrix: ObservedMatrix, noise_var: Optional[float] = None) -> DistanceTable:
    return _masked_table(matrix.values.T, matrix.mask.T, noise_var, "column")


def _full_table(values: np.ndarray, axis: str) -> DistanceTable:
    return _masked_table(values, np.ones(values.shape, dtype=bool), None, axis)


def oracle_row_distances(truth: GroundTruth) -> DistanceTable:
    return _full_table(truth.theta, "row")


def oracle_col_distances(truth: GroundTruth) -> DistanceTable:
    return _full_table(truth.theta.T, "column")


def latent_row_distances(model: LatentModel) -> DistanceTable:
    """Mean squared coordinate difference between row latent factors."""
    return _full_table(model.u, "row")


def latent_col_distances(model: LatentModel) -> DistanceTable:
    return _full_table(model.v, "column")


def table_to_rows(table: DistanceTable) -> list[list[str]]:
    """Text cells for a CSV dump, with ``inf`` for infinite entries."""
    return [["inf" if np.isinf(x) else repr(float(x)) for x in row] for row in table.d_sq]
