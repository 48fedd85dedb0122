"""Nearest-neighbor completion estimators.

TS-NN averages observed entries over the product of a row neighborhood and a
column neighborhood. Row-NN and Col-NN are the one-sided special cases, DR-NN
averages the doubly-robust combination ``X[i', j] + X[i, j'] - X[i', j']``
over neighbor pairs where all three cells are observed.

With indicator matrices R (rows) and C (columns) the TS-NN numerator and
count for every entry are ``R @ (X*A) @ C.T`` and ``R @ A @ C.T``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numba
import numpy as np

from .core import ObservedMatrix, Radii
from .distances import DistanceTable, estimated_col_distances, estimated_row_distances
from .neighborhoods import NeighborhoodSet, build_neighborhoods

METHODS = ("tsnn", "rownn", "colnn", "drnn", "allrow", "allcol")


@dataclass(frozen=True)
class CompletionResult:
    theta_hat: np.ndarray
    neighbor_count: np.ndarray
    undefined_mask: np.ndarray
    filled: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.theta_hat.shape

    def transpose(self) -> "CompletionResult":
        return CompletionResult(self.theta_hat.T, self.neighbor_count.T, self.undefined_mask.T, self.filled)


def _result(num: np.ndarray, cnt: np.ndarray) -> CompletionResult:
    count = np.rint(cnt).astype(np.int64)
    undefined = count == 0
    theta = np.full(num.shape, np.nan)
    np.divide(num, count, out=theta, where=~undefined)
    return CompletionResult(theta, count, undefined)


def apply_fallback(result: CompletionResult, value: float) -> CompletionResult:
    """Fill undefined entries with ``value`` (usually the global observed mean)."""
    if not result.undefined_mask.any():
        return replace(result, filled=True)
    theta = np.where(result.undefined_mask, value, result.theta_hat)
    return replace(result, theta_hat=theta, filled=True)


def complete_from_neighborhoods(
    matrix: ObservedMatrix,
    row_set: NeighborhoodSet,
    col_set: NeighborhoodSet,
    exclude_target: bool = False,
    row_products: Optional[tuple] = None,
) -> CompletionResult:
    """TS-NN averaging step for given neighborhoods.

    ``row_products`` may carry precomputed ``(R @ (X*A), R @ A)`` so a grid
    search can reuse them across column radii.
    """
    XA = matrix.filled(0.0)
    if row_products is None:
        R = row_set.indicator.astype(float)
        row_products = (R @ XA, R @ matrix.mask.astype(float))
    C = col_set.indicator.astype(float)
    num = row_products[0] @ C.T
    cnt = row_products[1] @ C.T
    if exclude_target:
        own = np.outer(np.diag(row_set.indicator), np.diag(col_set.indicator)) & matrix.mask
        num = num - np.where(own, XA, 0.0)
        cnt = cnt - own
    return _result(num, cnt)


def _tables(matrix, row_table, col_table):
    if row_table is None:
        row_table = estimated_row_distances(matrix)
    if col_table is None:
        col_table = estimated_col_distances(matrix)
    return row_table, col_table


def tsnn_complete(
    matrix: ObservedMatrix,
    radii: Radii,
    seed: int = 0,
    row_table: Optional[DistanceTable] = None,
    col_table: Optional[DistanceTable] = None,
    exclude_target: bool = False,
) -> CompletionResult:
    row_table, col_table = _tables(matrix, row_table, col_table)
    rows = build_neighborhoods(row_table, radii.eta_row_sq, radii.cap_row, radii.allow_self_neighbor, seed)
    cols = build_neighborhoods(col_table, radii.eta_col_sq, radii.cap_col, radii.allow_self_neighbor, seed)
    return complete_from_neighborhoods(matrix, rows, cols, exclude_target)


def rownn_complete(
    matrix: ObservedMatrix,
    eta_row_sq: float,
    seed: int = 0,
    row_table: Optional[DistanceTable] = None,
    cap: Optional[int] = None,
    allow_self: bool = True,
    exclude_target: bool = False,
) -> CompletionResult:
    if row_table is None:
        row_table = estimated_row_distances(matrix)
    rows = build_neighborhoods(row_table, eta_row_sq, cap, allow_self, seed)
    cols = NeighborhoodSet.singletons(matrix.m, "column")
    return complete_from_neighborhoods(matrix, rows, cols, exclude_target)


def colnn_complete(
    matrix: ObservedMatrix,
    eta_col_sq: float,
    seed: int = 0,
    col_table: Optional[DistanceTable] = None,
    cap: Optional[int] = None,
    allow_self: bool = True,
    exclude_target: bool = False,
) -> CompletionResult:
    if col_table is None:
        col_table = estimated_col_distances(matrix)
    rows = NeighborhoodSet.singletons(matrix.n, "row")
    cols = build_neighborhoods(col_table, eta_col_sq, cap, allow_self, seed)
    return complete_from_neighborhoods(matrix, rows, cols, exclude_target)


def allrow_complete(matrix: ObservedMatrix, exclude_target: bool = False) -> CompletionResult:
    """Every row is a neighbor: observed column means."""
    rows = NeighborhoodSet.everything(matrix.n, "row")
    cols = NeighborhoodSet.singletons(matrix.m, "column")
    return complete_from_neighborhoods(matrix, rows, cols, exclude_target)


def allcol_complete(matrix: ObservedMatrix, exclude_target: bool = False) -> CompletionResult:
    rows = NeighborhoodSet.singletons(matrix.n, "row")
    cols = NeighborhoodSet.everything(matrix.m, "column")
    return complete_from_neighborhoods(matrix, rows, cols, exclude_target)


def _csr(indicator: np.ndarray):
    counts = indicator.sum(axis=1)
    ptr = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, np.nonzero(indicator)[1].astype(np.int64)


@numba.njit(cache=True, parallel=True)
def _drnn_kernel(values, mask, rptr, ridx, cptr, cidx, exclude_target, num, cnt):
    n, m = values.shape
    for i in numba.prange(n):
        for j in range(m):
            total = 0.0
            count = 0
            for a in range(rptr[i], rptr[i + 1]):
                ip = ridx[a]
                if not mask[ip, j]:
                    continue
                if exclude_target and ip == i:
                    continue
                for b in range(cptr[j], cptr[j + 1]):
                    jp = cidx[b]
                    if exclude_target and jp == j:
                        continue
                    if mask[i, jp] and mask[ip, jp]:
                        total += values[ip, j] + values[i, jp] - values[ip, jp]
                        count += 1
            num[i, j] = total
            cnt[i, j] = count


def drnn_from_neighborhoods(
    matrix: ObservedMatrix,
    row_set: NeighborhoodSet,
    col_set: NeighborhoodSet,
    exclude_target: bool = False,
) -> CompletionResult:
    """DR-NN average over admissible (i', j') pairs.

    With ``exclude_target`` every term that would read the target cell is
    dropped, i.e. pairs with ``i' == i`` or ``j' == j``.
    """
    values = np.ascontiguousarray(matrix.filled(0.0))
    mask = np.ascontiguousarray(matrix.mask)
    rptr, ridx = _csr(row_set.indicator)
    cptr, cidx = _csr(col_set.indicator)
    num = np.zeros(matrix.shape)
    cnt = np.zeros(matrix.shape, dtype=np.int64)
    _drnn_kernel(values, mask, rptr, ridx, cptr, cidx, exclude_target, num, cnt)
    return _result(num, cnt)


def drnn_complete(
    matrix: ObservedMatrix,
    radii: Radii,
    seed: int = 0,
    row_table: Optional[DistanceTable] = None,
    col_table: Optional[DistanceTable] = None,
    exclude_target: bool = False,
) -> CompletionResult:
    row_table, col_table = _tables(matrix, row_table, col_table)
    rows = build_neighborhoods(row_table, radii.eta_row_sq, radii.cap_row, radii.allow_self_neighbor, seed)
    cols = build_neighborhoods(col_table, radii.eta_col_sq, radii.cap_col, radii.allow_self_neighbor, seed)
    return drnn_from_neighborhoods(matrix, rows, cols, exclude_target)


def complete(
    matrix: ObservedMatrix,
    method: str,
    radii: Optional[Radii] = None,
    seed: int = 0,
    row_table: Optional[DistanceTable] = None,
    col_table: Optional[DistanceTable] = None,
    exclude_target: bool = False,
) -> CompletionResult:
    """Dispatch by method name; one-sided methods read only their own radius."""
    if method in ("allrow", "allcol"):
        fn = allrow_complete if method == "allrow" else allcol_complete
        return fn(matrix, exclude_target=exclude_target)
    if radii is None:
        raise ValueError(f"method {method!r} needs radii")
    if method == "tsnn":
        return tsnn_complete(matrix, radii, seed, row_table, col_table, exclude_target)
    if method == "drnn":
        return drnn_complete(matrix, radii, seed, row_table, col_table, exclude_target)
    if method == "rownn":
        return rownn_complete(matrix, radii.eta_row_sq, seed, row_table, radii.cap_row,
                              radii.allow_self_neighbor, exclude_target)
    if method == "colnn":
        return colnn_complete(matrix, radii.eta_col_sq, seed, col_table, radii.cap_col,
                              radii.allow_self_neighbor, exclude_target)
    raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
