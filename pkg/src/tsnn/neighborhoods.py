"""Fixed-radius neighborhoods over a DistanceTable, with an optional size cap."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ObservedMatrix
from .distances import DistanceTable

_AXIS_TAG = {"row": 0, "column": 1}


@dataclass(frozen=True)
class NeighborhoodSet:
    axis: str
    indicator: np.ndarray  # (k, k) bool, indicator[a, b] = b is a neighbor of a
    radius_sq: float
    capped: np.ndarray  # (k,) bool

    @property
    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.indicator]

    @property
    def sizes(self) -> np.ndarray:
        return self.indicator.sum(axis=1)

    @classmethod
    def singletons(cls, k: int, axis: str) -> "NeighborhoodSet":
        return cls(axis, np.eye(k, dtype=bool), 0.0, np.zeros(k, dtype=bool))

    @classmethod
    def everything(cls, k: int, axis: str) -> "NeighborhoodSet":
        return cls(axis, np.ones((k, k), dtype=bool), np.inf, np.zeros(k, dtype=bool))


@dataclass(frozen=True)
class JointNeighborhood:
    pairs: np.ndarray  # (count, 2) int

    @property
    def count(self) -> int:
        return len(self.pairs)


def neighbor_stream(seed: int, axis: str, index: int) -> np.random.Generator:
    """Independent generator for the subsample drawn at one index."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _AXIS_TAG[axis], int(index)]))


def build_neighborhoods(
    table: DistanceTable,
    radius_sq: float,
    cap: Optional[int] = None,
    allow_self: bool = True,
    seed: int = 0,
) -> NeighborhoodSet:
    """All b with ``d_sq[a, b] <= radius_sq``; ties at the radius are included.

    When ``cap`` is given and a set is larger, a uniform subset without
    replacement is kept. Self (if allowed) always survives the subsample.
    Each index draws from its own stream derived from ``(seed, axis, a)``.
    """
    if cap is not None and cap < 1:
        raise ValueError("cap must be >= 1")
    k = table.size
    ind = table.d_sq <= radius_sq
    diag = np.arange(k)
    ind[diag, diag] = allow_self
    capped = np.zeros(k, dtype=bool)
    if cap is not None:
        for a in np.flatnonzero(ind.sum(axis=1) > cap):
            others = np.flatnonzero(ind[a])
            others = others[others != a]
            keep = cap - 1 if allow_self else cap
            rng = neighbor_stream(seed, table.axis, a)
            chosen = rng.choice(others, size=keep, replace=False)
            row = np.zeros(k, dtype=bool)
            row[chosen] = True
            row[a] = allow_self
            ind[a] = row
            capped[a] = True
    ind.flags.writeable = False
    return NeighborhoodSet(table.axis, ind, float(radius_sq), capped)


def joint_neighborhood(
    row_set: NeighborhoodSet,
    col_set: NeighborhoodSet,
    matrix: ObservedMatrix,
    i: int,
    j: int,
    exclude_target: bool = False,
) -> JointNeighborhood:
    rows = np.flatnonzero(row_set.indicator[i])
    cols = np.flatnonzero(col_set.indicator[j])
    sub = matrix.mask[np.ix_(rows, cols)].copy()
    if exclude_target:
        sub[rows == i, :] &= ~(cols == j)
    r, c = np.nonzero(sub)
    return JointNeighborhood(np.column_stack([rows[r], cols[c]]).astype(int))
