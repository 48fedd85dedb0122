"""Percentile grids for the squared radii and K-fold cross-validation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import ObservedMatrix, Radii
from .distances import DistanceTable, estimated_col_distances, estimated_row_distances
from .estimators import apply_fallback, complete, complete_from_neighborhoods, drnn_from_neighborhoods
from .neighborhoods import NeighborhoodSet, build_neighborhoods

# Percentile ranges used for the simulation grids (two-sided vs one-sided).
DEFAULT_PERCENTILES = {
    "tsnn": (1.5, 10.0),
    "otsnn": (1.5, 10.0),
    "drnn": (1.5, 10.0),
    "rownn": (1.5, 30.0),
    "colnn": (1.5, 30.0),
}
DEFAULT_GRID_POINTS = 8
# how a training entry is kept out of its own prediction while scoring the grid
LEAVE_OUT = ("none", "target", "cross")


@dataclass(frozen=True)
class PercentileSpec:
    lo: float
    hi: float
    count: int = DEFAULT_GRID_POINTS

    @classmethod
    def parse(cls, text: str) -> "PercentileSpec":
        """Parse ``lo:hi:t``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid percentiles must look like lo:hi:t, got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))

    def percentiles(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class EtaGrid:
    row_values: tuple
    col_values: tuple
    source_percentiles: tuple = ()
    # percentile that produced each value (aligned with the values); empty for explicit grids
    row_percentiles: tuple = ()
    col_percentiles: tuple = ()

    def __len__(self) -> int:
        return len(self.row_values) * len(self.col_values)


@dataclass(frozen=True)
class FoldPlan:
    kind: str  # "random" | "blocked"
    K: int
    folds: np.ndarray  # (n, m) int; -1 marks entries that are never in a test fold
    holdout_cols: Optional[int] = None

    def test_mask(self, fold_id: int) -> np.ndarray:
        return self.folds == fold_id

    def train_mask(self, matrix: ObservedMatrix, fold_id: int) -> np.ndarray:
        return matrix.mask & (self.folds != fold_id)


@dataclass
class TuneResult:
    radii: Radii
    score: float
    cv_table: list = field(default_factory=list)
    row_percentile: Optional[float] = None
    col_percentile: Optional[float] = None

    def transfer(self, row_table: Optional[DistanceTable], col_table: Optional[DistanceTable]) -> Radii:
        """Re-express the chosen radii on other distance tables through their percentiles.

        Used when tuning ran on a training subset but the final fit uses tables
        computed from every observed entry. Axes without a recorded percentile
        keep their tuned value.
        """
        r, c = self.radii.eta_row_sq, self.radii.eta_col_sq
        if self.row_percentile is not None and row_table is not None:
            r = eta_grid_from_percentiles(row_table, [self.row_percentile])[0]
        if self.col_percentile is not None and col_table is not None:
            c = eta_grid_from_percentiles(col_table, [self.col_percentile])[0]
        return Radii(r, c, self.radii.cap_row, self.radii.cap_col, self.radii.allow_self_neighbor)


def eta_grid_from_percentiles(table: DistanceTable, percentiles: Union[Sequence[float], PercentileSpec],
                              count: Optional[int] = None) -> list[float]:
    """Linear-interpolation quantiles of the finite off-diagonal distances.

    ``percentiles`` is either an explicit list, or a ``(lo, hi)`` pair expanded
    to ``count`` evenly spaced points. The result is ascending and deduplicated.
    """
    if isinstance(percentiles, PercentileSpec):
        pcts = percentiles.percentiles()
    elif count is not None:
        lo, hi = percentiles
        pcts = PercentileSpec(lo, hi, count).percentiles()
    else:
        pcts = np.asarray(percentiles, dtype=float)
    if np.any((pcts < 0) | (pcts > 100)):
        raise ValueError("percentiles must lie in [0, 100]")
    vals = table.offdiag_finite()
    if vals.size == 0:
        raise ValueError(f"{table.axis} distance table has no finite off-diagonal entries")
    q = np.percentile(vals, pcts, method="linear")
    return sorted(set(float(x) for x in np.atleast_1d(q)))


def grid_for_method(method: str, row_table: Optional[DistanceTable], col_table: Optional[DistanceTable],
                    spec: Optional[PercentileSpec] = None) -> EtaGrid:
    """Grid for one method; the unused axis of a one-sided method gets a single 0."""
    if method in ("allrow", "allcol"):
        return EtaGrid((0.0,), (0.0,))
    if spec is None:
        spec = PercentileSpec(*DEFAULT_PERCENTILES[method])
    pcts = spec.percentiles()

    def axis(table):
        # first percentile wins when two map to the same radius
        values = {}
        for p in pcts:
            values.setdefault(eta_grid_from_percentiles(table, [p])[0], float(p))
        keys = sorted(values)
        return tuple(keys), tuple(values[k] for k in keys)

    rows, row_p = axis(row_table) if method != "colnn" else ((0.0,), ())
    cols, col_p = axis(col_table) if method != "rownn" else ((0.0,), ())
    return EtaGrid(rows, cols, tuple(pcts), row_p, col_p)


def make_folds(matrix: ObservedMatrix, kind: str = "random", K: int = 5,
               holdout_cols: Optional[int] = None, seed: int = 0) -> FoldPlan:
    """Random-entry folds, or blocked folds over rows holding out trailing columns.

    Random mode deals a shuffled list of observed entries round-robin, so fold
    sizes differ by at most one.
    """
    if K < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF0]))
    n, m = matrix.shape
    folds = np.full((n, m), -1, dtype=np.int64)
    if kind == "random":
        obs = np.flatnonzero(matrix.mask)
        order = rng.permutation(obs)
        folds.flat[order] = np.arange(order.size) % K
    elif kind == "blocked":
        if holdout_cols is None or not 1 <= holdout_cols <= m:
            raise ValueError("blocked folds need 1 <= holdout_cols <= m")
        if n < K:
            raise ValueError("blocked folds need at least K rows")
        groups = np.array_split(rng.permutation(n), K)
        for k, rows in enumerate(groups):
            folds[np.ix_(rows, np.arange(m - holdout_cols, m))] = k
        folds[~matrix.mask] = -1
    else:
        raise ValueError(f"unknown fold kind {kind!r}")
    return FoldPlan(kind, K, folds, holdout_cols)


def _mse(values, mask, theta):
    resid = values[mask] - theta[mask]
    return float(np.mean(resid ** 2))


def tune(
    matrix: ObservedMatrix,
    method: str,
    grid: Union[EtaGrid, PercentileSpec, None] = None,
    plan: Optional[FoldPlan] = None,
    fold_id: int = 0,
    seed: int = 0,
    row_table: Optional[DistanceTable] = None,
    col_table: Optional[DistanceTable] = None,
    cap_row: Optional[int] = None,
    cap_col: Optional[int] = None,
    leave_out: str = "cross",
) -> TuneResult:
    """Pick the squared radii minimising training-entry squared error.

    With a ``plan`` the matrix is first restricted to the training entries of
    ``fold_id``. Distances are computed once from the training entries unless
    tables are supplied. Undefined predictions fall back to the training mean
    and exact score ties go to the lexicographically smaller radii.

    ``leave_out`` controls what each training entry (i, j) may use:
    ``"none"`` scores the plain fit, ``"target"`` drops the cell itself, and
    ``"cross"`` drops row i and column j from the neighborhoods. Neighbors are
    selected with distances that already contain X[i, j], so cells X[i, j']
    with j' a close column partly echo the target's own noise; ``"cross"``
    removes that echo and is the default.
    """
    if leave_out not in LEAVE_OUT:
        raise ValueError(f"leave_out must be one of {', '.join(LEAVE_OUT)}")
    exclude_target = leave_out == "target"
    allow_self = leave_out != "cross"
    train = matrix.restrict(plan.train_mask(matrix, fold_id)) if plan is not None else matrix
    if not train.mask.any():
        raise ValueError("no training entries")
    needs_rows = method not in ("colnn", "allrow", "allcol")
    needs_cols = method not in ("rownn", "allrow", "allcol")
    if row_table is None and needs_rows:
        row_table = estimated_row_distances(train)
    if col_table is None and needs_cols:
        col_table = estimated_col_distances(train)
    if grid is None or isinstance(grid, PercentileSpec):
        grid = grid_for_method(method, row_table, col_table, grid)
    if len(grid) == 0:
        raise ValueError("empty grid")
    fill = train.observed_mean()
    XA = train.filled(0.0)
    A = train.mask.astype(float)

    def row_set(r):
        if not needs_rows:
            return NeighborhoodSet.everything(train.n, "row") if method == "allrow" else NeighborhoodSet.singletons(train.n, "row")
        return build_neighborhoods(row_table, r, cap_row, allow_self, seed)

    def col_set(c):
        if not needs_cols:
            return NeighborhoodSet.everything(train.m, "column") if method == "allcol" else NeighborhoodSet.singletons(train.m, "column")
        return build_neighborhoods(col_table, c, cap_col, allow_self, seed)

    col_sets = [col_set(c) for c in grid.col_values]
    table = []
    best = None
    any_defined = False
    for r in grid.row_values:
        rs = row_set(r)
        if method == "drnn":
            results = [drnn_from_neighborhoods(train, rs, cs, exclude_target) for cs in col_sets]
        else:
            # share the row-side products across the column grid
            R = rs.indicator.astype(float)
            rnum = R @ XA
            rcnt = R @ A
            results = [complete_from_neighborhoods(train, rs, cs, exclude_target, (rnum, rcnt))
                       for cs in col_sets]
        for c, res in zip(grid.col_values, results):
            any_defined |= not res.undefined_mask.all()
            theta = apply_fallback(res, fill).theta_hat
            score = _mse(train.values, train.mask, theta)
            table.append({"eta_row_sq": float(r), "eta_col_sq": float(c), "score": score})
            if best is None or score < best[0]:
                best = (score, r, c)
    if not any_defined:
        raise ValueError("every grid point produced a fully undefined completion")
    score, r, c = best
    radii = Radii(float(r), float(c), cap_row, cap_col, True)
    row_p = grid.row_percentiles[grid.row_values.index(r)] if grid.row_percentiles else None
    col_p = grid.col_percentiles[grid.col_values.index(c)] if grid.col_percentiles else None
    return TuneResult(radii, score, table, row_p, col_p)


def test_error(
    matrix: ObservedMatrix,
    method: str,
    radii: Optional[Radii],
    plan: FoldPlan,
    fold_id: int,
    seed: int = 0,
) -> float:
    """Mean squared error on the observed entries of one test fold."""
    test = plan.test_mask(fold_id) & matrix.mask
    if not test.any():
        raise ValueError(f"fold {fold_id} has no observed test entries")
    train = matrix.restrict(plan.train_mask(matrix, fold_id))
    res = complete(train, method, radii, seed, exclude_target=True)
    theta = apply_fallback(res, train.observed_mean()).theta_hat
    return _mse(matrix.values, test, theta)


test_error.__test__ = False  # keep pytest from collecting the name
