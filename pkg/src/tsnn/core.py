"""Data containers shared across the package.

Missing entries are carried by an explicit boolean mask. Values under a
zero mask are never read, so callers may leave anything there (NaN, 0, ...).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class ObservedMatrix:
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != mask.shape:
            raise ValueError(f"values shape {values.shape} != mask shape {mask.shape}")
        if values.ndim != 2:
            raise ValueError("values must be a 2-d array")
        values = values.copy()
        mask = mask.copy()
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def full(cls, values) -> "ObservedMatrix":
        values = np.asarray(values, dtype=float)
        return cls(values, np.ones(values.shape, dtype=bool))

    @classmethod
    def from_nan(cls, values) -> "ObservedMatrix":
        """Build from an array where NaN marks a missing entry."""
        values = np.asarray(values, dtype=float)
        return cls(values, ~np.isnan(values))

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Dense copy with unobserved cells set to ``fill``."""
        return np.where(self.mask, self.values, fill)

    def transpose(self) -> "ObservedMatrix":
        return ObservedMatrix(self.values.T, self.mask.T)

    @property
    def T(self) -> "ObservedMatrix":
        return self.transpose()

    def restrict(self, keep: np.ndarray) -> "ObservedMatrix":
        """Same values, mask intersected with ``keep``."""
        return ObservedMatrix(self.values, self.mask & np.asarray(keep, dtype=bool))

    def observed_mean(self) -> float:
        if not self.mask.any():
            return float("nan")
        return float(self.values[self.mask].mean())


@dataclass(frozen=True)
class GroundTruth:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @property
    def shape(self) -> tuple[int, int]:
        return self.theta.shape


@dataclass(frozen=True)
class Mechanism:
    """Missingness mechanism descriptor.

    ``kind`` is ``"mcar"`` (iid Bernoulli(p)) or ``"mnar"``: each cell is
    dead with probability ``p_dead``; a live cell is observed with
    probability ``base + bump * 1(u + v > 0)``.
    """

    kind: str = "mcar"
    p: float = 0.75
    p_dead: float = 0.2
    base: float = 0.4
    bump: float = 0.2

    def __post_init__(self):
        if self.kind not in ("mcar", "mnar"):
            raise ValueError(f"unknown mechanism {self.kind!r}")
        if self.kind == "mcar" and not 0 < self.p <= 1:
            raise ValueError("MCAR p must lie in (0, 1]")
        if self.kind == "mnar":
            if not 0 <= self.p_dead < 1:
                raise ValueError("p_dead must lie in [0, 1)")
            if not (0 <= self.base <= 1 and 0 <= self.base + self.bump <= 1):
                raise ValueError("base and base + bump must lie in [0, 1]")


@dataclass(frozen=True)
class LatentModel:
    u: np.ndarray  # (n, d1)
    v: np.ndarray  # (m, d2)
    lam: float
    holder_const: float
    noise_sd: float
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    mechanism: Mechanism = field(default_factory=Mechanism)

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError("lambda must lie in (0, 1]")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.holder_const <= 0:
            raise ValueError("holder_const must be positive")
        object.__setattr__(self, "u", np.atleast_2d(np.asarray(self.u, dtype=float).reshape(len(self.u), -1)))
        object.__setattr__(self, "v", np.atleast_2d(np.asarray(self.v, dtype=float).reshape(len(self.v), -1)))

    def theta(self) -> np.ndarray:
        return self.f(self.u, self.v)


@dataclass(frozen=True)
class Radii:
    eta_row_sq: float
    eta_col_sq: float
    cap_row: Optional[int] = None
    cap_col: Optional[int] = None
    allow_self_neighbor: bool = True

    def __post_init__(self):
        if self.eta_row_sq < 0 or self.eta_col_sq < 0:
            raise ValueError("squared radii must be nonnegative")
        for name in ("cap_row", "cap_col"):
            cap = getattr(self, name)
            if cap is not None and cap < 1:
                raise ValueError(f"{name} must be >= 1 when given")


def validate(matrix: ObservedMatrix) -> list[str]:
    """Return a list of invariant violations; empty when the matrix is well formed."""
    problems = []
    n, m = matrix.values.shape
    if n < 1:
        problems.append("n >= 1 violated: matrix has no rows")
    if m < 1:
        problems.append("m >= 1 violated: matrix has no columns")
    bad = matrix.mask & ~np.isfinite(matrix.values)
    for i, j in zip(*np.nonzero(bad)):
        problems.append(f"non-finite observed value at ({int(i)}, {int(j)})")
    return problems


def observed_fraction(matrix: ObservedMatrix) -> float:
    n, m = matrix.shape
    return int(matrix.mask.sum()) / (n * m)
