"""Synthetic latent-factor data with MCAR or MNAR observation patterns.

Random streams
--------------
Every draw comes from numpy's PCG64 seeded through ``SeedSequence((seed,
replicate, purpose))`` with a fixed integer per purpose (row factors, column
factors, noise, observation mask, dead cells). Streams are independent, so
changing e.g. the noise level never perturbs the factors or the mask, and
replicates can be generated in any order or in parallel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import GroundTruth, LatentModel, Mechanism, ObservedMatrix

PURPOSES = {"row_factors": 1, "col_factors": 2, "noise": 3, "mask": 4, "dead": 5, "folds": 6, "neighbors": 7}


def stream(seed: int, replicate: int, purpose: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(replicate), PURPOSES[purpose]])))


def derived_seed(seed: int, replicate: int, purpose: str) -> int:
    """A 63-bit integer seed for components that take plain integer seeds."""
    return int(stream(seed, replicate, purpose).integers(0, 2**63 - 1))


def holder_signal(lam: float):
    """f(u, v) = |u + v|^lam * sgn(u + v) on 1-d factors, broadcast to an n x m grid."""

    def f(u, v):
        s = np.asarray(u, dtype=float).reshape(-1, 1) + np.asarray(v, dtype=float).reshape(1, -1)
        return np.abs(s) ** lam * np.sign(s)

    return f


@dataclass(frozen=True)
class SimConfig:
    n: int
    m: int
    lam: float = 1.0
    noise_sd: Optional[float] = None
    target_snr: Optional[float] = None
    mechanism: Mechanism = field(default_factory=Mechanism)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if not 0 < self.lam <= 1:
            raise ValueError("lambda must lie in (0, 1]")
        if (self.noise_sd is None) == (self.target_snr is None):
            raise ValueError("give exactly one of noise_sd and target_snr")
        if self.noise_sd is not None and self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.target_snr is not None and self.target_snr <= 0:
            raise ValueError("target_snr must be positive")


def snr(truth: GroundTruth, noise_sd: float) -> float:
    return float(np.sqrt(np.mean(truth.theta ** 2)) / noise_sd)


def noise_sd_for_target_snr(truth: GroundTruth, target_snr: float) -> float:
    return float(np.sqrt(np.mean(truth.theta ** 2)) / target_snr)


def draw_mask(mechanism: Mechanism, u: np.ndarray, v: np.ndarray, seed: int, replicate: int) -> np.ndarray:
    n, m = len(u), len(v)
    if mechanism.kind == "mcar":
        return stream(seed, replicate, "mask").random((n, m)) < mechanism.p
    alive = stream(seed, replicate, "dead").random((n, m)) >= mechanism.p_dead
    positive = (u.reshape(-1, 1) + v.reshape(1, -1)) > 0
    prob = mechanism.base + mechanism.bump * positive
    return alive & (stream(seed, replicate, "mask").random((n, m)) < prob)


def generate(config: SimConfig, replicate: int = 0) -> tuple[GroundTruth, ObservedMatrix, LatentModel]:
    """Draw factors, signal, noise and mask for one replicate.

    Unobserved cells hold NaN in the returned values.
    """
    seed = config.seed
    u = stream(seed, replicate, "row_factors").uniform(-0.5, 0.5, config.n)
    v = stream(seed, replicate, "col_factors").uniform(-0.5, 0.5, config.m)
    f = holder_signal(config.lam)
    truth = GroundTruth(f(u, v))
    sd = config.noise_sd if config.noise_sd is not None else noise_sd_for_target_snr(truth, config.target_snr)
    noise = stream(seed, replicate, "noise").standard_normal((config.n, config.m)) * sd
    mask = draw_mask(config.mechanism, u, v, seed, replicate)
    values = np.where(mask, truth.theta + noise, np.nan)
    model = LatentModel(u.reshape(-1, 1), v.reshape(-1, 1), config.lam, 2.0, sd, f, config.mechanism)
    return truth, ObservedMatrix(values, mask), model
