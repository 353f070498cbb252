"""Binary erasure channel and the two-point family of message distributions.

Convention: a distribution on half-log-likelihoods supported on {0, +inf} is
parameterized by its *revealed weight* ``r`` (mass at +inf).  The erasure mass
used by the scalar replica formula is ``x = 1 - r``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .seeding import as_rng


class Coupling(enum.Enum):
    ZERO = "zero"
    INF = "inf"

    @property
    def tanh(self) -> int:
        return 1 if self is Coupling.INF else 0


@dataclass(frozen=True)
class BecChannel:
    q: float  # erasure probability

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"erasure probability must lie in [0, 1], got {self.q}")

    @property
    def revealed(self) -> float:
        return 1.0 - self.q


@dataclass(frozen=True)
class PointMassMix:
    r_inf: float

    def __post_init__(self):
        if not 0.0 <= self.r_inf <= 1.0:
            raise ValueError(f"revealed weight must lie in [0, 1], got {self.r_inf}")

    @property
    def erasure_mass(self) -> float:
        return 1.0 - self.r_inf

    @classmethod
    def from_erasure_mass(cls, x: float) -> "PointMassMix":
        return cls(1.0 - x)

    def tanh_moment(self, p: int) -> float:
        """Integral of (tanh h)^p; tanh is 0 on the erased atom and 1 on the revealed one."""
        if p < 0:
            raise ValueError("moment order must be non-negative")
        if p == 0:
            return 1.0
        return self.r_inf


def sample_coupling(channel: BecChannel, rng) -> Coupling:
    rng = as_rng(rng)
    return Coupling.INF if rng.random() < channel.revealed else Coupling.ZERO


def sample_revealed(channel: BecChannel, size, rng) -> np.ndarray:
    """Vectorized draw; ``True`` marks an INF coupling."""
    rng = as_rng(rng)
    return rng.random(size) < channel.revealed


def bp_update_prob(channel: BecChannel, r: float, K: int) -> float:
    """Revealed weight of the factor-to-variable message given incoming weight ``r``.

    A factor message is revealed only if the observation and all K-1 incoming
    messages are revealed.
    """
    if K < 2:
        raise ValueError(f"factor degree must be >= 2, got {K}")
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"revealed weight must lie in [0, 1], got {r}")
    return channel.revealed * r ** (K - 1)


def check_symmetry_moments(dist: PointMassMix, k_max: int) -> bool:
    """Odd and even tanh-moments agree up to order 2*k_max (channel symmetry)."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    return all(
        dist.tanh_moment(2 * k - 1) == dist.tanh_moment(2 * k) for k in range(1, k_max + 1)
    )
