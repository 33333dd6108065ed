"""Truncation distributions over fidelities and estimator weight rules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_K_MAX = 10**6


class FidelityCapExceeded(RuntimeError):
    """A sampled fidelity exceeded the configured hard cap."""


class EstimatorScheme(str, enum.Enum):
    RUSSIAN_ROULETTE = "rr"
    SINGLE_TERM = "single-term"

    @classmethod
    def parse(cls, value) -> EstimatorScheme:
        if isinstance(value, cls):
            return value
        aliases = {
            "rr": cls.RUSSIAN_ROULETTE,
            "russian-roulette": cls.RUSSIAN_ROULETTE,
            "russian_roulette": cls.RUSSIAN_ROULETTE,
            "single-term": cls.SINGLE_TERM,
            "single_term": cls.SINGLE_TERM,
            "st": cls.SINGLE_TERM,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown estimator scheme {value!r}") from None


class TruncationDistribution:
    """Distribution over the fidelities ``{1, 2, ...}``."""

    k_max: int = DEFAULT_K_MAX

    def log_pmf(self, k: int) -> float:
        raise NotImplementedError

    def log_survival(self, k: int) -> float:
        """``log P(K >= k)``."""
        raise NotImplementedError

    def draw(self, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def pmf(self, k: int) -> float:
        return math.exp(self.log_pmf(k))

    def survival(self, k: int) -> float:
        return math.exp(self.log_survival(k))

    def sample(self, rng: np.random.Generator) -> int:
        k = self.draw(rng)
        if k > self.k_max:
            raise FidelityCapExceeded(f"sampled fidelity {k} exceeds k_max={self.k_max}")
        return k


@dataclass(frozen=True)
class Geometric(TruncationDistribution):
    """``P(K = k) = gamma0 * (1 - gamma0)**(k - 1)`` for ``k >= 1``."""

    gamma0: float
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self):
        if not 0.0 < self.gamma0 < 1.0:
            raise ValueError(f"gamma0 must lie in (0, 1), got {self.gamma0!r}")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")

    def log_pmf(self, k: int) -> float:
        _check_level(k)
        return math.log(self.gamma0) + (k - 1) * math.log1p(-self.gamma0)

    def log_survival(self, k: int) -> float:
        _check_level(k)
        return (k - 1) * math.log1p(-self.gamma0)

    def draw(self, rng: np.random.Generator) -> int:
        return int(rng.geometric(self.gamma0))

    @property
    def mean(self) -> float:
        return 1.0 / self.gamma0


def _check_level(k: int) -> None:
    if k < 1:
        raise ValueError(f"fidelity must be >= 1, got {k}")


def pmf(dist: TruncationDistribution, k: int) -> float:
    return dist.pmf(k)


def sample(dist: TruncationDistribution, rng: np.random.Generator) -> int:
    return dist.sample(rng)


def log_weight(scheme, k: int, K: int, dist: TruncationDistribution) -> float:
    """Log of the telescoping weight ``w_{k,K}``; ``-inf`` where it vanishes."""
    scheme = EstimatorScheme.parse(scheme)
    _check_level(k)
    if k > K:
        raise ValueError(f"term index k={k} exceeds truncation level K={K}")
    if scheme is EstimatorScheme.RUSSIAN_ROULETTE:
        return -dist.log_survival(k)
    if k != K:
        return -math.inf
    return -dist.log_pmf(K)


def weight(scheme, k: int, K: int, dist: TruncationDistribution) -> float:
    return math.exp(log_weight(scheme, k, K, dist))
