"""Conjugate Gaussian mean model with a shrinking-variance likelihood sequence.

Data ``x_n ~ N(theta, sigma_k^2)`` with ``sigma_k^2 = 1 + 2 / k^2`` and a
``N(0, 1)`` prior on ``theta``.  The limit ``sigma^2 = 1`` has a closed-form
posterior.  Level ``k`` is priced at ``k`` cost units.
"""

from __future__ import annotations

import math

import numpy as np

from .base import Model

LOG_2PI = math.log(2.0 * math.pi)


def sigma2(k: float, sigma_inf2: float = 1.0) -> float:
    """Likelihood variance at fidelity ``k``; ``k = inf`` gives the limit."""
    if math.isinf(k):
        return sigma_inf2
    return sigma_inf2 + 2.0 / k**2


def toy_loglik(theta: float, k: float, data) -> float:
    s2 = sigma2(k)
    x = np.asarray(data, dtype=float)
    return float(np.sum(-0.5 * (LOG_2PI + math.log(s2)) - 0.5 * (x - theta) ** 2 / s2))


def toy_posterior_closed_form(data, sigma_inf2: float = 1.0) -> tuple[float, float]:
    """Posterior ``(mean, variance)`` under the limiting likelihood."""
    x = np.asarray(data, dtype=float)
    var = 1.0 / (1.0 + x.size / sigma_inf2)
    return var * float(np.sum(x)) / sigma_inf2, var


class ToyConjugateModel(Model):
    name = "toy"
    dim = 1
    incremental = True

    def __init__(self, data, sigma_inf2: float = 1.0):
        self.data = np.asarray(data, dtype=float)
        self.sigma_inf2 = float(sigma_inf2)
        self._n = self.data.size
        self._sum = float(np.sum(self.data))
        self._sumsq = float(np.sum(self.data**2))

    def _sq(self, t: float) -> float:
        # sum_n (x_n - t)^2 from sufficient statistics
        return self._sumsq - 2.0 * t * self._sum + self._n * t * t

    def _log_target(self, theta, s2: float) -> float:
        t = float(np.asarray(theta).reshape(-1)[0])
        log_prior = -0.5 * (LOG_2PI + t * t)
        return log_prior - 0.5 * self._n * (LOG_2PI + math.log(s2)) - 0.5 * self._sq(t) / s2

    def log_pi(self, theta, k: int) -> float:
        return self._log_target(theta, sigma2(k, self.sigma_inf2))

    def log_pi_limit(self, theta) -> float:
        """Unnormalized limiting log target (prior times limiting likelihood)."""
        return self._log_target(theta, self.sigma_inf2)

    def cost(self, k: int) -> float:
        return float(k)

    def level_cost(self, k: int) -> float:
        return 1.0

    def sample_prior(self, rng):
        return rng.standard_normal(1)

    def posterior(self) -> tuple[float, float]:
        return toy_posterior_closed_form(self.data, self.sigma_inf2)


def generate_toy_data(rng: np.random.Generator, n: int = 200) -> tuple[np.ndarray, float]:
    """Draw ``theta0 ~ N(0, 1)`` and ``n`` observations from the limiting likelihood."""
    theta0 = float(rng.standard_normal())
    return theta0 + rng.standard_normal(n), theta0
