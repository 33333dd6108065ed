from __future__ import annotations

import math

import numpy as np

from ..estimator import TargetSequence


class Model(TargetSequence):
    """A target sequence that also knows how to draw initial states.

    Models whose levels are likelihoods under a zero-mean Gaussian prior set
    ``prior_chol``; samplers other than ESS then add :meth:`log_gaussian_prior`
    themselves.
    """

    name = "model"
    prior_chol: np.ndarray | None = None

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        if self.prior_chol is None:
            raise NotImplementedError
        return self.prior_chol @ rng.standard_normal(self.prior_chol.shape[0])

    def log_gaussian_prior(self, theta) -> float:
        if self.prior_chol is None:
            return 0.0
        L = self.prior_chol
        z = np.linalg.solve(L, np.asarray(theta, dtype=float))
        return float(-0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * L.shape[0] * math.log(2 * math.pi))


class ConstantSequence(Model):
    """``pi_k = pi_1`` for every ``k``; the fidelity conditional is then ``mu``."""

    name = "constant"
    incremental = True

    def __init__(self, log_density, dim: int = 1, prior_sampler=None, cost_per_level: float = 1.0):
        self._log_density = log_density
        self.dim = dim
        self._prior_sampler = prior_sampler
        self._cost = cost_per_level

    def log_pi(self, theta, k: int) -> float:
        return float(self._log_density(theta))

    def cost(self, k: int) -> float:
        return self._cost * k

    def sample_prior(self, rng):
        if self._prior_sampler is None:
            return rng.standard_normal(self.dim)
        return np.asarray(self._prior_sampler(rng), dtype=float)
