"""Log Gaussian Cox process on an interval with a quadrature likelihood sequence.

The latent log intensity ``f`` is a zero-mean GP with a squared-exponential
kernel.  The sampled state is ``f`` at the event locations.  Level ``k``
integrates ``1 - exp(f)`` with the trapezoid rule on ``2k + c`` uniform
nodes.  The values of ``f`` at those nodes are drawn from the GP conditional
given the state; the noise behind those draws is frozen for one chain
iteration and redrawn by :meth:`LGCPModel.refresh`.
"""

from __future__ import annotations

import numpy as np

from ..numerics import Grid1D, cholesky, conditional_operator, se_kernel_matrix, trapezoid
from .base import Model


class GridMismatch(ValueError):
    pass


def quadrature_nodes(k: int, offset: int = 10) -> int:
    if k < 1:
        raise ValueError("fidelity must be >= 1")
    return 2 * k + offset


def lgcp_loglik(f_events, f_quad, k: int, domain: tuple[float, float], offset: int = 10) -> float:
    """``I_k(1 - exp(f)) + sum_n f(X_n)`` on ``2k + offset`` uniform nodes."""
    f_quad = np.asarray(f_quad, dtype=float)
    n = quadrature_nodes(k, offset)
    if f_quad.shape != (n,):
        raise GridMismatch(f"level {k} needs {n} quadrature values, got shape {f_quad.shape}")
    grid = Grid1D.uniform(domain[0], domain[1], n)
    return trapezoid(-np.expm1(f_quad), grid) + float(np.sum(f_events))


class LGCPModel(Model):
    name = "lgcp"

    def __init__(self, events, domain: tuple[float, float], lengthscale: float = 20.0,
                 variance: float = 1.0, offset: int = 10):
        events = np.sort(np.asarray(events, dtype=float))
        a, b = float(domain[0]), float(domain[1])
        if not a < b:
            raise ValueError("domain must satisfy a < b")
        if events.size and (events[0] < a or events[-1] > b):
            raise ValueError("events must lie inside the domain")
        self.events = events
        self.domain = (a, b)
        self.lengthscale = float(lengthscale)
        self.variance = float(variance)
        self.offset = int(offset)
        self.dim = events.size
        S_oo = se_kernel_matrix(events, events, self.lengthscale, self.variance)
        self.prior_chol = cholesky(S_oo, jitter_scale=self.variance)
        # condition on the jittered covariance the state is actually drawn from
        self._S_oo = self.prior_chol @ self.prior_chol.T
        self._ops: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._noise: dict[int, np.ndarray] = {}
        self._aux_seed = 0

    def nodes(self, k: int) -> np.ndarray:
        return np.linspace(*self.domain, quadrature_nodes(k, self.offset))

    def _operator(self, k: int):
        op = self._ops.get(k)
        if op is None:
            x = self.nodes(k)
            S_no = se_kernel_matrix(x, self.events, self.lengthscale, self.variance)
            S_nn = se_kernel_matrix(x, x, self.lengthscale, self.variance)
            A, C = conditional_operator(self._S_oo, S_no, S_nn, jitter_scale=self.variance)
            op = self._ops[k] = (A, cholesky(C, jitter_scale=self.variance))
        return op

    def _eps(self, k: int) -> np.ndarray:
        eps = self._noise.get(k)
        if eps is None:
            rng = np.random.default_rng([self._aux_seed, k])
            eps = self._noise[k] = rng.standard_normal(quadrature_nodes(k, self.offset))
        return eps

    def quadrature_values(self, f_events, k: int) -> np.ndarray:
        A, L = self._operator(k)
        return A @ np.asarray(f_events, dtype=float) + L @ self._eps(k)

    def refresh(self, rng) -> bool:
        self._aux_seed = int(rng.integers(2**63))
        self._noise.clear()
        return True

    def log_pi(self, theta, k: int) -> float:
        f = np.asarray(theta, dtype=float)
        if f.shape != self.events.shape:
            raise GridMismatch(f"state has shape {f.shape}, expected {self.events.shape}")
        return lgcp_loglik(f, self.quadrature_values(f, k), k, self.domain, self.offset)

    def cost(self, k: int) -> float:
        return float(quadrature_nodes(k, self.offset))

    def level_cost(self, k: int) -> float:
        return self.cost(k)

    def predictive_weights(self, x) -> np.ndarray:
        """Rows ``w`` with ``E[f(x) | f(events)] = w @ f``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        S_no = se_kernel_matrix(x, self.events, self.lengthscale, self.variance)
        S_nn = se_kernel_matrix(x, x, self.lengthscale, self.variance)
        return conditional_operator(self._S_oo, S_no, S_nn, jitter_scale=self.variance)[0]

    def intensity(self, f_events, x) -> np.ndarray:
        """Intensity ``exp(E[f(x) | f(events)])``."""
        return np.exp(self.predictive_weights(x) @ np.asarray(f_events, dtype=float))
