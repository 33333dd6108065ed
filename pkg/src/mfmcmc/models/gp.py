"""GP regression lengthscale inference with CG-iteration fidelities.

Level ``k`` replaces the quadratic form ``y^T (S + s0^2 I)^{-1} y`` by
``y^T z_k`` where ``z_k`` is the ``k``-th conjugate-gradient iterate.  The
log determinant is computed exactly by Cholesky at every level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import CGState, cg_advance, cg_solve, cg_start, cholesky, se_kernel_matrix
from .base import Model

NU0 = 3.8
NU1 = 0.03
TRUE_LENGTHSCALE = 45.0
LOG_2PI = math.log(2 * math.pi)


def lognormal_logpdf(theta: float, nu0: float = NU0, nu1: float = NU1) -> float:
    """Log density of ``theta`` when ``log theta ~ N(nu0, nu1)`` (``nu1`` a variance)."""
    if not theta > 0:
        return -math.inf
    lt = math.log(theta)
    return -lt - 0.5 * (lt - nu0) ** 2 / nu1 - 0.5 * math.log(2 * math.pi * nu1)


def _lengthscale(theta) -> float:
    return float(np.asarray(theta, dtype=float).reshape(-1)[0])


@dataclass
class _GPLevelState:
    apply_A: object
    logdet: float
    cg: CGState


def gp_covariance(X, lengthscale: float, noise_var: float = 1.0) -> np.ndarray:
    S = se_kernel_matrix(X, X, lengthscale)
    S[np.diag_indices_from(S)] += noise_var
    return S


def gp_loglik(theta, k: int, X, y, noise_var: float = 1.0) -> float:
    """Gaussian log likelihood with the solve truncated to ``k`` CG steps."""
    if k < 1:
        raise ValueError("fidelity must be >= 1")
    y = np.asarray(y, dtype=float)
    A = gp_covariance(X, _lengthscale(theta), noise_var)
    L = cholesky(A)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    z = cg_solve(lambda v: A @ v, y, k).z
    return -0.5 * (y.size * LOG_2PI + logdet + float(y @ z))


class GPRegressionModel(Model):
    """Log posterior sequence (log-normal prior plus level-``k`` likelihood)."""

    name = "gp"
    dim = 1
    incremental = True

    def __init__(self, X, y, noise_var: float = 1.0, nu0: float = NU0, nu1: float = NU1):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.X.shape[0] != self.y.size:
            raise ValueError("X and y have different numbers of rows")
        self.noise_var = float(noise_var)
        self.nu0, self.nu1 = float(nu0), float(nu1)

    @property
    def n(self) -> int:
        return self.y.size

    def log_prior(self, theta) -> float:
        return lognormal_logpdf(_lengthscale(theta), self.nu0, self.nu1)

    def _value(self, theta, state: _GPLevelState) -> float:
        quad = float(self.y @ state.cg.z)
        return self.log_prior(theta) - 0.5 * (self.n * LOG_2PI + state.logdet + quad)

    def start(self, theta):
        if not _lengthscale(theta) > 0:
            return None
        A = gp_covariance(self.X, _lengthscale(theta), self.noise_var)
        L = cholesky(A)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        return _GPLevelState(lambda v: A @ v, logdet, cg_start(self.y))

    def advance(self, theta, state, k: int):
        if state is None:
            return -math.inf, None
        if state.cg.k != k - 1:
            raise ValueError(f"CG state is at step {state.cg.k}, cannot produce level {k}")
        state = _GPLevelState(state.apply_A, state.logdet, cg_advance(state.cg, state.apply_A, 1))
        return self._value(theta, state), state

    def log_pi(self, theta, k: int) -> float:
        if not _lengthscale(theta) > 0:
            return -math.inf
        state = self.start(theta)
        state = _GPLevelState(state.apply_A, state.logdet, cg_advance(state.cg, state.apply_A, k))
        return self._value(theta, state)

    def cost(self, k: int) -> float:
        # matrix-vector products
        return float(k)

    def level_cost(self, k: int) -> float:
        return 1.0

    def sample_prior(self, rng):
        return np.array([math.exp(self.nu0 + math.sqrt(self.nu1) * rng.standard_normal())])


def generate_gp_data(rng: np.random.Generator, n: int = 100, lengthscale: float = TRUE_LENGTHSCALE,
                     noise_var: float = 1.0, x_range: tuple[float, float] = (0.0, 500.0)):
    """Inputs uniform on ``x_range`` and ``y = f(X) + noise`` with ``f`` a GP draw."""
    X = np.sort(rng.uniform(x_range[0], x_range[1], n))
    S = se_kernel_matrix(X, X, lengthscale)
    f = cholesky(S) @ rng.standard_normal(n)
    y = f + math.sqrt(noise_var) * rng.standard_normal(n)
    return X, y
