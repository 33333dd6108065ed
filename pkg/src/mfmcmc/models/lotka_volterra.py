"""Lotka-Volterra parameter inference with step-size fidelities.

Prey ``u`` and predator ``v`` follow

    du/dt = alpha u - beta u v,    dv/dt = -gamma v + delta u v,

observed with log-normal noise.  Level ``k`` integrates with a fixed step
``dt(k) = 1 / (s k + c)``.  The sampled state is the centred log-parameter
vector ``log(alpha, beta, gamma, delta) - theta0``, which has a zero-mean
Gaussian prior so ESS can be used directly.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from ..numerics import MAX_ODE_STEPS, ODEBlowUp
from .base import Model

PRIOR_MEAN = np.array([0.0, -2.0, 0.0, -3.0])
PRIOR_VAR = 0.1
SYNTH_PARAMS = (1.5, 1.0, 3.0, 1.0)
SYNTH_Z0 = (1.0, 1.0)

METHODS = {"euler": 0, "rk4": 1}


def step_size(k: int, s: float = 10.0, c: float = 50.0) -> float:
    if k < 1:
        raise ValueError("fidelity must be >= 1")
    return 1.0 / (s * k + c)


@numba.njit(cache=True)
def _rhs(u, v, a, b, g, d):
    return a * u - b * u * v, -g * v + d * u * v


@numba.njit(cache=True)
def _step(u, v, h, a, b, g, d, method):
    if method == 0:
        du, dv = _rhs(u, v, a, b, g, d)
        return u + h * du, v + h * dv
    k1u, k1v = _rhs(u, v, a, b, g, d)
    k2u, k2v = _rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v, a, b, g, d)
    k3u, k3v = _rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v, a, b, g, d)
    k4u, k4v = _rhs(u + h * k3u, v + h * k3v, a, b, g, d)
    return (u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
            v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))


@numba.njit(cache=True)
def _integrate(params, u, v, n_full, rest, dt, method, out):
    a, b, g, d = params[0], params[1], params[2], params[3]
    for i in range(n_full.size):
        for _ in range(n_full[i]):
            u, v = _step(u, v, dt, a, b, g, d, method)
        if rest[i] > 0.0:
            u, v = _step(u, v, rest[i], a, b, g, d, method)
        if not (np.isfinite(u) and np.isfinite(v)):
            return i
        out[i, 0] = u
        out[i, 1] = v
    return -1


def step_plans(t_obs, dt: float, t0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`mfmcmc.numerics.step_plan` over consecutive output times."""
    t_obs = np.asarray(t_obs, dtype=float)
    if np.any(np.diff(t_obs) < 0) or (t_obs.size and t_obs[0] < t0):
        raise ValueError("observation times must be sorted and not precede t0")
    spans = np.diff(np.r_[t0, t_obs])
    n = np.floor(spans / dt)
    rest = spans - n * dt
    tol = 1e-12 * np.maximum(spans, dt)
    rest = np.where(rest <= tol, 0.0, rest)
    bump = (rest > 0) & (dt - rest <= tol)
    n = np.where(bump, n + 1, n)
    rest = np.where(bump, 0.0, rest)
    return n.astype(np.int64), rest


def lv_solve(params, z0, t_obs, dt: float, method: str = "rk4", t0: float = 0.0,
             max_steps: int = MAX_ODE_STEPS, plan=None) -> np.ndarray:
    """Fixed-step solution at ``t_obs``; shape ``(len(t_obs), 2)``.

    Same step plan as :func:`mfmcmc.numerics.ode_solve`.
    """
    try:
        code = METHODS[method.lower()]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
    n_full, rest = plan if plan is not None else step_plans(t_obs, dt, t0)
    if n_full.sum() + np.count_nonzero(rest) > max_steps:
        raise RuntimeError(f"ODE step budget of {max_steps} exceeded")
    out = np.empty((n_full.size, 2))
    bad = _integrate(np.asarray(params, dtype=float), float(z0[0]), float(z0[1]), n_full, rest,
                     float(dt), code, out)
    if bad >= 0:
        raise ODEBlowUp(float(np.asarray(t_obs)[bad]))
    return out


def lognormal_logpdf(y, log_mean, sigma: float) -> float:
    log_y = np.log(y)
    r = (log_y - log_mean) / sigma
    return float(np.sum(-0.5 * r * r - log_y - math.log(sigma) - 0.5 * math.log(2 * math.pi)))


def lv_loglik(params, k: int, t_obs, y, z0=SYNTH_Z0, sigma: float = 0.25,
              method: str = "rk4", s: float = 10.0, c: float = 50.0) -> float:
    """Log-normal likelihood of ``y`` (shape ``(N, 2)``) under the level-``k`` solve.

    Blow-up or a nonpositive population gives ``-inf``.
    """
    try:
        z = lv_solve(params, z0, t_obs, step_size(k, s, c), method)
    except ODEBlowUp:
        return -math.inf
    if np.any(z <= 0):
        return -math.inf
    return lognormal_logpdf(np.asarray(y, dtype=float), np.log(z), sigma)


class LotkaVolterraModel(Model):
    """Likelihood sequence over the centred log-parameters."""

    name = "lv"
    dim = 4

    def __init__(self, t_obs, y, z0=SYNTH_Z0, sigma: float = 0.25, method: str = "rk4",
                 s: float = 10.0, c: float = 50.0, prior_mean=PRIOR_MEAN,
                 prior_var: float = PRIOR_VAR, t0: float = 0.0):
        self.t_obs = np.asarray(t_obs, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.y.shape != (self.t_obs.size, 2):
            raise ValueError(f"observations must have shape ({self.t_obs.size}, 2)")
        if np.any(self.y <= 0):
            raise ValueError("populations must be positive for a log-normal likelihood")
        self.z0 = tuple(float(v) for v in z0)
        self.sigma = float(sigma)
        self.method = method
        self.s, self.c = float(s), float(c)
        self.t0 = float(t0)
        self.prior_mean = np.asarray(prior_mean, dtype=float)
        self.prior_chol = math.sqrt(prior_var) * np.eye(4)
        self._plans: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def params(self, theta_bar) -> np.ndarray:
        """``(alpha, beta, gamma, delta)`` from a centred log-parameter state."""
        return np.exp(np.asarray(theta_bar, dtype=float) + self.prior_mean)

    def log_pi(self, theta, k: int) -> float:
        dt = step_size(k, self.s, self.c)
        plan = self._plans.get(k)
        if plan is None:
            plan = self._plans[k] = step_plans(self.t_obs, dt, self.t0)
        try:
            z = lv_solve(self.params(theta), self.z0, self.t_obs, dt, self.method, plan=plan)
        except ODEBlowUp:
            return -math.inf
        if np.any(z <= 0):
            return -math.inf
        return lognormal_logpdf(self.y, np.log(z), self.sigma)

    def cost(self, k: int) -> float:
        # solver steps taken for one likelihood evaluation
        span = float(self.t_obs[-1] - self.t0)
        return float(math.ceil(span / step_size(k, self.s, self.c) - 1e-9))

    def level_cost(self, k: int) -> float:
        return self.cost(k)


def generate_lv_data(rng: np.random.Generator, t_obs, params=SYNTH_PARAMS, z0=SYNTH_Z0,
                     sigma: float = 0.8, dt: float = 1e-4, method: str = "rk4") -> np.ndarray:
    """Log-normal observations of a fine-step solution; shape ``(N, 2)``."""
    z = lv_solve(params, z0, t_obs, dt, method)
    return z * np.exp(sigma * rng.standard_normal(z.shape))
