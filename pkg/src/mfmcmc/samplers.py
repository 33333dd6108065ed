"""Markov transition kernels.

Every kernel takes an explicit ``numpy.random.Generator`` and draws from it
in a fixed order, so a chain is reproducible from its seed.  Log targets may
return ``-inf``; any non-finite proposal value is treated as a rejection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import log_ndtr

from .truncation import DEFAULT_K_MAX, TruncationDistribution

LOG_2PI = math.log(2.0 * math.pi)


class SamplerError(RuntimeError):
    pass


@dataclass
class Diagnostics:
    """Counters for events the kernels survive but callers may want to see."""

    slice_shrink_exhausted: int = 0
    fidelity_boundary_rejects: int = 0
    fidelity_zero_rejects: int = 0
    proposals: int = 0
    accepts: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return self.accepts / self.proposals if self.proposals else float("nan")


def _accept(log_ratio: float, rng: np.random.Generator) -> bool:
    """Accept with probability ``min(1, exp(log_ratio))``.

    A uniform is consumed only when the ratio is below one.
    """
    if not log_ratio == log_ratio:  # nan
        return False
    if log_ratio >= 0.0:
        return True
    return math.log(rng.random()) < log_ratio


# --------------------------------------------------------------------------
# proposals


@dataclass(frozen=True)
class GaussianRandomWalk:
    """Isotropic Gaussian random walk ``theta' ~ N(theta, scale**2 I)``."""

    scale: float
    symmetric = True

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("proposal scale must be positive")

    def propose(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        return theta + self.scale * rng.standard_normal(theta.shape)

    def log_q(self, to, frm) -> float:
        return 0.0


@dataclass(frozen=True)
class TruncatedNormal:
    """Gaussian random walk restricted to ``theta >= lower`` coordinatewise.

    Sampled by rejection from the untruncated walk.
    """

    scale: float
    lower: float = 0.0
    max_tries: int = 10_000
    symmetric = False

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("proposal scale must be positive")

    def propose(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        for _ in range(self.max_tries):
            prop = theta + self.scale * rng.standard_normal(theta.shape)
            if np.all(prop >= self.lower):
                return prop
        raise SamplerError("truncated normal proposal failed to land in the support")

    def log_q(self, to, frm) -> float:
        """``log q(to | frm)``."""
        to = np.asarray(to, dtype=float)
        frm = np.asarray(frm, dtype=float)
        z = (to - frm) / self.scale
        log_mass = log_ndtr((frm - self.lower) / self.scale)
        return float(np.sum(-0.5 * z**2 - 0.5 * LOG_2PI - math.log(self.scale) - log_mass))


# --------------------------------------------------------------------------
# Metropolis-Hastings


def mh_step(theta, log_target: Callable, proposal, rng: np.random.Generator,
            current: float | None = None, diag: Diagnostics | None = None):
    """One random-walk Metropolis-Hastings update.

    Returns ``(theta_new, accepted, log_target(theta_new))``.
    """
    if current is None:
        current = log_target(theta)
    prop = proposal.propose(theta, rng)
    new = log_target(prop)
    if diag is not None:
        diag.proposals += 1
    if not math.isfinite(new):
        return theta, False, current
    log_ratio = new - current
    if not proposal.symmetric:
        log_ratio += proposal.log_q(theta, prop) - proposal.log_q(prop, theta)
    if _accept(log_ratio, rng):
        if diag is not None:
            diag.accepts += 1
        return prop, True, new
    return theta, False, current


def two_stage_mh_step(theta, log_prior: Callable, log_lik_lf: Callable, log_lik_hf: Callable,
                      proposal, rng: np.random.Generator, current=None,
                      diag: Diagnostics | None = None):
    """Delayed-acceptance M-H with one cheap and one expensive likelihood.

    ``current`` caches ``(log_prior, log_lik_lf, log_lik_hf)`` at ``theta``.
    Returns ``(theta_new, accepted, current_new, hf_evaluated)``.
    """
    if current is None:
        current = (log_prior(theta), log_lik_lf(theta), log_lik_hf(theta))
    lp, llf, lhf = current
    prop = proposal.propose(theta, rng)
    if diag is not None:
        diag.proposals += 1
    lp_new = log_prior(prop)
    llf_new = log_lik_lf(prop) if math.isfinite(lp_new) else -math.inf
    if not math.isfinite(llf_new):
        return theta, False, current, False
    log_r1 = (lp_new + llf_new) - (lp + llf)
    if not proposal.symmetric:
        log_r1 += proposal.log_q(theta, prop) - proposal.log_q(prop, theta)
    if not _accept(log_r1, rng):
        return theta, False, current, False
    lhf_new = log_lik_hf(prop)
    if not math.isfinite(lhf_new):
        return theta, False, current, True
    log_r2 = (lhf_new - lhf) - (llf_new - llf)
    if _accept(log_r2, rng):
        if diag is not None:
            diag.accepts += 1
        return prop, True, (lp_new, llf_new, lhf_new), True
    return theta, False, current, True


# --------------------------------------------------------------------------
# slice sampling


@dataclass(frozen=True)
class SliceSpec:
    width: float | tuple = 1.0
    max_stepout: int = 50
    max_shrink: int = 100

    def widths(self, dim: int) -> np.ndarray:
        w = np.broadcast_to(np.asarray(self.width, dtype=float), (dim,)).copy()
        if np.any(w <= 0):
            raise ValueError("slice widths must be positive")
        return w


def slice_step(theta, log_target: Callable, spec: SliceSpec, rng: np.random.Generator,
               current: float | None = None, diag: Diagnostics | None = None):
    """Univariate slice updates applied to each coordinate in turn.

    Brackets are placed at a random offset around the current point, stepped
    out by whole widths (at most ``max_stepout`` in total) and shrunk toward
    the current point on rejection.

    Returns ``(theta_new, log_target(theta_new))``.
    """
    x = np.array(theta, dtype=float, copy=True).reshape(-1)
    shape = np.shape(theta)
    widths = spec.widths(x.size)
    fx = log_target(x.reshape(shape)) if current is None else current
    if not math.isfinite(fx):
        raise SamplerError("slice sampling requires a finite log target at the current state")

    def f_at(d, value):
        y = x.copy()
        y[d] = value
        return log_target(y.reshape(shape))

    for d in range(x.size):
        level = fx + math.log(rng.random())
        w = widths[d]
        left = x[d] - w * rng.random()
        right = left + w
        j = int(math.floor(spec.max_stepout * rng.random()))
        m = spec.max_stepout - 1 - j
        while j > 0 and f_at(d, left) > level:
            left -= w
            j -= 1
        while m > 0 and f_at(d, right) > level:
            right += w
            m -= 1
        for _ in range(spec.max_shrink):
            cand = left + (right - left) * rng.random()
            f_cand = f_at(d, cand)
            if f_cand > level:
                x[d] = cand
                fx = f_cand
                break
            if cand < x[d]:
                left = cand
            else:
                right = cand
        else:
            if diag is not None:
                diag.slice_shrink_exhausted += 1
    return x.reshape(shape), fx


# --------------------------------------------------------------------------
# elliptical slice sampling


def ess_step(f, log_lik: Callable, chol, rng: np.random.Generator, current: float | None = None,
             max_iter: int = 10_000):
    """Elliptical slice sampling update for a latent ``f ~ N(0, chol chol^T)``.

    Only ``log_lik`` is ever evaluated.  Returns ``(f_new, log_lik(f_new))``.
    """
    f = np.asarray(f, dtype=float)
    chol = np.asarray(chol, dtype=float)
    if chol.shape[0] != f.size:
        raise ValueError(f"latent dimension {f.size} does not match factor {chol.shape}")
    if current is None:
        current = log_lik(f)
    nu = (chol @ rng.standard_normal(f.size)).reshape(f.shape)
    log_y = current + math.log(rng.random())
    angle = rng.uniform(0.0, 2.0 * math.pi)
    lo, hi = angle - 2.0 * math.pi, angle
    for _ in range(max_iter):
        prop = f * math.cos(angle) + nu * math.sin(angle)
        value = log_lik(prop)
        if value > log_y:
            return prop, value
        if angle < 0.0:
            lo = angle
        else:
            hi = angle
        angle = rng.uniform(lo, hi)
    raise SamplerError(f"elliptical slice sampling did not terminate in {max_iter} proposals")


# --------------------------------------------------------------------------
# fidelity moves


def _propose_fidelity(K: int, rng) -> int:
    return K - 1 if rng.random() < 0.5 else K + 1


def fidelity_step(K: int, log_abs_estimate: Callable[[int], float], dist: TruncationDistribution,
                  rng: np.random.Generator, k_max: int = DEFAULT_K_MAX,
                  diag: Diagnostics | None = None) -> int:
    """Random-walk M-H move on ``K`` targeting ``mu(K) |pi_hat_K(theta)|``.

    ``log_abs_estimate(k)`` returns ``log |pi_hat_k(theta)|`` at the current
    state.  Proposals to ``0`` or above ``k_max`` are rejected.
    """
    if K < 1:
        raise ValueError("fidelity must be >= 1")
    k_star = _propose_fidelity(K, rng)
    if k_star < 1 or k_star > k_max:
        if diag is not None:
            diag.fidelity_boundary_rejects += 1
        return K
    current = log_abs_estimate(K)
    new = log_abs_estimate(k_star)
    if current == -math.inf and new == -math.inf:
        if diag is not None:
            diag.fidelity_zero_rejects += 1
        return K
    log_ratio = dist.log_pmf(k_star) + new - dist.log_pmf(K) - current
    return k_star if _accept(log_ratio, rng) else K


# --------------------------------------------------------------------------
# simulated annealing


@dataclass(frozen=True)
class LogarithmicSchedule:
    """``T(t) = T0 / log(t + e)``."""

    T0: float = 1.0

    def __post_init__(self):
        if not self.T0 > 0:
            raise ValueError("T0 must be positive")

    def temperature(self, t: int) -> float:
        return self.T0 / math.log(t + math.e)


def mf_sa_theta_step(theta, energy_K: Callable, T: float, proposal, rng: np.random.Generator,
                     current: float | None = None):
    """Annealed M-H move on ``theta`` at fixed fidelity.

    Accepts with ``min(1, exp(-(E_K(theta') - E_K(theta)) / T))``; no
    proposal-density correction is applied.  Returns
    ``(theta_new, accepted, E_K(theta_new))``.
    """
    if not T > 0:
        raise ValueError("temperature must be positive")
    if current is None:
        current = energy_K(theta)
    prop = proposal.propose(theta, rng)
    new = energy_K(prop)
    if not math.isfinite(new):
        return theta, False, current
    if _accept(-(new - current) / T, rng):
        return prop, True, new
    return theta, False, current


def mf_sa_fidelity_step(K: int, energy_at: Callable[[int], float], T: float,
                        dist: TruncationDistribution, rng: np.random.Generator,
                        k_max: int = DEFAULT_K_MAX, diag: Diagnostics | None = None) -> int:
    """Annealed random-walk move on ``K``.

    Ratio ``exp(-(E_K' - E_K) / T) * (mu(K') / mu(K))**(1 / T)``.
    """
    if not T > 0:
        raise ValueError("temperature must be positive")
    k_star = _propose_fidelity(K, rng)
    if k_star < 1 or k_star > k_max:
        if diag is not None:
            diag.fidelity_boundary_rejects += 1
        return K
    current = energy_at(K)
    new = energy_at(k_star)
    if not math.isfinite(new):
        return K
    log_ratio = (-(new - current) + dist.log_pmf(k_star) - dist.log_pmf(K)) / T
    return k_star if _accept(log_ratio, rng) else K


# --------------------------------------------------------------------------
# kernel objects used by the chain driver


class MetropolisKernel:
    def __init__(self, proposal):
        self.proposal = proposal

    def __call__(self, theta, log_target, current, rng, diag=None):
        theta, _, value = mh_step(theta, log_target, self.proposal, rng, current, diag)
        return theta, value


class SliceKernel:
    def __init__(self, spec: SliceSpec):
        self.spec = spec

    def __call__(self, theta, log_target, current, rng, diag=None):
        return slice_step(theta, log_target, self.spec, rng, current, diag)


class EllipticalSliceKernel:
    """ESS update; the target passed in must be the log-likelihood only."""

    uses_gaussian_prior = True

    def __init__(self, chol, max_iter: int = 10_000):
        self.chol = np.asarray(chol, dtype=float)
        self.max_iter = max_iter

    def __call__(self, theta, log_target, current, rng, diag=None):
        new, value = ess_step(theta, log_target, self.chol, rng, current, self.max_iter)
        if diag is not None:
            diag.proposals += 1
            diag.accepts += 1
        return new, value
