"""Chain drivers, sign-corrected functionals and the cost ledger.

The multi-fidelity driver alternates a fidelity move on ``K`` (targeting
``mu(K) |pi_hat_K(theta)|``) with a state move on ``theta`` (targeting
``|pi_hat_K(theta)|``) and records the sign of the estimate at the state
it ends the iteration in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .estimator import CostLedger, Estimator, LevelCursor
from .samplers import (
    Diagnostics,
    LogarithmicSchedule,
    fidelity_step,
    mf_sa_fidelity_step,
    mf_sa_theta_step,
    two_stage_mh_step,
)
from .truncation import DEFAULT_K_MAX, EstimatorScheme, Geometric

INIT_ATTEMPTS = 100


class ChainError(RuntimeError):
    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"chain failed at iteration {iteration}: {cause}")
        self.iteration = iteration


class SignCancellation(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class ChainSample:
    iter: int
    theta: np.ndarray
    K: int
    sign: int
    cum_cost: float


@dataclass(frozen=True)
class ChainConfig:
    iterations: int
    burn_in: int = 0
    thin: int = 1
    gamma0: float = 0.1
    seed: int | None = None
    scheme: str = "rr"
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        EstimatorScheme.parse(self.scheme)

    @property
    def dist(self) -> Geometric:
        return Geometric(self.gamma0, self.k_max)


def _key(theta) -> bytes:
    return np.asarray(theta, dtype=float).tobytes()


def _adds_gaussian_prior(model, kernel) -> bool:
    return getattr(model, "prior_chol", None) is not None and not getattr(
        kernel, "uses_gaussian_prior", False)


def run_mf_chain(config: ChainConfig, model, state_kernel, rng: np.random.Generator,
                 theta0=None, K0: int | None = None, diag: Diagnostics | None = None,
                 ledger: CostLedger | None = None) -> Iterator[ChainSample]:
    """Multi-fidelity pseudo-marginal chain with sign bookkeeping.

    Each iteration refreshes model auxiliaries, makes one fidelity move and
    then one state move.  Level evaluations are cached per state, so the
    ledger charges each distinct level evaluation exactly once.
    """
    dist = config.dist
    est = Estimator(config.scheme, dist)
    ledger = ledger if ledger is not None else CostLedger()
    add_prior = _adds_gaussian_prior(model, state_kernel)

    def prior_term(x):
        return model.log_gaussian_prior(x) if add_prior else 0.0

    model.refresh(rng)
    theta, K, cursor = _initial_state(model, est, dist, rng, theta0, K0, ledger)

    for t in range(1, config.iterations + 1):
        try:
            if t > 1 and model.refresh(rng):
                cursor = LevelCursor(model, theta, ledger)
            here = cursor
            K = fidelity_step(K, lambda k: est(here, k).log_abs, dist, rng, config.k_max, diag)
            cursors = {_key(theta): cursor}
            k_now = K

            def log_target(x):
                kx = _key(x)
                c = cursors.get(kx)
                if c is None:
                    c = cursors[kx] = LevelCursor(model, np.array(x, dtype=float), ledger)
                value = est(c, k_now).log_abs
                return value + prior_term(x) if value > -math.inf else value

            theta, _ = state_kernel(theta, log_target, log_target(theta), rng, diag)
            cursor = cursors[_key(theta)]
            sign = est(cursor, K).sign
        except Exception as exc:  # noqa: BLE001 - re-raised with the iteration index
            raise ChainError(t, exc) from exc
        yield ChainSample(t, np.array(theta, dtype=float), K, sign, ledger.total)


def _initial_state(model, est, dist, rng, theta0, K0, ledger):
    K = dist.sample(rng) if K0 is None else int(K0)
    if theta0 is not None:
        theta = np.array(theta0, dtype=float)
        return theta, K, LevelCursor(model, theta, ledger)
    for _ in range(INIT_ATTEMPTS):
        theta = np.array(model.sample_prior(rng), dtype=float)
        cursor = LevelCursor(model, theta, ledger)
        if est(cursor, K).sign != 0:
            return theta, K, cursor
    raise ChainError(0, RuntimeError("no prior draw gave a nonzero density estimate"))


def run_sf_chain(config: ChainConfig, model, state_kernel, rng: np.random.Generator, k: int,
                 theta0=None, diag: Diagnostics | None = None,
                 ledger: CostLedger | None = None) -> Iterator[ChainSample]:
    """Ordinary chain on the fixed fidelity ``k``; each fresh evaluation costs ``cost(k)``."""
    ledger = ledger if ledger is not None else CostLedger()
    add_prior = _adds_gaussian_prior(model, state_kernel)
    unit = model.cost(k)

    def log_target(x):
        ledger.charge(unit)
        value = float(model.log_pi(x, k))
        if add_prior and value > -math.inf:
            value += model.log_gaussian_prior(x)
        return value

    model.refresh(rng)
    theta = np.array(model.sample_prior(rng) if theta0 is None else theta0, dtype=float)
    current = log_target(theta)
    for t in range(1, config.iterations + 1):
        try:
            if t > 1 and model.refresh(rng):
                current = log_target(theta)
            theta, current = state_kernel(theta, log_target, current, rng, diag)
        except Exception as exc:  # noqa: BLE001
            raise ChainError(t, exc) from exc
        yield ChainSample(t, np.array(theta, dtype=float), k, 1, ledger.total)


def run_two_stage_chain(config: ChainConfig, model, proposal, rng: np.random.Generator,
                        k_hf: int, k_lf: int, theta0=None, diag: Diagnostics | None = None,
                        ledger: CostLedger | None = None) -> Iterator[ChainSample]:
    """Delayed-acceptance M-H screening proposals with fidelity ``k_lf``."""
    ledger = ledger if ledger is not None else CostLedger()

    def log_prior(x):
        return model.log_gaussian_prior(x) if getattr(model, "prior_chol", None) is not None else 0.0

    def level(k):
        def f(x):
            ledger.charge(model.cost(k))
            return float(model.log_pi(x, k))
        return f

    lf, hf = level(k_lf), level(k_hf)
    model.refresh(rng)
    theta = np.array(model.sample_prior(rng) if theta0 is None else theta0, dtype=float)
    current = None
    for t in range(1, config.iterations + 1):
        try:
            theta, _, current, _ = two_stage_mh_step(theta, log_prior, lf, hf, proposal, rng,
                                                     current, diag)
        except Exception as exc:  # noqa: BLE001
            raise ChainError(t, exc) from exc
        yield ChainSample(t, np.array(theta, dtype=float), k_hf, 1, ledger.total)


# --------------------------------------------------------------------------
# simulated annealing


@dataclass(frozen=True)
class AnnealSample:
    iter: int
    theta: np.ndarray
    K: int
    energy: float
    temperature: float
    evaluations: int
    cum_cost: float
    best_theta: np.ndarray
    best_energy: float


def run_annealing(energy_model, proposal, rng: np.random.Generator, theta0,
                  schedule: LogarithmicSchedule | None = None, gamma0: float | None = None,
                  k: int | None = None, max_evaluations: int = 2000, K0: int | None = None,
                  k_max: int = DEFAULT_K_MAX,
                  diag: Diagnostics | None = None) -> Iterator[AnnealSample]:
    """Simulated annealing on ``exp(-E_K(theta) / T)``.

    With ``gamma0`` the fidelity is an annealed auxiliary variable with prior
    ``geometric(gamma0)``; with ``k`` it is held fixed.  Stops once the number
    of energy evaluations reaches ``max_evaluations``.
    """
    if (gamma0 is None) == (k is None):
        raise ValueError("give exactly one of gamma0 (multi-fidelity) or k (single fidelity)")
    schedule = schedule or LogarithmicSchedule()
    dist = Geometric(gamma0, k_max) if gamma0 is not None else None
    counter = {"evals": 0, "cost": 0.0}

    def energy(x, level):
        counter["evals"] += 1
        counter["cost"] += energy_model.cost(level)
        return float(energy_model.energy(x, level))

    theta = np.array(theta0, dtype=float)
    K = int(k) if k is not None else (int(K0) if K0 is not None else dist.sample(rng))
    cache = {K: energy(theta, K)}
    best_theta, best_energy = theta.copy(), cache[K]
    t = 0
    while counter["evals"] < max_evaluations:
        t += 1
        T = schedule.temperature(t)
        if dist is not None:
            def energy_at(level, _theta=theta, _cache=cache):
                if level not in _cache:
                    _cache[level] = energy(_theta, level)
                return _cache[level]
            K = mf_sa_fidelity_step(K, energy_at, T, dist, rng, k_max, diag)
        k_now = K
        theta, accepted, e = mf_sa_theta_step(theta, lambda x: energy(x, k_now), T, proposal,
                                              rng, current=cache[K])
        if accepted:
            cache = {K: e}
        if e < best_energy:
            best_theta, best_energy = theta.copy(), e
        yield AnnealSample(t, theta.copy(), K, e, T, counter["evals"], counter["cost"],
                           best_theta, best_energy)


# --------------------------------------------------------------------------
# post-processing


def thin_samples(samples: Sequence, burn_in: int = 0, thin: int = 1) -> list:
    """Keep the samples at positions ``burn_in + i * thin``."""
    if thin < 1 or burn_in < 0:
        raise ValueError("need burn_in >= 0 and thin >= 1")
    return list(samples)[burn_in::thin]


def _h_values(samples, h):
    return np.array([h(s.theta) for s in samples], dtype=float)


def sign_corrected_estimate(samples: Sequence[ChainSample], h: Callable) -> float:
    """``sum(sign * h(theta)) / sum(sign)`` over the samples."""
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    signs = np.array([s.sign for s in samples], dtype=float)
    denom = signs.sum()
    if denom == 0:
        raise SignCancellation("signs sum to zero; run the chain longer")
    values = _h_values(samples, h)
    return float(np.sum(signs * values) / denom)


def negative_sign_fraction(samples: Sequence[ChainSample]) -> float:
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    return sum(1 for s in samples if s.sign < 0) / len(samples)


def running_functional(samples: Iterable[ChainSample], h: Callable) -> list[tuple[float, float]]:
    """Prefix-wise sign-corrected estimates as ``(cum_cost, estimate)`` pairs."""
    out = []
    num = 0.0
    den = 0
    for s in samples:
        if s.sign:
            num += s.sign * float(h(s.theta))
            den += s.sign
        if den != 0:
            out.append((s.cum_cost, num / den))
    return out


def pooled(*chains: Sequence[ChainSample]) -> list[ChainSample]:
    return [s for chain in chains for s in chain]
