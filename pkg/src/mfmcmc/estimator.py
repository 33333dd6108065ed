"""Unbiased randomized-truncation estimators of a limiting density.

A :class:`TargetSequence` supplies log densities ``log pi_k(theta)`` for
``k = 1, 2, ...``.  The estimator of the limit is the weighted telescoping
sum ``sum_{k<=K} w_{k,K} (pi_k - pi_{k-1})`` with ``pi_0 = 0``, evaluated in
signed-log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signed_log import SignedLog
from .truncation import EstimatorScheme, TruncationDistribution


class EstimatorError(RuntimeError):
    """A level density could not be evaluated."""


class CursorMismatch(ValueError):
    """An increment was requested out of order."""


class TargetSequence:
    """A sequence of unnormalized log densities converging in ``k``.

    Subclasses implement :meth:`log_pi` and :meth:`cost`.  Sequences whose
    level ``k`` can be computed cheaply from level ``k - 1`` set
    ``incremental = True`` and override :meth:`start` / :meth:`advance`; the
    marginal price of each step is :meth:`level_cost`.

    ``advance`` must return exactly what a fresh ``log_pi(theta, k)`` would.
    """

    incremental: bool = False
    dim: int = 1

    def log_pi(self, theta, k: int) -> float:
        raise NotImplementedError

    def cost(self, k: int) -> float:
        """Cost of evaluating level ``k`` from scratch."""
        return float(k)

    def level_cost(self, k: int) -> float:
        """Marginal cost of level ``k`` given level ``k - 1`` (incremental only)."""
        return self.cost(k) - (self.cost(k - 1) if k > 1 else 0.0)

    def start(self, theta):
        return None

    def advance(self, theta, state, k: int):
        """Return ``(log_pi(theta, k), new_state)`` given the state at ``k - 1``."""
        return self.log_pi(theta, k), state

    def refresh(self, rng: np.random.Generator) -> bool:
        """Redraw per-iteration auxiliary randomness.

        Returns True when cached level values are invalidated.
        """
        return False


class CostLedger:
    """Running total of cost units spent on level evaluations."""

    def __init__(self):
        self.total = 0.0
        self.evaluations = 0

    def charge(self, amount: float) -> None:
        self.total += amount
        self.evaluations += 1


class LevelCursor:
    """Level values of one sequence at one state, computed on demand."""

    def __init__(self, seq: TargetSequence, theta, ledger: CostLedger | None = None):
        self.seq = seq
        self.theta = theta
        self.ledger = ledger if ledger is not None else CostLedger()
        self.logs: dict[int, float] = {}
        self.top = 0
        self._state = None
        self._partials: dict[tuple, list[SignedLog]] = {}

    def log_level(self, k: int) -> float:
        if k < 1:
            raise ValueError(f"fidelity must be >= 1, got {k}")
        if k in self.logs:
            return self.logs[k]
        seq = self.seq
        if seq.incremental:
            while self.top < k:
                j = self.top + 1
                if j == 1:
                    self._state = seq.start(self.theta)
                value, self._state = seq.advance(self.theta, self._state, j)
                self._store(j, value)
                self.ledger.charge(seq.level_cost(j))
        else:
            self._store(k, seq.log_pi(self.theta, k))
            self.ledger.charge(seq.cost(k))
            while self.top + 1 in self.logs:
                self.top += 1
        return self.logs[k]

    def _store(self, k: int, value) -> None:
        value = float(value)
        if math.isnan(value) or value == math.inf:
            raise EstimatorError(f"level {k} returned non-finite log density {value!r}")
        self.logs[k] = value
        if self.seq.incremental:
            self.top = k

    def increment(self, k: int) -> SignedLog:
        """``pi_k - pi_{k-1}`` with ``pi_0 = 0``."""
        upper = self.log_level(k)
        if k == 1:
            return SignedLog.from_log(upper)
        return SignedLog.log_diff(upper, self.log_level(k - 1))

    def levels_cost(self, levels) -> float:
        seq = self.seq
        if seq.incremental:
            return float(sum(seq.level_cost(j) for j in range(1, max(levels) + 1)))
        return float(sum(seq.cost(j) for j in levels))


@dataclass(frozen=True)
class EstimateRecord:
    """One evaluation of the truncated estimator.

    ``cost`` counts every level the estimate depends on; ``new_cost`` is what
    this call actually spent given what the cursor already held.
    """

    value: SignedLog
    K: int
    cost: float
    terms: int
    new_cost: float = 0.0

    @property
    def sign(self) -> int:
        return self.value.sign

    @property
    def log_abs(self) -> float:
        return self.value.log_abs


class Estimator:
    """Russian roulette or weighted single-term estimator for a fixed ``mu``."""

    def __init__(self, scheme, dist: TruncationDistribution):
        self.scheme = EstimatorScheme.parse(scheme)
        self.dist = dist

    def __call__(self, cursor: LevelCursor, K: int) -> EstimateRecord:
        if K < 1:
            raise ValueError(f"truncation level must be >= 1, got {K}")
        before = cursor.ledger.total
        if self.scheme is EstimatorScheme.RUSSIAN_ROULETTE:
            value = self._roulette(cursor, K)
            levels = range(1, K + 1)
            terms = K
        else:
            value = cursor.increment(K).scale(-self.dist.log_pmf(K))
            levels = range(max(K - 1, 1), K + 1)
            terms = 1
        return EstimateRecord(
            value=value,
            K=K,
            cost=cursor.levels_cost(levels),
            terms=terms,
            new_cost=cursor.ledger.total - before,
        )

    def _roulette(self, cursor: LevelCursor, K: int) -> SignedLog:
        partials = cursor._partials.setdefault((self.scheme, self.dist), [])
        while len(partials) < K:
            k = len(partials) + 1
            term = cursor.increment(k).scale(-self.dist.log_survival(k))
            partials.append(term if k == 1 else partials[-1].add(term))
        return partials[K - 1]


def estimate(seq: TargetSequence, theta, K: int, scheme, dist: TruncationDistribution) -> EstimateRecord:
    """Evaluate the truncated estimator at ``theta`` from a fresh cursor."""
    return Estimator(scheme, dist)(LevelCursor(seq, theta), K)


def estimate_increment(seq: TargetSequence, theta, cursor: LevelCursor | None, k: int):
    """Advance ``cursor`` from level ``k - 1`` to ``k`` and return the increment.

    Returns ``(increment, cursor)``; pass ``cursor=None`` for ``k == 1``.
    """
    if cursor is None:
        if k != 1:
            raise CursorMismatch(f"a fresh cursor can only produce level 1, not {k}")
        cursor = LevelCursor(seq, theta)
    elif cursor.seq is not seq or cursor.top != k - 1:
        raise CursorMismatch(f"cursor is at level {cursor.top}, cannot produce increment {k}")
    return cursor.increment(k), cursor
