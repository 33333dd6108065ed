"""Real numbers carried as (log|x|, sign).

Density estimates built from telescoping differences can be negative and
span hundreds of orders of magnitude, so every estimator works with this
type instead of raw floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

NEG_INF = -math.inf


@dataclass(frozen=True, slots=True)
class SignedLog:
    """A real value ``sign * exp(log_abs)``.

    Zero is canonical: ``sign == 0`` and ``log_abs == -inf``.
    """

    log_abs: float
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign!r}")
        if math.isnan(self.log_abs) or self.log_abs == math.inf:
            raise ValueError(f"log_abs must be finite or -inf, got {self.log_abs!r}")
        if (self.sign == 0) != (self.log_abs == NEG_INF):
            raise ValueError("zero must be represented as (-inf, 0)")

    # construction -----------------------------------------------------

    @classmethod
    def zero(cls) -> SignedLog:
        return _ZERO

    @classmethod
    def one(cls) -> SignedLog:
        return _ONE

    @classmethod
    def from_real(cls, x: float) -> SignedLog:
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"cannot represent non-finite value {x!r}")
        if x == 0.0:
            return _ZERO
        return cls(math.log(abs(x)), 1 if x > 0 else -1)

    @classmethod
    def from_log(cls, log_value: float, sign: int = 1) -> SignedLog:
        """Build from a log-magnitude; ``-inf`` gives canonical zero."""
        log_value = float(log_value)
        if log_value == NEG_INF or sign == 0:
            return _ZERO
        return cls(log_value, 1 if sign > 0 else -1)

    @classmethod
    def log_diff(cls, log_a: float, log_b: float) -> SignedLog:
        """``exp(log_a) - exp(log_b)`` for two nonnegative magnitudes."""
        return cls.from_log(log_a).add(cls.from_log(log_b, -1))

    # arithmetic -------------------------------------------------------

    def to_real(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_abs)

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    def add(self, other: SignedLog) -> SignedLog:
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        if self.log_abs >= other.log_abs:
            big, small = self, other
        else:
            big, small = other, self
        delta = small.log_abs - big.log_abs
        if big.sign == small.sign:
            return SignedLog(big.log_abs + math.log1p(math.exp(delta)), big.sign)
        if delta == 0.0:
            return _ZERO
        return SignedLog(big.log_abs + math.log1p(-math.exp(delta)), big.sign)

    def mul(self, other: SignedLog) -> SignedLog:
        if self.sign == 0 or other.sign == 0:
            return _ZERO
        return SignedLog(self.log_abs + other.log_abs, self.sign * other.sign)

    def scale(self, log_weight: float) -> SignedLog:
        """Multiply by the positive number ``exp(log_weight)``."""
        if self.sign == 0:
            return _ZERO
        return SignedLog(self.log_abs + log_weight, self.sign)

    def neg(self) -> SignedLog:
        if self.sign == 0:
            return _ZERO
        return SignedLog(self.log_abs, -self.sign)

    def sub(self, other: SignedLog) -> SignedLog:
        return self.add(other.neg())

    __add__ = add
    __mul__ = mul
    __neg__ = neg
    __sub__ = sub

    def __float__(self) -> float:
        return self.to_real()

    def __repr__(self) -> str:
        return f"SignedLog(log_abs={self.log_abs!r}, sign={self.sign:+d})"


_ZERO = SignedLog(NEG_INF, 0)
_ONE = SignedLog(0.0, 1)


def from_real(x: float) -> SignedLog:
    return SignedLog.from_real(x)


def add(a: SignedLog, b: SignedLog) -> SignedLog:
    return a.add(b)


def mul(a: SignedLog, b: SignedLog) -> SignedLog:
    return a.mul(b)


def signed_sum(terms) -> SignedLog:
    total = _ZERO
    for term in terms:
        total = total.add(term)
    return total
