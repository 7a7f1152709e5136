"""Exact arithmetic on rationals and sums of square roots.

Tilted cylinders put lattice points at irrational distances from the
cylinder faces.  Every quantity the geometry needs is a finite sum
``c_0 + c_1*sqrt(m_1) + ... + c_k*sqrt(m_k)`` with rational ``c_i`` and
squarefree integers ``m_i``; the sign of such a sum is decidable, which
is all the membership predicates require.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence, Union

Rational = Union[int, Fraction]


def as_fraction(value) -> Fraction:
    """Parse ``value`` into a Fraction; strings may be ``"p/q"`` or decimals."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**12)
    text = str(value).strip()
    if not text:
        raise ValueError("empty rational literal")
    return Fraction(text)


def format_fraction(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def parse_vector(text: str) -> tuple[Fraction, ...]:
    return tuple(as_fraction(part) for part in text.split(",") if part.strip())


def format_vector(vec: Iterable[Fraction]) -> str:
    return ",".join(format_fraction(x) for x in vec)


def dot(u: Sequence[Rational], v: Sequence[Rational]):
    return sum(a * b for a, b in zip(u, v))


@lru_cache(maxsize=4096)
def squarefree_split(m: int) -> tuple[int, int]:
    """Return ``(s, r)`` with ``m = s*s*r`` and ``r`` squarefree."""
    if m < 0:
        raise ValueError("negative radicand")
    if m == 0:
        return 0, 1
    s, r = 1, 1
    p = 2
    rest = m
    while p * p <= rest:
        k = 0
        while rest % p == 0:
            rest //= p
            k += 1
        s *= p ** (k // 2)
        if k % 2:
            r *= p
        p += 1
    r *= rest
    return s, r


def sqrt_term(coef: Rational, radicand: Rational) -> tuple[Fraction, int]:
    """Rewrite ``coef * sqrt(radicand)`` as ``c * sqrt(r)`` with squarefree integer r."""
    radicand = Fraction(radicand)
    if radicand < 0:
        raise ValueError("negative radicand")
    # sqrt(p/q) = sqrt(p*q)/q
    s, r = squarefree_split(radicand.numerator * radicand.denominator)
    return Fraction(coef) * s / radicand.denominator, r


class Surd:
    """An exact real of the form ``sum_r c_r * sqrt(r)`` (r squarefree)."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[int, Fraction] | None = None):
        self.terms = {r: c for r, c in (terms or {}).items() if c != 0}

    @classmethod
    def rational(cls, value: Rational) -> "Surd":
        return cls({1: Fraction(value)})

    @classmethod
    def root(cls, coef: Rational, radicand: Rational) -> "Surd":
        c, r = sqrt_term(coef, radicand)
        return cls({r: c})

    def __add__(self, other) -> "Surd":
        other = _coerce(other)
        out = dict(self.terms)
        for r, c in other.terms.items():
            out[r] = out.get(r, Fraction(0)) + c
        return Surd(out)

    __radd__ = __add__

    def __neg__(self) -> "Surd":
        return Surd({r: -c for r, c in self.terms.items()})

    def __sub__(self, other) -> "Surd":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "Surd":
        return _coerce(other) - self

    def __mul__(self, other) -> "Surd":
        other = _coerce(other)
        out: dict[int, Fraction] = {}
        for r1, c1 in self.terms.items():
            for r2, c2 in other.terms.items():
                c, r = sqrt_term(c1 * c2, r1 * r2)
                out[r] = out.get(r, Fraction(0)) + c
        return Surd(out)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Surd":
        if isinstance(other, Surd):
            if len(other.terms) != 1:
                raise ZeroDivisionError("only single-term surds are invertible here")
            (r, c), = other.terms.items()
            # 1/(c*sqrt(r)) = sqrt(r)/(c*r)
            return self * Surd({r: 1 / (c * r)})
        other = Fraction(other)
        return Surd({r: c / other for r, c in self.terms.items()})

    def __float__(self) -> float:
        return math.fsum(float(c) * math.sqrt(r) for r, c in self.terms.items())

    def sign(self) -> int:
        return surd_sign(self.terms)

    def is_rational(self) -> bool:
        return all(r == 1 for r in self.terms)

    def __lt__(self, other) -> bool:
        return (self - other).sign() < 0

    def __le__(self, other) -> bool:
        return (self - other).sign() <= 0

    def __gt__(self, other) -> bool:
        return (self - other).sign() > 0

    def __ge__(self, other) -> bool:
        return (self - other).sign() >= 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, (Surd, int, Fraction)):
            return NotImplemented
        return (self - other).sign() == 0

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items())))

    def __repr__(self) -> str:
        if not self.terms:
            return "Surd(0)"
        parts = [str(c) if r == 1 else f"{c}*sqrt({r})" for r, c in sorted(self.terms.items())]
        return "Surd(" + " + ".join(parts) + ")"


def _coerce(value) -> Surd:
    if isinstance(value, Surd):
        return value
    return Surd.rational(value)


def surd_sign(terms: dict[int, Fraction]) -> int:
    """Exact sign of ``sum_r terms[r] * sqrt(r)`` over distinct squarefree r.

    Square roots of distinct squarefree integers are linearly independent
    over Q, so the sum vanishes only when every coefficient does.  Otherwise
    rigorous integer bounds on each root are tightened until the enclosing
    interval excludes zero.
    """
    live = [(r, Fraction(c)) for r, c in terms.items() if c != 0]
    if not live:
        return 0
    if all(r == 1 for r, _ in live):
        total = sum(c for _, c in live)
        return (total > 0) - (total < 0)
    # float evaluation with a relative error bound covering conversion,
    # sqrt, multiplication and summation roundoff
    mags = [abs(float(c)) * math.sqrt(r) for r, c in live]
    approx = math.fsum(float(c) * math.sqrt(r) for r, c in live)
    scale = math.fsum(mags)
    if math.isfinite(approx) and abs(approx) > 1e-12 * scale:
        return 1 if approx > 0 else -1
    bits = 64
    while True:
        lo = Fraction(0)
        hi = Fraction(0)
        denom = 1 << bits
        for r, c in live:
            if r == 1:
                lo += c
                hi += c
                continue
            root_lo = Fraction(math.isqrt(r << (2 * bits)), denom)
            root_hi = root_lo + Fraction(1, denom)
            if c > 0:
                lo += c * root_lo
                hi += c * root_hi
            else:
                lo += c * root_hi
                hi += c * root_lo
        if lo > 0:
            return 1
        if hi < 0:
            return -1
        bits *= 2


def floor_surd(value: Surd) -> int:
    """Exact floor of a Surd."""
    k = math.floor(float(value))
    while (value - k).sign() < 0:
        k -= 1
    while (value - (k + 1)).sign() >= 0:
        k += 1
    return k


def ceil_surd(value: Surd) -> int:
    return -floor_surd(-value)
