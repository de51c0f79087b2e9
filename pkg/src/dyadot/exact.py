"""Exact rational helpers: certified intervals, integer roots and ``p/q`` text I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

Rational = Union[int, Fraction]
Vector = tuple  # tuple of Fractions

__all__ = [
    "Interval",
    "as_fraction",
    "as_vector",
    "format_rational",
    "parse_rational",
    "parse_vector",
    "iroot",
    "root_bounds",
    "sqrt_bounds",
    "sqrt_upper",
    "norm2",
    "dot",
]


def as_fraction(x) -> Fraction:
    """Convert ints, Fractions, ``p/q`` strings and finite floats exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return parse_rational(x)
    return Fraction(x)


def as_vector(x) -> tuple:
    if isinstance(x, (int, Fraction, str, float)):
        return (as_fraction(x),)
    return tuple(as_fraction(v) for v in x)


def parse_rational(text: str) -> Fraction:
    text = text.strip()
    if not text:
        raise ValueError("empty rational")
    return Fraction(text)


def parse_vector(text: str) -> tuple:
    return tuple(parse_rational(t) for t in text.replace(",", " ").split())


def format_rational(q: Rational) -> str:
    """Render as ``p/q`` (always with a denominator, ``0/1`` for zero)."""
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def dot(x: Sequence[Fraction], y: Sequence[Fraction]) -> Fraction:
    return sum((a * b for a, b in zip(x, y)), Fraction(0))


def norm2(x: Sequence[Fraction]) -> Fraction:
    """Squared Euclidean norm."""
    return sum((a * a for a in x), Fraction(0))


def iroot(n: int, p: int) -> int:
    """Floor of the ``p``-th root of a nonnegative integer."""
    if n < 0:
        raise ValueError("negative radicand")
    if p == 1 or n < 2:
        return n
    if p == 2:
        return math.isqrt(n)
    x = 1 << ((n.bit_length() + p - 1) // p)
    while True:
        y = ((p - 1) * x + n // x ** (p - 1)) // p
        if y >= x:
            break
        x = y
    while x ** p > n:
        x -= 1
    while (x + 1) ** p <= n:
        x += 1
    return x


def root_bounds(q: Rational, p: int, bits: int = 64) -> "Interval":
    """Interval of width at most ``2**-bits`` containing ``q ** (1/p)``."""
    q = Fraction(q)
    if q < 0:
        raise ValueError("negative argument")
    if p == 1:
        return Interval(q, q)
    scaled = q.numerator * (1 << (p * bits)) // q.denominator
    r = iroot(scaled, p)
    lo = Fraction(r, 1 << bits)
    if lo ** p == q:
        return Interval(lo, lo)
    return Interval(lo, Fraction(r + 1, 1 << bits))


def sqrt_bounds(q: Rational, bits: int = 64) -> "Interval":
    return root_bounds(q, 2, bits)


def sqrt_upper(q: Rational, bits: int = 64) -> Fraction:
    return sqrt_bounds(q, bits).hi


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` with exact rational endpoints."""

    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lo", Fraction(self.lo))
        object.__setattr__(self, "hi", Fraction(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: Rational) -> "Interval":
        return cls(x, x)

    @classmethod
    def hull(cls, values: Iterable["Interval | Rational"]) -> "Interval":
        los, his = [], []
        for v in values:
            v = v if isinstance(v, Interval) else Interval.point(v)
            los.append(v.lo)
            his.append(v.hi)
        return cls(min(los), max(his))

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def is_exact(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def __add__(self, other):
        if isinstance(other, Interval):
            return Interval(self.lo + other.lo, self.hi + other.hi)
        return Interval(self.lo + other, self.hi + other)

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Interval):
            other = Interval.point(other)
        ps = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
        return Interval(min(ps), max(ps))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Interval):
            other = Interval.point(other)
        if other.lo <= 0 <= other.hi:
            raise ZeroDivisionError("interval divisor contains zero")
        return self * Interval(1 / other.hi, 1 / other.lo)

    def root(self, p: int, bits: int = 64) -> "Interval":
        return Interval(root_bounds(max(self.lo, 0), p, bits).lo, root_bounds(self.hi, p, bits).hi)

    def certainly_le(self, other) -> bool:
        other = other if isinstance(other, Interval) else Interval.point(other)
        return self.hi <= other.lo

    def certainly_gt(self, other) -> bool:
        other = other if isinstance(other, Interval) else Interval.point(other)
        return self.lo > other.hi

    def __str__(self):
        return f"[{format_rational(self.lo)}, {format_rational(self.hi)}]"
