"""Fair betting functions on binary words and the measures they induce.

A :class:`Martingale` is stored sparsely: only some words carry explicit
capital, and every other word is filled in by fairness (a missing sibling gets
``2 M(parent) - M(sibling)``, otherwise a word inherits its parent's capital).
This keeps deep, single-path strategies cheap while every query stays exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .dyadic import BinaryWord, box_in_ball, cell_box, words
from .exact import Interval, as_fraction, as_vector, format_rational, parse_rational
from .measure import DyadicHistogram

__all__ = [
    "Martingale",
    "OscillationSpec",
    "Oscillation",
    "Witness",
    "InfeasibleSpec",
    "UnfairMartingale",
    "make_uniform",
    "mix",
    "measure_of",
    "build_oscillating",
    "minimum_depth",
    "quotient_trace",
    "ball_volume",
    "read_martingale",
    "write_martingale",
]


class InfeasibleSpec(ValueError):
    """Oscillation parameters that cannot be realised (bad constants or too short a word)."""

    def __init__(self, message: str, needed_depth: int | None = None):
        super().__init__(message)
        self.needed_depth = needed_depth


class UnfairMartingale(ValueError):
    pass


class Martingale:
    """Fair, strictly positive martingale of finite depth.

    Args:
      depth: words longer than this are not part of the strategy.
      values: explicit capital for some words; must include the root ``""``.
      bound: optional ``(lo, hi)``; when given every value must lie strictly
        between them, checked over all words at construction.
    """

    def __init__(self, depth: int, values: Mapping, bound: tuple | None = None):
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        vals: dict[BinaryWord, Fraction] = {}
        for w, v in values.items():
            w = BinaryWord(w)
            if len(w) > depth:
                raise ValueError(f"word {w!r} deeper than {depth}")
            vals[w] = as_fraction(v)
        if "" not in vals:
            raise ValueError("root capital missing")
        self.depth = depth
        self._values = vals
        self._internal = {w[:i] for w in vals for i in range(len(w))}
        self._check_fair()
        lo, hi = self.value_range()
        if lo <= 0:
            raise ValueError("capital must stay strictly positive")
        self.bound = None
        if bound is not None:
            blo, bhi = as_fraction(bound[0]), as_fraction(bound[1])
            if not blo < lo or not hi < bhi:
                raise ValueError(f"values [{lo}, {hi}] escape the bound ({blo}, {bhi})")
            self.bound = (blo, bhi)

    def __call__(self, word: str) -> Fraction:
        return self.value(word)

    def value(self, word: str) -> Fraction:
        if len(word) > self.depth:
            raise ValueError(f"word longer than depth {self.depth}")
        return self._lookup(word)

    def _lookup(self, word: str) -> Fraction:
        v = self._values.get(word)
        if v is not None:
            return v
        parent = word[:-1]
        sib = parent + ("1" if word[-1] == "0" else "0")
        if sib in self._values:
            return 2 * self._lookup(parent) - self._values[sib]
        return self._lookup(parent)

    @property
    def root(self) -> Fraction:
        return self._values[""]

    @property
    def explicit(self) -> dict:
        return dict(self._values)

    def _relevant(self) -> set:
        nodes = set(self._values) | self._internal
        nodes |= {w[:-1] + ("1" if w[-1] == "0" else "0") for w in list(nodes) if w}
        return nodes

    def _check_fair(self):
        for w in self._internal:
            if w + "0" in self._values and w + "1" in self._values:
                if self._values[w + "0"] + self._values[w + "1"] != 2 * self._lookup(w):
                    raise UnfairMartingale(f"fairness fails at {w or 'the root'!r}")

    def value_range(self) -> tuple[Fraction, Fraction]:
        """Exact minimum and maximum capital over every word up to the depth."""
        vals = [self._lookup(w) for w in self._relevant() if len(w) <= self.depth]
        return min(vals), max(vals)

    def is_flat_below(self, word: str) -> bool:
        """No explicit bets strictly below ``word``: the subtree keeps its capital."""
        return word not in self._internal

    def check_fairness_exhaustive(self, max_depth: int | None = None) -> int:
        """Verify fairness at every node up to ``max_depth`` by enumeration; returns node count."""
        top = self.depth if max_depth is None else min(max_depth, self.depth)
        count = 0
        for length in range(top):
            for w in words(length):
                if self._lookup(w + "0") + self._lookup(w + "1") != 2 * self._lookup(w):
                    raise UnfairMartingale(f"fairness fails at {w!r}")
                count += 1
        return count

    def check_fairness_sparse(self) -> int:
        """Check fairness at every node whose subtree is not flat (all others are trivially fair)."""
        count = 0
        for w in sorted(self._internal | {""}, key=lambda s: (len(s), s)):
            if len(w) >= self.depth:
                continue
            if self._lookup(w + "0") + self._lookup(w + "1") != 2 * self._lookup(w):
                raise UnfairMartingale(f"fairness fails at {w!r}")
            count += 1
        return count

    def path(self, word: str) -> list[Fraction]:
        """Capital along the prefixes of ``word``."""
        return [self._lookup(word[:i]) for i in range(len(word) + 1)]

    # -- induced measure ------------------------------------------------------

    def cell_mass(self, word: str) -> Fraction:
        """Normalised mass ``lambda([w]) M(w) / M(root)``."""
        return self._lookup(word) / (self.root * (1 << len(word)))

    def box_mass(self, lo, hi, n: int) -> Fraction:
        """Exact normalised mass of the closed box ``[lo, hi]`` (clipped to the unit cube)."""
        lo, hi = as_vector(lo), as_vector(hi)
        return self._box(BinaryWord(), lo, hi, n) / self.root

    def _box(self, word, lo, hi, n):
        clo, chi = cell_box(word, n)
        overlap = Fraction(1)
        inside = True
        for a, b, c, d in zip(clo, chi, lo, hi):
            left, right = max(a, c), min(b, d)
            if right <= left:
                return Fraction(0)
            overlap *= right - left
            inside = inside and c <= a and b <= d
        if inside or len(word) == self.depth or self.is_flat_below(word):
            return self._lookup(word) * overlap
        return self._box(word + "0", lo, hi, n) + self._box(word + "1", lo, hi, n)

    def ball_mass(self, centre, r, n: int, extra: int = 8) -> Interval:
        """Normalised mass of the closed ball, exact for ``n == 1``.

        For ``n >= 2`` cells cut by the sphere are refined ``extra`` levels past
        the last explicit bet and then bounded by ``[0, full mass]``.
        """
        centre, r = as_vector(centre), as_fraction(r)
        if n == 1:
            m = self.box_mass((centre[0] - r,), (centre[0] + r,), 1)
            return Interval(m, m)
        lo, hi = self._ball(BinaryWord(), centre, r * r, n, None, extra * n)
        return Interval(lo / self.root, hi / self.root)

    def _ball(self, word, centre, r2, n, budget, extra):
        clo, chi = cell_box(word, n)
        near = sum(max(a - c, Fraction(0), c - b) ** 2 for a, b, c in zip(clo, chi, centre))
        if near >= r2:
            return Fraction(0), Fraction(0)
        full = self._lookup(word[: self.depth]) / (1 << len(word))
        if box_in_ball(clo, chi, centre, r2):
            return full, full
        if budget is None and (len(word) >= self.depth or self.is_flat_below(word)):
            budget = extra
        if budget == 0:
            return Fraction(0), full
        nxt = None if budget is None else budget - 1
        a0, b0 = self._ball(word + "0", centre, r2, n, nxt, extra)
        a1, b1 = self._ball(word + "1", centre, r2, n, nxt, extra)
        return a0 + a1, b0 + b1

    def __repr__(self):
        return f"Martingale(depth={self.depth}, explicit={len(self._values)})"


def make_uniform(d: int) -> Martingale:
    return Martingale(d, {"": Fraction(1)})


def mix(alpha, m1: Martingale, m2: Martingale) -> Martingale:
    """Convex combination ``alpha m1 + (1 - alpha) m2`` (dense, so keep depths small)."""
    alpha = as_fraction(alpha)
    if m1.depth != m2.depth:
        raise ValueError("depth mismatch")
    vals = {}
    for length in range(m1.depth + 1):
        for w in words(length):
            vals[w] = alpha * m1(w) + (1 - alpha) * m2(w)
    return Martingale(m1.depth, vals)


def measure_of(M: Martingale, n: int = 1) -> DyadicHistogram:
    """Histogram of ``mu_M`` on the depth-``M.depth`` cells (enumerates ``2**depth`` cells)."""
    if n < 1:
        raise ValueError("dimension must be positive")
    if M.depth % n:
        raise ValueError(f"depth {M.depth} is not a multiple of the dimension {n}")
    weights = {w: M.cell_mass(w) for w in words(M.depth)}
    return DyadicHistogram(n, M.depth // n, weights)


# -- oscillating construction ------------------------------------------------

@dataclass(frozen=True)
class OscillationSpec:
    """Constants for the two-phase martingale.

    ``k`` is a bit gap: a witness at bit level ``L`` needs the capital bound at
    levels ``L - k`` through ``L`` and a ball squeezed between the cells of
    ``Z|L`` and ``Z|L-k``.
    """

    p: Fraction
    q: Fraction
    k: int
    target: str
    n: int = 1
    initial: Fraction | None = None
    n_osc: int = 2
    point: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", as_fraction(self.p))
        object.__setattr__(self, "q", as_fraction(self.q))
        object.__setattr__(self, "target", BinaryWord(self.target))
        if self.k < 0 or self.n < 1 or self.n_osc < 1:
            raise InfeasibleSpec("k must be >= 0, n and n_osc positive")
        if not self.p > self.q > 1:
            raise InfeasibleSpec(f"need p > q > 1, got p={self.p}, q={self.q}")
        if self.p <= self.q * 4 ** self.k:
            raise InfeasibleSpec(
                f"separation fails: 2^-{self.k}*{self.p} - 2^{self.k}*{self.q} <= 0")
        if self.initial is None:
            init = Fraction(1) if self.q - 1 < 1 else self.q
        else:
            init = as_fraction(self.initial)
        if not self.lower < init < self.upper:
            raise InfeasibleSpec(f"initial capital {init} outside ({self.lower}, {self.upper})")
        object.__setattr__(self, "initial", init)
        if len(self.target) % self.n:
            raise InfeasibleSpec("target length must be a multiple of n")
        if self.point is None:
            lo, hi = cell_box(self.target, self.n)
            pt = tuple((a + b) / 2 for a, b in zip(lo, hi))
        else:
            pt = as_vector(self.point)
            lo, hi = cell_box(self.target, self.n)
            if len(pt) != self.n or not all(a <= x <= b for a, x, b in zip(lo, pt, hi)):
                raise InfeasibleSpec("point does not lie in the target cell")
        object.__setattr__(self, "point", pt)

    @property
    def lower(self) -> Fraction:
        return self.q - 1

    @property
    def upper(self) -> Fraction:
        return self.p + 1

    @property
    def up_threshold(self) -> Fraction:
        """Quotient lower bound ``2^-k p`` in units of the root capital."""
        return self.p / (self.initial * 2 ** self.k)

    @property
    def down_threshold(self) -> Fraction:
        return self.q * 2 ** self.k / self.initial


@dataclass(frozen=True)
class Witness:
    """A depth where the capital bound is held across the gap window.

    ``radius`` is the ball radius squeezed between the two cells (``None`` when
    ``k == 0``, where the witness is the capital alone).
    """

    level: int
    capital: Fraction
    outer_level: int
    radius: Fraction | None


@dataclass
class Oscillation:
    martingale: Martingale
    spec: OscillationSpec
    point: tuple
    up: list
    down: list
    path: list = field(repr=False)

    @property
    def s_up(self) -> list[int]:
        return [w.level for w in self.up]

    @property
    def s_down(self) -> list[int]:
        return [w.level for w in self.down]

    def interleaved(self) -> bool:
        """Up and down witness levels alternate, starting with an up witness."""
        merged = sorted([(w.level, "u") for w in self.up] + [(w.level, "d") for w in self.down])
        tags = [t for _, t in merged]
        return all(t == ("u" if i % 2 == 0 else "d") for i, t in enumerate(tags))

    def radii(self) -> list[Fraction]:
        """Witness radii ordered from coarse to fine."""
        ws = sorted(self.up + self.down, key=lambda w: w.level)
        return [w.radius for w in ws if w.radius is not None]


def _squeeze_radius(point, word: str, level: int, outer: int, n: int) -> Fraction | None:
    """Largest ball around ``point`` inside the outer cell, if it still covers the inner cell."""
    olo, ohi = cell_box(word[:outer], n)
    r = min(min(x - a, b - x) for a, x, b in zip(olo, point, ohi))
    if r <= 0:
        return None
    ilo, ihi = cell_box(word[:level], n)
    return r if box_in_ball(ilo, ihi, point, r * r) else None


def _run_phases(spec: OscillationSpec, length: int, sandwich) -> tuple:
    lo, hi = spec.lower, spec.upper
    c = spec.initial
    path = [c]
    up, down = [], []
    phase = "up"
    for level in range(1, length + 1):
        if phase == "up":
            c = c if c >= spec.p else min(spec.p, c + (c - lo) / 2)
        else:
            c = c if c <= spec.q else max(spec.q, c - (hi - c) / 2)
        path.append(c)
        outer = level - spec.k
        if level % spec.n or outer < 0:
            continue
        window = path[outer:]
        if phase == "up" and all(v >= spec.p for v in window):
            r = sandwich(level, outer)
            if r is not False:
                up.append(Witness(level, c, outer, r))
                phase = "down"
        elif phase == "down" and all(v <= spec.q for v in window):
            r = sandwich(level, outer)
            if r is not False:
                down.append(Witness(level, c, outer, r))
                phase = "up"
        if len(up) >= spec.n_osc and len(down) >= spec.n_osc:
            return path, up, down, level
    return path, up, down, None


def minimum_depth(spec: OscillationSpec) -> int:
    """Depth the capital schedule needs if every level admitted a squeeze (a lower bound)."""
    limit = 64 + 16 * spec.n_osc * (spec.k + 1) * spec.n
    while True:
        _, _, _, done = _run_phases(spec, limit, lambda level, outer: None)
        if done is not None:
            return done
        limit *= 2


def build_oscillating(spec: OscillationSpec) -> Oscillation:
    """Bet along ``spec.target`` so capital alternately reaches ``p`` and ``q``.

    Off the target word each bet's complement is placed on the sibling, whose
    subtree then stays flat. Raises :class:`InfeasibleSpec` if the word is too
    short for ``n_osc`` witnesses of each kind.
    """
    word = spec.target

    def sandwich(level, outer):
        if spec.k == 0:
            return None
        r = _squeeze_radius(spec.point, word, level, outer, spec.n)
        return False if r is None else r

    path, up, down, done = _run_phases(spec, len(word), sandwich)
    if done is None:
        need = minimum_depth(spec)
        raise InfeasibleSpec(
            f"target of length {len(word)} hosts {len(up)} up and {len(down)} down "
            f"witnesses; at least depth {need} is needed for {spec.n_osc} of each",
            needed_depth=need)
    values = {word[:i]: path[i] for i in range(done + 1)}
    M = Martingale(len(word), values, bound=(spec.lower, spec.upper))
    return Oscillation(M, spec, spec.point, up, down, path[: done + 1])


# -- derivative quotients ----------------------------------------------------

_PI = Interval(Fraction(314159265358979, 10 ** 14), Fraction(314159265358980, 10 ** 14))


def ball_volume(r, n: int) -> Interval:
    """Certified Lebesgue measure of a Euclidean ``n``-ball."""
    r = as_fraction(r)
    if n == 1:
        return Interval.point(2 * r)
    if n % 2 == 0:
        m = n // 2
        coef = Interval(_PI.lo ** m, _PI.hi ** m) / math.factorial(m)
    else:
        m = (n - 1) // 2
        coef = Interval(_PI.lo ** m, _PI.hi ** m) * Fraction(
            2 ** n * math.factorial(m), math.factorial(n))
    return coef * r ** n


def quotient_trace(M: Martingale, z, radii: Iterable, n: int = 1) -> list[tuple[Fraction, Interval]]:
    """Certified ``mu_M(B_r(z)) / lambda(B_r(z) & [0,1]^n)`` for each radius."""
    z = as_vector(z)
    if len(z) != n:
        raise ValueError("point dimension mismatch")
    if any(x < 0 or x > 1 for x in z):
        raise ValueError("point outside the unit cube")
    uniform = make_uniform(M.depth)
    out = []
    for r in radii:
        r = as_fraction(r)
        if not 0 < r <= Fraction(1, 3):
            raise ValueError("radii must lie in (0, 1/3]")
        mass = M.ball_mass(z, r, n)
        inside = all(r <= x <= 1 - r for x in z)
        vol = ball_volume(r, n) if inside else uniform.ball_mass(z, r, n)
        out.append((r, mass / vol))
    return out


# -- file format -------------------------------------------------------------

def write_martingale(M: Martingale) -> str:
    out = [f"depth {M.depth}"]
    for w, v in sorted(M.explicit.items(), key=lambda kv: (len(kv[0]), kv[0])):
        out.append(f"{w or '-'} {format_rational(v)}")
    return "\n".join(out) + "\n"


def read_martingale(text: str) -> Martingale:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0].split()[0] != "depth":
        raise ValueError("martingale file must start with 'depth d'")
    depth = int(lines[0].split()[1])
    vals = {}
    for ln in lines[1:]:
        w, v = ln.split()
        w = "" if w == "-" else w
        if w in vals:
            raise ValueError(f"duplicate word {w!r}")
        vals[w] = parse_rational(v)
    return Martingale(depth, vals)
