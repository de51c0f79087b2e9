"""Binary words, dyadic rationals and dyadic cubes in [0,1]^n.

Words name cells through the interleaved decomposition: bit ``i`` of a word
halves coordinate ``i mod n``.  A word of length ``n*s`` therefore names a cube
of side ``2**-s``; shorter remainders name boxes (see :func:`cell_box`).
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

from .exact import as_fraction, format_rational

__all__ = [
    "BinaryWord",
    "DyadicRational",
    "DyadicCube",
    "DegenerateDyadicPoint",
    "NotFound",
    "Sandwich",
    "KEstimate",
    "SHIFTS",
    "shifts",
    "cell_box",
    "cube_of_word",
    "word_of_point",
    "words",
    "is_dyadic",
    "box_in_ball",
    "ball_in_box",
    "sandwich_search",
    "estimate_k_constant",
]

SHIFTS = (Fraction(0), Fraction(1, 3), Fraction(2, 3))


class NotFound(LookupError):
    """No sandwich exists within the depth bound."""


class DegenerateDyadicPoint(ValueError):
    """Every admissible shift puts the point on a dyadic cell boundary."""


class BinaryWord(str):
    """A finite 0/1 string; concatenation with ``+`` keeps the type."""

    def __new__(cls, bits=""):
        if isinstance(bits, (list, tuple)):
            bits = "".join(str(int(b)) for b in bits)
        bits = str(bits)
        if bits.strip("01"):
            raise ValueError(f"not a binary word: {bits!r}")
        return super().__new__(cls, bits)

    def __add__(self, other):
        return BinaryWord(str.__add__(self, BinaryWord(other)))

    def __getitem__(self, key):
        item = str.__getitem__(self, key)
        return BinaryWord(item) if isinstance(key, slice) else item

    def prefix(self, length: int) -> "BinaryWord":
        return self[:length]

    def is_prefix_of(self, other: str) -> bool:
        return other.startswith(self)

    @property
    def parent(self) -> "BinaryWord":
        if not self:
            raise ValueError("the empty word has no parent")
        return self[:-1]

    @property
    def sibling(self) -> "BinaryWord":
        if not self:
            raise ValueError("the empty word has no sibling")
        return self[:-1] + ("1" if self[-1] == "0" else "0")

    def __repr__(self):
        return f"BinaryWord({str(self)!r})"


class DyadicRational(Fraction):
    """A rational ``numerator / 2**exponent``; sums, differences and products stay dyadic."""

    def __new__(cls, numerator=0, denominator=None):
        self = super().__new__(cls, numerator, denominator)
        d = self.denominator
        if d & (d - 1):
            raise ValueError(f"{Fraction(self)} is not dyadic")
        return self

    @property
    def exponent(self) -> int:
        return self.denominator.bit_length() - 1

    def _wrap(self, value):
        if isinstance(value, Fraction) and is_dyadic(value):
            return DyadicRational(value)
        return value

    def __add__(self, other):
        return self._wrap(Fraction.__add__(self, other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(Fraction.__sub__(self, other))

    def __rsub__(self, other):
        return self._wrap(Fraction.__rsub__(self, other))

    def __mul__(self, other):
        return self._wrap(Fraction.__mul__(self, other))

    __rmul__ = __mul__

    def __neg__(self):
        return DyadicRational(-self.numerator, self.denominator)

    def __repr__(self):
        return f"DyadicRational({self.numerator}, 2**{self.exponent})"


def is_dyadic(x, max_exponent: int | None = None) -> bool:
    d = Fraction(x).denominator
    if d & (d - 1):
        return False
    return max_exponent is None or d.bit_length() - 1 <= max_exponent


def cell_box(word: str, n: int) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    """Lower and upper corners of the cell named by ``word`` (any length)."""
    if n < 1:
        raise ValueError("dimension must be positive")
    num = [0] * n
    lev = [0] * n
    for i, b in enumerate(word):
        c = i % n
        num[c] = 2 * num[c] + (b == "1")
        lev[c] += 1
    lo = tuple(Fraction(num[c], 1 << lev[c]) for c in range(n))
    hi = tuple(Fraction(num[c] + 1, 1 << lev[c]) for c in range(n))
    return lo, hi


def word_of_point(x: Sequence, n: int, length: int) -> BinaryWord:
    """First ``length`` interleaved bits of a point of [0,1]^n.

    Dyadic coordinates use the right-continuous convention (the cell whose
    closed-open extent contains the point); coordinate 1 maps to the last cell.
    """
    x = tuple(as_fraction(v) for v in x)
    if len(x) != n:
        raise ValueError("point dimension mismatch")
    if any(v < 0 or v > 1 for v in x):
        raise ValueError("point outside the unit cube")
    levels = [length // n + (1 if c < length % n else 0) for c in range(n)]
    idx = []
    for v, lev in zip(x, levels):
        k = (v.numerator << lev) // v.denominator
        idx.append(min(k, (1 << lev) - 1))
    bits = []
    for i in range(length):
        c = i % n
        pos = i // n
        bits.append("1" if (idx[c] >> (levels[c] - 1 - pos)) & 1 else "0")
    return BinaryWord("".join(bits))


def words(length: int) -> Iterator[BinaryWord]:
    """All words of a given length in lexicographic order."""
    for bits in itertools.product("01", repeat=length):
        yield BinaryWord("".join(bits))


def shifts(n: int) -> list[tuple[Fraction, ...]]:
    """The shift set {0, 1/3, 2/3}^n in lexicographic order."""
    return [tuple(t) for t in itertools.product(SHIFTS, repeat=n)]


@dataclass(frozen=True)
class DyadicCube:
    """Cube ``anchor + shift + [0, 2**-level]^n``."""

    n: int
    anchor: tuple
    level: int
    shift: tuple = field(default=None)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        anchor = tuple(DyadicRational(as_fraction(a)) for a in self.anchor)
        shift = self.shift if self.shift is not None else (Fraction(0),) * self.n
        shift = tuple(as_fraction(t) for t in shift)
        if len(anchor) != self.n or len(shift) != self.n:
            raise ValueError("anchor/shift dimension mismatch")
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "shift", shift)

    @property
    def side(self) -> Fraction:
        return Fraction(1, 1 << self.level)

    @property
    def volume(self) -> Fraction:
        return Fraction(1, 1 << (self.level * self.n))

    @property
    def lower(self) -> tuple:
        return tuple(a + t for a, t in zip(self.anchor, self.shift))

    @property
    def upper(self) -> tuple:
        s = self.side
        return tuple(a + t + s for a, t in zip(self.anchor, self.shift))

    @property
    def center(self) -> tuple:
        h = self.side / 2
        return tuple(a + h for a in self.lower)

    def children(self) -> list["DyadicCube"]:
        h = self.side / 2
        out = []
        for offs in itertools.product((0, 1), repeat=self.n):
            anchor = tuple(a + o * h for a, o in zip(self.anchor, offs))
            out.append(DyadicCube(self.n, anchor, self.level + 1, self.shift))
        return out

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise ValueError("level-0 cube has no dyadic parent")
        s = Fraction(1, 1 << (self.level - 1))
        anchor = tuple((a // s) * s for a in self.anchor)
        return DyadicCube(self.n, anchor, self.level - 1, self.shift)

    def contains_point(self, x) -> bool:
        return all(lo <= v <= hi for v, lo, hi in zip(as_vector_n(x), self.lower, self.upper))

    def contains_cube(self, other: "DyadicCube") -> bool:
        return all(a <= c and d <= b for a, b, c, d in
                   zip(self.lower, self.upper, other.lower, other.upper))

    def word(self) -> BinaryWord:
        """Interleaved word of an unshifted cube inside [0,1]^n."""
        if any(self.shift):
            raise ValueError("shifted cubes have no word")
        if any(a < 0 or a + self.side > 1 for a in self.anchor):
            raise ValueError("cube is not inside the unit cube")
        centre = self.center
        return word_of_point(centre, self.n, self.n * self.level)

    def __str__(self):
        anchor = ",".join(format_rational(a) for a in self.anchor)
        shift = ",".join(_shift_text(t) for t in self.shift)
        return f"n={self.n} anchor={anchor} side=1/2^{self.level} shift={shift}"


def _shift_text(t: Fraction) -> str:
    return "0" if t == 0 else f"{t.numerator}/{t.denominator}"


def as_vector_n(x) -> tuple:
    return tuple(as_fraction(v) for v in x)


def cube_of_word(word: str, n: int) -> DyadicCube:
    """Cube named by ``word`` in dimension ``n``.

    Words whose length is not a multiple of ``n`` name the smallest whole cube
    containing their cell, i.e. the cube of the longest prefix of length ``n*s``.
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    word = BinaryWord(word)
    s = len(word) // n
    lo, _ = cell_box(word[: n * s], n)
    return DyadicCube(n, lo, s)


def box_in_ball(lo, hi, centre, r2: Fraction) -> bool:
    """Closed box inside the closed ball of squared radius ``r2`` (exact)."""
    far = sum(max(abs(a - c), abs(b - c)) ** 2 for a, b, c in zip(lo, hi, centre))
    return far <= r2


def ball_in_box(centre, r: Fraction, lo, hi) -> bool:
    """Closed ball inside the closed box; exact since the ball's projections are intervals."""
    return all(a <= c - r and c + r <= b for a, b, c in zip(lo, hi, centre))


@dataclass(frozen=True)
class Sandwich:
    """``inner`` inside ``B_r(point)`` inside ``outer``, both cubes of the word ``word``.

    All geometry is in the frame of ``point = frac(z + shift)``; ``gap`` counts
    cube levels between ``outer`` and ``inner`` (``n * gap`` bits).
    """

    shift: tuple
    point: tuple
    radius: Fraction
    level: int
    gap: int
    inner: DyadicCube
    outer: DyadicCube
    word: BinaryWord

    @property
    def bit_gap(self) -> int:
        return self.gap * self.inner.n


def _frac(v: Fraction) -> Fraction:
    return v - (v.numerator // v.denominator)


def _cube_at(w, s):
    side = Fraction(1, 1 << s)
    lo = tuple(Fraction((v.numerator << s) // v.denominator, 1 << s) for v in w)
    return lo, tuple(a + side for a in lo)


def _sandwich_for_shift(w, r, s_max, n):
    r2 = r * r
    # a cube of side 2^-s fits in the ball only once 2^-s <= 2r
    inv = 1 / (2 * r)
    start = max((inv.numerator // inv.denominator).bit_length() - 1, 0)
    inner_level = None
    for s in range(start, s_max + 1):
        lo, hi = _cube_at(w, s)
        if box_in_ball(lo, hi, w, r2):
            inner_level = s
            break
    if inner_level is None:
        return None
    for j in range(inner_level, -1, -1):
        lo, hi = _cube_at(w, j)
        if ball_in_box(w, r, lo, hi):
            return inner_level, j
    return None


def sandwich_search(z, r, s_max: int, shift_set=None) -> Sandwich:
    """Find a shift and nested cubes sandwiching the ball ``B_r(z + t)``.

    Tries every shift in ``shift_set`` (default all of {0,1/3,2/3}^n) and keeps
    the smallest level gap, earliest shift on ties.
    """
    z = as_vector_n(z)
    n = len(z)
    if n < 1:
        raise ValueError("dimension must be positive")
    r = as_fraction(r)
    if not 0 < r < Fraction(1, 3):
        raise ValueError("radius must lie in (0, 1/3)")
    candidates = shifts(n) if shift_set is None else [as_vector_n(t) for t in shift_set]
    best = None
    degenerate = 0
    for t in candidates:
        w = tuple(_frac(a + b) for a, b in zip(z, t))
        if any(is_dyadic(v, s_max) for v in w):
            degenerate += 1
            continue
        found = _sandwich_for_shift(w, r, s_max, n)
        if found is None:
            continue
        s, j = found
        if best is None or s - j < best[0]:
            best = (s - j, t, w, s, j)
    if best is None:
        if degenerate == len(candidates):
            raise DegenerateDyadicPoint(f"{z} lies on a dyadic boundary for every shift")
        raise NotFound(f"no sandwich within depth {s_max}")
    gap, t, w, s, j = best
    word = word_of_point(w, n, n * s)
    inner = cube_of_word(word, n)
    outer = cube_of_word(word[: n * j], n)
    return Sandwich(t, w, r, s, gap, inner, outer, word)


@dataclass(frozen=True)
class KEstimate:
    n: int
    trials: int
    seed: int
    k_hat: int
    gap_counts: dict

    def __int__(self):
        return self.k_hat


_ODD_PRIME = 2_147_483_647


def estimate_k_constant(n: int, trials: int, seed: int = 0, min_exp: int = 3,
                        max_exp: int = 12) -> KEstimate:
    """Monte-Carlo envelope of the sandwich level gap over random balls.

    Centres have odd denominators so no shift ever lands on a dyadic boundary;
    radii are drawn log-uniformly from ``[2**-max_exp / 2, 2**-min_exp)``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = random.Random(seed)
    counts: dict[int, int] = {}
    for _ in range(trials):
        z = tuple(Fraction(rng.randrange(1, _ODD_PRIME), _ODD_PRIME) for _ in range(n))
        e = rng.randint(min_exp, max_exp)
        r = Fraction(rng.randrange(1 << 19, 1 << 20), 1 << (20 + e))
        sw = sandwich_search(z, r, e + 8)
        counts[sw.gap] = counts.get(sw.gap, 0) + 1
    return KEstimate(n, trials, seed, max(counts), dict(sorted(counts.items())))
