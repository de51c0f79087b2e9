"""Bounded Martin-Löf tests built from the image measure of a map on a dyadic grid."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .dyadic import BinaryWord

__all__ = [
    "BoundedMLTest",
    "ModulusTooCoarse",
    "critical_test_build",
    "write_mltest",
    "read_mltest",
]


class ModulusTooCoarse(RuntimeError):
    """Image enclosures are too wide to resolve the target grid."""


def _word_of_index(idx: tuple, depth: int) -> str:
    # interleave: bit i of the word is bit (i // n) of coordinate i % n
    n = len(idx)
    bits = []
    for level in range(depth):
        for c in range(n):
            bits.append("1" if (idx[c] >> (depth - 1 - level)) & 1 else "0")
    return "".join(bits)


@dataclass
class BoundedMLTest:
    """Levels ``V_0 .. V_imax`` as unions of depth-``depth`` cells.

    ``nu_lo`` / ``nu_hi`` hold certified bounds on the image measure of each
    grid cell; a cell enters ``V_i`` when ``lambda(cell) <= 2**-i * nu_lo``.
    """

    n: int
    depth: int
    i_max: int
    levels: list
    nu_lo: dict = field(default_factory=dict)
    nu_hi: dict = field(default_factory=dict)

    @property
    def cell_volume(self) -> Fraction:
        return Fraction(1, 1 << (self.n * self.depth))

    def measure(self, i: int) -> Fraction:
        return len(self.levels[i]) * self.cell_volume

    def measure_in(self, i: int, tau: str) -> Fraction:
        return sum(1 for w in self.levels[i] if w.startswith(tau)) * self.cell_volume

    def nu_lower(self, tau: str) -> Fraction:
        """Lower bound for the image measure of ``[tau]`` (cells partition it)."""
        return sum((m for w, m in self.nu_lo.items() if w.startswith(tau)), Fraction(0))

    def verify(self) -> bool:
        """Exact check of nesting, the level bounds and every cell inequality up to the grid depth."""
        for i in range(self.i_max + 1):
            if self.measure(i) > Fraction(1, 1 << i):
                return False
            if i and not set(self.levels[i]) <= set(self.levels[i - 1]):
                return False
        # aggregate bottom-up so every prefix is visited once
        for i in range(self.i_max + 1):
            vol = {w: self.cell_volume for w in self.levels[i]}
            nu = dict(self.nu_lo)
            for length in range(self.n * self.depth, -1, -1):
                for w in vol:
                    if vol.get(w, 0) * (1 << i) > nu.get(w, 0):
                        return False
                if length:
                    up_v, up_n = {}, {}
                    for w, v in vol.items():
                        up_v[w[:-1]] = up_v.get(w[:-1], 0) + v
                    for w, v in nu.items():
                        up_n[w[:-1]] = up_n.get(w[:-1], 0) + v
                    vol, nu = up_v, up_n
        return True


def _contained(lo, hi, hi_open, a, b, last: bool) -> bool:
    """Image ``[lo, hi]`` (open at ``hi`` if flagged) inside the cell ``[a, b)`` (closed if last)."""
    if lo < a:
        return False
    if hi < b:
        return True
    return hi == b and (hi_open or last)


def critical_test_build(f, i_max: int, depth: int, n: int = 1, extra: int = 2,
                        slack=Fraction(1, 2)) -> BoundedMLTest:
    """Build the test for the image measure ``nu = lambda o f^{-1}`` on the depth-``depth`` grid.

    Domain cells ``extra`` levels finer are pushed through ``f.image_box``;
    a domain cell counts toward ``nu_lo`` of a grid cell only when its whole
    image lies inside that cell, and toward ``nu_hi`` when it meets it.
    ``ModulusTooCoarse`` is raised when the total enclosure slack exceeds ``slack``.
    """
    if getattr(f, "n", n) != n:
        raise ValueError("map dimension differs from n")
    side = 1 << depth
    fine = 1 << (depth + extra)
    dvol = Fraction(1, fine ** n)
    nu_lo: dict = {}
    nu_hi: dict = {}
    for idx in itertools.product(range(fine), repeat=n):
        lo = tuple(Fraction(i, fine) for i in idx)
        hi = tuple(Fraction(i + 1, fine) for i in idx)
        img = f.image_box(lo, hi)
        ranges = []
        inside = True
        owner = []
        for a, b, hopen in img:
            # grid columns met by [a, b]
            j0 = max(0, int(a * side) if a >= 0 else -1)
            j1 = min(side - 1, int(b * side))
            if b < 0 or a > 1 or j0 > j1:
                ranges.append(range(0))
                inside = False
                continue
            ranges.append(range(j0, j1 + 1))
            j = min(int(a * side), side - 1) if a >= 0 else None
            if j is None or not _contained(a, b, hopen, Fraction(j, side), Fraction(j + 1, side), j == side - 1):
                inside = False
            owner.append(j)
        for cell in itertools.product(*ranges):
            w = _word_of_index(cell, depth)
            nu_hi[w] = nu_hi.get(w, Fraction(0)) + dvol
        if inside:
            w = _word_of_index(tuple(owner), depth)
            nu_lo[w] = nu_lo.get(w, Fraction(0)) + dvol
    if sum(nu_hi.values()) - sum(nu_lo.values()) > slack:
        raise ModulusTooCoarse("image enclosures overlap too many grid cells")
    vol = Fraction(1, side ** n)
    levels = []
    for i in range(i_max + 1):
        levels.append(sorted(w for w, m in nu_lo.items() if vol * (1 << i) <= m))
    return BoundedMLTest(n, depth, i_max, levels, nu_lo, nu_hi)


def write_mltest(t: BoundedMLTest) -> str:
    out = [f"levels {t.i_max}"]
    for i, level in enumerate(t.levels):
        out.append(f"V {i}")
        out.extend(w or "-" for w in level)
    return "\n".join(out) + "\n"


def read_mltest(text: str, n: int = 1) -> BoundedMLTest:
    lines = [l.split("#", 1)[0].strip() for l in text.splitlines()]
    lines = [l for l in lines if l]
    if not lines or lines[0].split()[0] != "levels":
        raise ValueError("test file must start with 'levels i_max'")
    i_max = int(lines[0].split()[1])
    levels: list = []
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "V":
            if int(parts[1]) != len(levels):
                raise ValueError("levels out of order")
            levels.append([])
        elif not levels:
            raise ValueError("cell word before any level header")
        else:
            levels[-1].append("" if parts[0] == "-" else BinaryWord(parts[0]))
    if len(levels) != i_max + 1:
        raise ValueError("wrong number of levels")
    lengths = {len(w) for level in levels for w in level}
    if len(lengths) > 1 or (lengths and next(iter(lengths)) % n):
        raise ValueError("cell words must share one grid depth")
    depth = next(iter(lengths)) // n if lengths else 0
    return BoundedMLTest(n, depth, i_max, levels)
