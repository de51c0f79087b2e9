"""Finitely supported measures and dyadic histograms with exact rational weights."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Mapping, NamedTuple, Union

from .dyadic import BinaryWord, cell_box, words
from .exact import as_fraction, as_vector, format_rational, parse_rational

__all__ = [
    "DiscreteMeasure",
    "DyadicHistogram",
    "DensityBounds",
    "pushforward",
    "histogram_to_discrete",
    "density_bounds",
    "read_discrete",
    "write_discrete",
    "read_histogram",
    "write_histogram",
]


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure on finitely many rational points."""

    points: tuple
    weights: tuple

    def __post_init__(self):
        points = tuple(as_vector(p) for p in self.points)
        weights = tuple(as_fraction(w) for w in self.weights)
        if not points:
            raise ValueError("empty support")
        if len(points) != len(weights):
            raise ValueError("points and weights differ in length")
        n = len(points[0])
        if n < 1 or any(len(p) != n for p in points):
            raise ValueError("inconsistent dimensions")
        if any(w <= 0 for w in weights):
            raise ValueError("weights must be positive")
        if sum(weights) != 1:
            raise ValueError(f"weights sum to {sum(weights)}, not 1")
        if len(set(points)) != len(points):
            raise ValueError("support points must be distinct")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return len(self.points[0])

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(zip(self.points, self.weights))

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        return cls((as_vector(point),), (Fraction(1),))

    @classmethod
    def from_atoms(cls, atoms) -> "DiscreteMeasure":
        """Build from ``(point, weight)`` pairs, merging repeated points."""
        merged: dict[tuple, Fraction] = {}
        for p, w in atoms:
            p = as_vector(p)
            merged[p] = merged.get(p, Fraction(0)) + as_fraction(w)
        merged = {p: w for p, w in merged.items() if w != 0}
        return cls(tuple(merged), tuple(merged.values()))

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        points = [as_vector(p) for p in points]
        w = Fraction(1, len(points))
        return cls(tuple(points), (w,) * len(points))

    def weight_of(self, point) -> Fraction:
        point = as_vector(point)
        for p, w in self:
            if p == point:
                return w
        return Fraction(0)

    def diameter_sq_bound(self) -> Fraction:
        """Squared diameter of the bounding box of the support."""
        lo = [min(p[i] for p in self.points) for i in range(self.n)]
        hi = [max(p[i] for p in self.points) for i in range(self.n)]
        return sum((b - a) ** 2 for a, b in zip(lo, hi))


@dataclass(frozen=True)
class DyadicHistogram:
    """Piecewise-constant probability density on the depth-``depth`` cells of [0,1]^n.

    ``weights`` maps interleaved words of length ``n * depth`` to cell masses;
    absent cells carry zero mass.
    """

    n: int
    depth: int
    weights: Mapping

    def __post_init__(self):
        if self.n < 1 or self.depth < 0:
            raise ValueError("bad dimension or depth")
        length = self.n * self.depth
        clean = {}
        for w, m in self.weights.items():
            w = BinaryWord(w)
            m = as_fraction(m)
            if len(w) != length:
                raise ValueError(f"cell word {w!r} has length {len(w)}, expected {length}")
            if m < 0:
                raise ValueError("negative cell mass")
            if m:
                clean[w] = m
        if sum(clean.values()) != 1:
            raise ValueError(f"cell masses sum to {sum(clean.values())}, not 1")
        object.__setattr__(self, "weights", dict(sorted(clean.items())))

    @classmethod
    def uniform(cls, n: int, depth: int) -> "DyadicHistogram":
        m = Fraction(1, 1 << (n * depth))
        return cls(n, depth, {w: m for w in words(n * depth)})

    @classmethod
    def from_masses(cls, n: int, depth: int, masses) -> "DyadicHistogram":
        """Masses listed in lexicographic word order (left to right when ``n == 1``)."""
        masses = list(masses)
        if len(masses) != 1 << (n * depth):
            raise ValueError("wrong number of cell masses")
        return cls(n, depth, dict(zip(words(n * depth), masses)))

    @classmethod
    def from_densities(cls, n: int, depth: int, densities) -> "DyadicHistogram":
        vol = Fraction(1, 1 << (n * depth))
        return cls.from_masses(n, depth, [as_fraction(d) * vol for d in densities])

    @property
    def cell_volume(self) -> Fraction:
        return Fraction(1, 1 << (self.n * self.depth))

    def mass(self, word: str) -> Fraction:
        """Mass of any cell at or above the histogram depth."""
        if len(word) == self.n * self.depth:
            return self.weights.get(word, Fraction(0))
        if len(word) > self.n * self.depth:
            return self.density(word[: self.n * self.depth]) * Fraction(1, 1 << len(word))
        return sum((m for w, m in self.weights.items() if w.startswith(word)), Fraction(0))

    def density(self, word: str) -> Fraction:
        return self.weights.get(word, Fraction(0)) / self.cell_volume

    def cells(self) -> Iterator[tuple[BinaryWord, Fraction]]:
        """Every cell with its mass, zeros included, in word order."""
        for w in words(self.n * self.depth):
            yield w, self.weights.get(w, Fraction(0))

    def boxes(self):
        for w, m in self.cells():
            lo, hi = cell_box(w, self.n)
            yield lo, hi, m

    def density_at(self, x) -> Fraction:
        from .dyadic import word_of_point
        return self.density(word_of_point(x, self.n, self.n * self.depth))

    def refine(self, extra: int = 1) -> "DyadicHistogram":
        """Same measure on cells ``extra`` levels deeper."""
        out = {}
        split = 1 << (self.n * extra)
        for w, m in self.weights.items():
            # deeper bits continue the same interleaving, so words just extend
            for tail in words(self.n * extra):
                out[w + tail] = m / split
        return DyadicHistogram(self.n, self.depth + extra, out)

    def second_moment(self) -> Fraction:
        """Exact integral of |x|^2 against the histogram."""
        total = Fraction(0)
        for lo, hi, m in self.boxes():
            if m:
                total += m * sum((a * a + a * b + b * b) / 3 for a, b in zip(lo, hi))
        return total


class DensityBounds(NamedTuple):
    min: Fraction
    max: Fraction

    @property
    def positive(self) -> bool:
        """Density bounded away from zero (full support)."""
        return self.min > 0


def density_bounds(h: DyadicHistogram) -> DensityBounds:
    masses = [m for _, m in h.cells()]
    scale = 1 / h.cell_volume
    return DensityBounds(min(masses) * scale, max(masses) * scale)


MapLike = Union[Mapping, Callable]


def _apply(T: MapLike, p: tuple) -> tuple:
    if callable(T) and not isinstance(T, Mapping):
        return as_vector(T(p))
    if p in T:
        return as_vector(T[p])
    if len(p) == 1 and p[0] in T:
        return as_vector(T[p[0]])
    raise KeyError(f"map undefined at {p}")


def pushforward(mu: DiscreteMeasure, T: MapLike) -> DiscreteMeasure:
    """Image measure ``T # mu``; coincident images merge."""
    return DiscreteMeasure.from_atoms((_apply(T, p), w) for p, w in mu)


def histogram_to_discrete(h: DyadicHistogram, rule: str = "center") -> DiscreteMeasure:
    """One atom per nonzero cell, at its centre (default) or lower corner."""
    if rule not in ("center", "corner"):
        raise ValueError("rule must be 'center' or 'corner'")
    atoms = []
    for w, m in h.weights.items():
        lo, hi = cell_box(w, h.n)
        p = tuple((a + b) / 2 for a, b in zip(lo, hi)) if rule == "center" else lo
        atoms.append((p, m))
    return DiscreteMeasure.from_atoms(atoms)


# -- text formats -------------------------------------------------------------

def _lines(text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def write_discrete(mu: DiscreteMeasure) -> str:
    out = [f"dim {mu.n}"]
    for p, w in mu:
        out.append(" ".join([format_rational(w), *(format_rational(x) for x in p)]))
    return "\n".join(out) + "\n"


def read_discrete(text: str) -> DiscreteMeasure:
    lines = list(_lines(text))
    if not lines or lines[0].split()[0] != "dim":
        raise ValueError("discrete-measure file must start with 'dim n'")
    n = int(lines[0].split()[1])
    atoms = []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != n + 1:
            raise ValueError(f"expected weight and {n} coordinates: {line!r}")
        atoms.append((tuple(parse_rational(x) for x in parts[1:]), parse_rational(parts[0])))
    mu = DiscreteMeasure(tuple(p for p, _ in atoms), tuple(w for _, w in atoms))
    if mu.n != n:
        raise ValueError("dimension header mismatch")
    return mu


def write_histogram(h: DyadicHistogram) -> str:
    out = [f"dim {h.n}", f"depth {h.depth}"]
    for w, m in h.weights.items():
        out.append(f"{w or '-'} {format_rational(m)}")
    return "\n".join(out) + "\n"


def read_histogram(text: str) -> DyadicHistogram:
    lines = list(_lines(text))
    if len(lines) < 2 or lines[0].split()[0] != "dim" or lines[1].split()[0] != "depth":
        raise ValueError("histogram file must start with 'dim n' and 'depth s'")
    n = int(lines[0].split()[1])
    depth = int(lines[1].split()[1])
    weights = {}
    for line in lines[2:]:
        word, mass = line.split()
        word = "" if word == "-" else word
        if word in weights:
            raise ValueError(f"duplicate cell {word!r}")
        weights[word] = parse_rational(mass)
    return DyadicHistogram(n, depth, weights)
