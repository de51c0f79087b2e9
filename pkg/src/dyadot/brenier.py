"""Piecewise-affine potentials and a certified search for the quadratic-cost transport potential.

Potentials have the max-min form ``f(x) = max_i min_{j in M_i} (A_j . x + b_j)``
with dyadic data, ``Lip(f) <= K`` and ``f(0) = 0``. The dual objective
``J(f) = int f dmu + int f* dlambda`` is enclosed in certified intervals; its
minimisers are the Brenier potentials pushing ``mu`` to the uniform measure on
the unit cube.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .dyadic import is_dyadic, words
from .exact import Interval, as_fraction, as_vector, format_rational, parse_rational, sqrt_bounds
from .measure import DiscreteMeasure, DyadicHistogram, density_bounds, histogram_to_discrete
from .transport import cdf_transport_1d, solve_ot

__all__ = [
    "PWAPotential",
    "SubdifferentialCell",
    "Conjugate",
    "DualValue",
    "BrenierResult",
    "EliminatedBall",
    "BudgetExceeded",
    "RefinementOverflow",
    "enumerate_gamma",
    "conjugate",
    "dual_value",
    "coupling_lower_bound",
    "brenier_search",
    "gradient_of",
    "default_K",
    "read_potential",
    "write_potential",
    "verify_elimination",
    "quadratic_cost_bounds",
    "atom_centres",
]


class BudgetExceeded(RuntimeError):
    """Search ran out of evaluations before meeting the requested gap; ``best`` holds the survivor."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class RefinementOverflow(RuntimeError):
    pass


def _exponent(q: Fraction) -> int:
    return q.denominator.bit_length() - 1


def default_K(n: int) -> Fraction:
    """``ceil(sqrt(n)) + 1``; any optimal map into the unit cube has gradient norm at most ``sqrt(n)``."""
    return Fraction(math.isqrt(n - 1) + 2) if n > 1 else Fraction(2)


@dataclass(frozen=True)
class SubdifferentialCell:
    """Several affine pieces tie at a point; their slopes span the subdifferential."""

    slopes: tuple

    def centroid(self) -> tuple:
        m = len(self.slopes)
        return tuple(sum(s[c] for s in self.slopes) / m for c in range(len(self.slopes[0])))

    def __len__(self):
        return len(self.slopes)


class PWAPotential:
    """``max_i min_{j in groups[i]} (A_j . x + b_j)`` with exact dyadic data.

    Args:
      n: dimension.
      pieces: sequence of ``(A, b)``.
      groups: index tuples; ``None`` means every piece is its own group (a max
        of affine functions, hence convex).
      K: Lipschitz bound, checked exactly through ``|A_j|^2 <= K^2``.
      atoms: for semi-discrete potentials, the depth ``i`` such that the slopes
        are the centres of the depth-``i`` cells in row-major order.
    """

    def __init__(self, n: int, pieces, groups=None, K=None, atoms: int | None = None):
        if n < 1:
            raise ValueError("dimension must be positive")
        ps = []
        for A, b in pieces:
            A = as_vector(A)
            if len(A) != n:
                raise ValueError("slope dimension mismatch")
            ps.append((A, as_fraction(b)))
        if not ps:
            raise ValueError("need at least one piece")
        if groups is None:
            groups = tuple((j,) for j in range(len(ps)))
        groups = tuple(tuple(sorted(set(g))) for g in groups)
        if not groups or any(not g for g in groups):
            raise ValueError("groups must be nonempty")
        if any(j < 0 or j >= len(ps) for g in groups for j in g):
            raise ValueError("group refers to a missing piece")
        self.n = n
        self.pieces = tuple(ps)
        self.groups = groups
        self.K = default_K(n) if K is None else as_fraction(K)
        self.atoms = atoms
        vals = [v for A, b in ps for v in (*A, b)]
        if not all(is_dyadic(v) for v in vals):
            raise ValueError("piece data must be dyadic rationals")
        self.level = max(_exponent(v) for v in vals)
        for A, _ in ps:
            if sum(a * a for a in A) > self.K ** 2:
                raise ValueError(f"slope {A} exceeds the Lipschitz bound {self.K}")
        if self(tuple([Fraction(0)] * n)) != 0:
            raise ValueError("potential must vanish at the origin")
        self._int = None

    @classmethod
    def semi_discrete(cls, depth: int, psi: Sequence, n: int, K=None) -> "PWAPotential":
        """``max_a (y_a . x - psi_a)`` over the centres ``y_a`` of the depth-``depth`` cells."""
        ys = atom_centres(depth, n)
        if len(psi) != len(ys):
            raise ValueError("one intercept per atom required")
        return cls(n, [(y, -as_fraction(s)) for y, s in zip(ys, psi)], None, K, atoms=depth)

    @property
    def is_convex_form(self) -> bool:
        return all(len(g) == 1 for g in self.groups)

    @property
    def psi(self) -> tuple:
        return tuple(-b for _, b in self.pieces)

    def piece_value(self, j: int, x) -> Fraction:
        A, b = self.pieces[j]
        return sum((a * v for a, v in zip(A, x)), b)

    def __call__(self, x) -> Fraction:
        x = as_vector(x)
        vals = [self.piece_value(j, x) for j in range(len(self.pieces))]
        return max(min(vals[j] for j in g) for g in self.groups)

    def lipschitz_upper(self) -> Fraction:
        return sqrt_bounds(max(sum(a * a for a in A) for A, _ in self.pieces), 40).hi

    def _scaled(self):
        """Integer slopes and intercepts scaled by ``2**level``."""
        if self._int is None:
            s = 1 << self.level
            a = np.array([[int(v * s) for v in A] for A, _ in self.pieces], dtype=np.int64)
            beta = np.array([int(b * s) for _, b in self.pieces], dtype=np.int64)
            self._int = (a, beta)
        return self._int

    def grid_values(self, D: int) -> np.ndarray:
        """``f * 2**(D + level)`` on all points ``j / 2**D`` of the unit cube (row-major)."""
        a, beta = self._scaled()
        side = (1 << D) + 1
        axes = np.arange(side, dtype=np.int64)
        pts = np.stack(np.meshgrid(*([axes] * self.n), indexing="ij"), -1).reshape(-1, self.n)
        return self._eval_int(pts, D)

    def _eval_int(self, pts: np.ndarray, D: int) -> np.ndarray:
        a, beta = self._scaled()
        out = np.empty(len(pts), dtype=np.int64)
        chunk = max(1, 4_000_000 // len(self.pieces))
        for s in range(0, len(pts), chunk):
            vals = pts[s:s + chunk] @ a.T + (beta << D)
            if self.is_convex_form:
                out[s:s + chunk] = vals.max(axis=1)
            else:
                out[s:s + chunk] = np.max(
                    np.stack([vals[:, list(g)].min(axis=1) for g in self.groups], 1), axis=1)
        return out

    def sup_distance_bound(self, other: "PWAPotential") -> Fraction:
        """Upper bound on ``sup |f - g|`` for potentials sharing their slopes."""
        if [A for A, _ in self.pieces] != [A for A, _ in other.pieces] or self.groups != other.groups:
            raise ValueError("potentials do not share slopes and groups")
        return max(abs(b1 - b2) for (_, b1), (_, b2) in zip(self.pieces, other.pieces))

    def __eq__(self, other):
        return (isinstance(other, PWAPotential) and self.n == other.n
                and self.pieces == other.pieces and self.groups == other.groups and self.K == other.K)

    def __hash__(self):
        return hash((self.n, self.pieces, self.groups))

    def __repr__(self):
        return f"PWAPotential(n={self.n}, pieces={len(self.pieces)}, groups={len(self.groups)})"


def atom_centres(depth: int, n: int) -> list[tuple]:
    m = 1 << depth
    coords = [Fraction(2 * j + 1, 2 * m) for j in range(m)]
    return [tuple(c) for c in itertools.product(coords, repeat=n)]


def gradient_of(phi: PWAPotential, x):
    """Slope of the active piece, or the tied slopes as a :class:`SubdifferentialCell`."""
    x = as_vector(x)
    vals = [phi.piece_value(j, x) for j in range(len(phi.pieces))]
    top = max(min(vals[j] for j in g) for g in phi.groups)
    active = sorted({j for g in phi.groups if min(vals[i] for i in g) == top
                     for j in g if vals[j] == top})
    slopes = []
    for j in active:
        if phi.pieces[j][0] not in slopes:
            slopes.append(phi.pieces[j][0])
    return slopes[0] if len(slopes) == 1 else SubdifferentialCell(tuple(slopes))


# -- enumeration ---------------------------------------------------------------

def _antichain_forms(m: int) -> list[tuple]:
    subsets = [tuple(j for j in range(m) if mask >> j & 1) for mask in range(1, 1 << m)]
    forms = []
    for r in range(1, len(subsets) + 1):
        for combo in itertools.combinations(subsets, r):
            if set().union(*map(set, combo)) != set(range(m)):
                continue
            if any(set(a) <= set(b) for a, b in itertools.permutations(combo, 2)):
                continue
            forms.append(combo)
    return forms


def enumerate_gamma(k: int, K, n: int, budget: int, max_pieces: int = 3) -> Iterator[PWAPotential]:
    """Members of the level-``k`` class in canonical order, at most ``budget`` of them.

    Slopes range over the dyadic grid of step ``2**-k`` within the Lipschitz ball
    and intercepts over the same grid with ``|b| <= K sqrt(n)``.
    """
    K = as_fraction(K)
    if K <= 0:
        raise ValueError("K must be positive")
    step = Fraction(1, 1 << k)
    top = int(K / step)
    coords = [j * step for j in range(-top, top + 1)]
    slopes = [A for A in itertools.product(coords, repeat=n) if sum(a * a for a in A) <= K * K]
    slopes.sort(key=lambda A: (sum(a * a for a in A), A))
    bmax = K * sqrt_bounds(n, 20).lo
    btop = int(bmax / step)
    inter = sorted((j * step for j in range(-btop, btop + 1)), key=lambda b: (abs(b), b))
    emitted = 0
    for m in range(1, max_pieces + 1):
        forms = _antichain_forms(m)
        if m == 1:
            pool = [(A, Fraction(0)) for A in slopes]
        else:
            pool = [(A, b) for b in inter for A in slopes]
        for combo in itertools.combinations(pool, m):
            for form in forms:
                bs = [combo[j][1] for j in range(m)]
                if max(min(bs[j] for j in g) for g in form) != 0:
                    continue
                yield PWAPotential(n, combo, form, K)
                emitted += 1
                if emitted >= budget:
                    return


# -- exact one-dimensional machinery -----------------------------------------------

def _envelope(lines, lo: Fraction, hi: Fraction):
    """Upper envelope of lines ``(slope, intercept)`` on ``[lo, hi]`` as ``(a, b, line)`` pieces."""
    best = {}
    for s, c in lines:
        if s not in best or c > best[s]:
            best[s] = c
    hull = []
    for s in sorted(best):
        c = best[s]
        while hull:
            s1, c1 = hull[-1]
            if len(hull) >= 2:
                s0, c0 = hull[-2]
                # drop the middle line if it never wins
                if (c - c0) * (s1 - s0) >= (c1 - c0) * (s - s0):
                    hull.pop()
                    continue
            break
        hull.append((s, c))
    pieces = []
    start = lo
    for idx, (s, c) in enumerate(hull):
        if idx + 1 < len(hull):
            s2, c2 = hull[idx + 1]
            end = (c - c2) / (s2 - s)
        else:
            end = hi
        a, b = max(start, lo), min(end, hi)
        if a < b:
            pieces.append((a, b, (s, c)))
        start = max(start, end)
    return pieces


def _breakpoints_1d(f: PWAPotential, lo: Fraction, hi: Fraction) -> list[Fraction]:
    """Points of ``[lo, hi]`` between which ``f`` is affine, endpoints included."""
    if f.is_convex_form:
        env = _envelope([(A[0], b) for A, b in f.pieces], lo, hi)
        pts = {lo, hi} | {a for a, _, _ in env} | {b for _, b, _ in env}
        return sorted(pts)
    cands = {lo, hi}
    for (A1, b1), (A2, b2) in itertools.combinations(f.pieces, 2):
        if A1[0] != A2[0]:
            x = (b2 - b1) / (A1[0] - A2[0])
            if lo < x < hi:
                cands.add(x)
    return sorted(cands)


def _integral_1d(f: PWAPotential, h: DyadicHistogram) -> Fraction:
    pts = set(_breakpoints_1d(f, Fraction(0), Fraction(1)))
    pts |= {Fraction(j, 1 << h.depth) for j in range((1 << h.depth) + 1)}
    pts = sorted(pts)
    total = Fraction(0)
    for a, b in zip(pts, pts[1:]):
        mid = (a + b) / 2
        total += h.density_at((mid,)) * (b - a) * f((mid,))
    return total


def _conjugate_lines_1d(f: PWAPotential, lo: Fraction, hi: Fraction):
    return [(v, -f((v,))) for v in _breakpoints_1d(f, lo, hi)]


def _envelope_integral(lines, lo: Fraction, hi: Fraction) -> Fraction:
    total = Fraction(0)
    for a, b, (s, c) in _envelope(lines, lo, hi):
        total += (b - a) * (s * (a + b) / 2 + c)
    return total


# -- conjugate -----------------------------------------------------------------

class Conjugate:
    """Certified enclosures of ``f*(y) = sup_{x in U} (x . y - f(x))`` on a box ``U``.

    One-dimensional conjugates are exact (the supremum sits at a breakpoint);
    otherwise the supremum over the depth-``g`` grid of ``U`` is widened by the
    Lipschitz modulus ``(|y| + Lip f)`` times the grid's covering radius.
    """

    def __init__(self, f: PWAPotential, box=None, g: int = 6):
        n = f.n
        if box is None:
            box = (tuple([Fraction(0)] * n), tuple([Fraction(1)] * n))
        self.lo, self.hi = as_vector(box[0]), as_vector(box[1])
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("empty box")
        self.f, self.g = f, g
        if n == 1:
            self._lines = _conjugate_lines_1d(f, self.lo[0], self.hi[0])
            return
        side = (1 << g) + 1
        self._grid = [tuple(a + (b - a) * Fraction(j, 1 << g) for a, b, j in zip(self.lo, self.hi, idx))
                      for idx in itertools.product(range(side), repeat=n)]
        self._fvals = [f(x) for x in self._grid]
        half_diag2 = sum(((b - a) / (1 << (g + 1))) ** 2 for a, b in zip(self.lo, self.hi))
        self._radius = sqrt_bounds(half_diag2, 40).hi
        self._lip = f.lipschitz_upper()

    def __call__(self, y) -> Interval:
        y = as_vector(y)
        if self.f.n == 1:
            v = max(s * y[0] + c for s, c in self._lines)
            return Interval(v, v)
        best = max(sum(a * b for a, b in zip(x, y)) - fx for x, fx in zip(self._grid, self._fvals))
        ynorm = sqrt_bounds(sum(a * a for a in y), 40).hi
        return Interval(best, best + (ynorm + self._lip) * self._radius)


def conjugate(f: PWAPotential, box=None, g: int = 6) -> Conjugate:
    return Conjugate(f, box, g)


# -- dual objective ------------------------------------------------------------

@dataclass(frozen=True)
class DualValue:
    J: Interval
    primal_part: Interval
    conjugate_part: Interval


def _grid_points(D: int, n: int) -> np.ndarray:
    axes = np.arange((1 << D) + 1, dtype=np.int64)
    return np.stack(np.meshgrid(*([axes] * n), indexing="ij"), -1).reshape(-1, n)


def _cell_sums(values: np.ndarray, D: int, n: int):
    """For a depth-``D+1`` grid array, per depth-``D`` cell: centre value and vertex sum."""
    side = (1 << (D + 1)) + 1
    arr = values.reshape((side,) * n)
    centre = arr[(slice(1, None, 2),) * n]
    vsum = np.zeros(centre.shape, dtype=object)
    for corner in itertools.product((0, 2), repeat=n):
        sl = tuple(slice(c, c + side - 1 if c == 0 else None, 2) for c in corner)
        vsum = vsum + arr[sl].astype(object)
    return centre, vsum


def _density_grid(mu: DyadicHistogram, D: int) -> np.ndarray:
    """Histogram density on the depth-``D`` cells as an object array (row-major by coordinate)."""
    shape = (1 << D,) * mu.n
    out = np.empty(shape, dtype=object)
    up = D - mu.depth
    for w, m in mu.cells():
        idx = [0] * mu.n
        for pos, bit in enumerate(w):
            c = pos % mu.n
            idx[c] = 2 * idx[c] + (bit == "1")
        dens = m * (1 << (mu.n * mu.depth))
        sl = tuple(slice(i << up, (i + 1) << up) for i in idx)
        out[sl] = dens
    return out


def _ceil_scaled(q: Fraction, bits: int) -> int:
    """``ceil(q * 2**bits)``."""
    return -((-q.numerator << bits) // q.denominator)


def _interp_upper(phi: PWAPotential, verts: np.ndarray, E: int, C: int) -> np.ndarray:
    """Upper bounds for ``f*`` at ``verts / 2**E``, scaled by ``2**C``.

    ``f*(y_a) <= psi_a`` and ``f*`` is convex, so multilinear interpolation of
    the atom intercepts bounds it inside the atom hull; points outside are
    clipped to the hull and pay ``sqrt(n)`` per unit of displacement.
    """
    n, i, L = phi.n, phi.atoms, phi.level
    m = 1 << i
    _, beta = phi._scaled()
    psi = (-beta).astype(object).reshape((m,) * n)
    half = 1 << (E - i - 1)
    Yc = np.clip(verts, half, (1 << E) - half)
    shift = np.abs(verts - Yc).sum(axis=1).astype(object)
    T = Yc * m - (1 << (E - 1))  # atom coordinate times 2^E
    j = np.minimum(T >> E, max(m - 2, 0))
    r = (T - (j << E)).astype(object)
    total = np.zeros(len(verts), dtype=object)
    for corner in itertools.product((0, 1), repeat=n):
        if m == 1 and any(corner):
            continue
        w = np.ones(len(verts), dtype=object)
        idx = []
        for c in range(n):
            if m == 1:
                w = w * (1 << E)
                idx.append(np.zeros(len(verts), dtype=np.int64))
                continue
            w = w * (r[:, c] if corner[c] else (1 << E) - r[:, c])
            idx.append(j[:, c] + corner[c])
        total = total + w * psi[tuple(idx)]
    sqrt_n = _ceil_scaled(sqrt_bounds(n, 40).hi, C - E)
    return total * (1 << (C - n * E - L)) + shift * sqrt_n


def dual_value(f: PWAPotential, mu: DyadicHistogram, g: int | None = None,
               tol=None) -> DualValue:
    """Certified enclosure of ``J(f, f*) = int f dmu + int f* dlambda`` on the unit cube.

    Exact in one dimension. Otherwise ``int f dmu`` uses centre values and
    vertex averages on depth-``g`` cells (exact on cells where ``f`` is affine)
    and ``int f* dlambda`` uses the grid conjugate. Raises
    :class:`RefinementOverflow` if ``tol`` is given and the enclosure is wider.
    """
    if f.n != mu.n:
        raise ValueError("dimension mismatch")
    n = f.n
    if n == 1:
        a = _integral_1d(f, mu)
        c = _envelope_integral(_conjugate_lines_1d(f, Fraction(0), Fraction(1)), Fraction(0), Fraction(1))
        return DualValue(Interval.point(a + c), Interval.point(a), Interval.point(c))
    D = max(mu.depth, f.atoms or 0) + 2 if g is None else g
    if D < mu.depth:
        raise ValueError("grid depth must not be coarser than the histogram")
    L = f.level
    xs = _grid_points(D + 1, n)
    fx = f._eval_int(xs, D + 1)  # f scaled by 2^(D+1+L)
    # int f dmu: Jensen at centres below, vertex averages above
    centre, vsum = _cell_sums(fx, D, n)
    dens = _density_grid(mu, D)
    scale = Fraction(1, (1 << (D + 1 + L)) * (1 << (n * D)))
    lo_f = np.sum(dens * centre.astype(object)) * scale
    hi_f = np.sum(dens * vsum) * scale / (1 << n)
    if not f.is_convex_form:
        r = f.lipschitz_upper() * sqrt_bounds(n, 40).hi / (1 << (D + 1))
        lo_f, hi_f = lo_f - r, lo_f + r
    # int f* dlambda: Jensen at cell centres below, vertex averages above
    E = D
    cidx = np.arange(1 << E, dtype=np.int64)
    centres = 2 * np.stack(np.meshgrid(*([cidx] * n), indexing="ij"), -1).reshape(-1, n) + 1
    verts = _grid_points(E, n)

    def legendre(ypts: np.ndarray, yshift: int) -> np.ndarray:
        # max over the grid of x.y - f(x), scaled by 2^(D+1+yshift+L)
        out = np.empty(len(ypts), dtype=np.int64)
        fx_s = fx << yshift
        chunk = max(1, 2_000_000 // len(xs))
        for s in range(0, len(ypts), chunk):
            prod = (ypts[s:s + chunk] @ xs.T) << L
            out[s:s + chunk] = (prod - fx_s[None, :]).max(axis=1)
        return out

    lc = legendre(centres, E + 1)
    lo_c = Fraction(int(np.sum(lc.astype(object))), (1 << (D + 1 + E + 1 + L)) * (1 << (n * E)))
    A = D + 1 + E + L
    lv = legendre(verts, E).astype(object)
    modulus = (sqrt_bounds(n, 40).hi + f.lipschitz_upper()) * sqrt_bounds(n, 40).hi / (1 << (D + 2))
    C = max(A, n * E + L)
    up = lv * (1 << (C - A)) + _ceil_scaled(modulus, C)
    if f.atoms is not None and f.is_convex_form and E >= f.atoms + 1:
        up = np.minimum(up, _interp_upper(f, verts, E, C))
    side = (1 << E) + 1
    varr = up.reshape((side,) * n)
    vtotal = 0
    for corner in itertools.product((0, 1), repeat=n):
        vtotal += int(np.sum(varr[tuple(slice(c, c + side - 1) for c in corner)]))
    hi_c = Fraction(vtotal, (1 << C) * (1 << n) * (1 << (n * E)))
    prim = Interval(lo_f, hi_f)
    conj = Interval(lo_c, hi_c)
    J = prim + conj
    if tol is not None and J.width > as_fraction(tol):
        raise RefinementOverflow(f"enclosure width {float(J.width):.3g} exceeds tolerance at depth {D}")
    return DualValue(J, prim, conj)


def coupling_lower_bound(mu: DyadicHistogram, depth: int | None = None) -> Fraction:
    """``int x.y dpi`` for an explicit coupling of ``mu`` with the uniform measure.

    By Fenchel-Young every potential satisfies ``J(f, f*) >= int x.y dpi`` for
    any coupling ``pi``; blocks between cells contribute ``P_ab c_a . c_b``
    because the measures are uniform inside each cell.
    """
    n = mu.n
    if depth is None:
        depth = max(mu.depth, 10) if n == 1 else max(mu.depth, 3 if n == 2 else 2)
    h = mu
    while h.depth < depth:
        h = h.refine(1)
    if n == 1:
        src = [((lo[0] + hi[0]) / 2, m) for lo, hi, m in h.boxes()]
        cells = 1 << depth
        tgt = [(Fraction(2 * j + 1, 2 * cells), Fraction(1, cells)) for j in range(cells)]
        total = Fraction(0)
        i = j = 0
        ra, rb = src[0][1], tgt[0][1]
        while i < len(src) and j < len(tgt):
            t = min(ra, rb)
            total += t * src[i][0] * tgt[j][0]
            ra -= t
            rb -= t
            if ra == 0:
                i += 1
                ra = src[i][1] if i < len(src) else 0
            if rb == 0:
                j += 1
                rb = tgt[j][1] if j < len(tgt) else 0
        return total
    src = histogram_to_discrete(h)
    tgt = histogram_to_discrete(DyadicHistogram.uniform(n, depth))
    res = solve_ot(src, tgt, 2)
    total = Fraction(0)
    for i, j in res.coupling.support():
        total += res.coupling.matrix[i][j] * sum(a * b for a, b in zip(src.points[i], tgt.points[j]))
    return total


# -- search ----------------------------------------------------------------------

@dataclass(frozen=True)
class EliminatedBall:
    """Candidate whose certified lower bound beat the running best by ``2 * radius``.

    No potential within sup-distance ``radius`` of ``psi`` can be optimal.
    """

    psi: tuple
    lower: Fraction
    bound: Fraction
    radius: Fraction


@dataclass
class BrenierResult:
    potential: PWAPotential
    value: Interval
    lower: Fraction
    eliminated: list
    evaluations: int
    spread: Fraction
    complete: bool
    history: list = field(default_factory=list, repr=False)

    @property
    def gap(self) -> Fraction:
        """Certified ``J(phi_hat) - min J`` upper bound."""
        return self.value.hi - self.lower

    def gradient(self, x):
        return gradient_of(self.potential, x)


def _semi_discrete_exact_1d(mu: DyadicHistogram, i: int) -> list[Fraction]:
    F = cdf_transport_1d(mu)
    N = 1 << i
    ys = [Fraction(2 * a + 1, 2 * N) for a in range(N)]
    psi = [Fraction(0)]
    for a in range(1, N):
        t = F.inverse(Fraction(a, N))
        psi.append(psi[-1] + t * (ys[a] - ys[a - 1]))
    return psi


def _semi_discrete_float(mu: DyadicHistogram, i: int, quad_extra: int = 3) -> np.ndarray:
    """Smoothed semi-discrete dual minimised by L-BFGS; a warm start only."""
    n = mu.n
    ys = np.array([[float(c) for c in y] for y in atom_centres(i, n)])
    N = len(ys)
    Dq = max(mu.depth, i) + quad_extra
    dens = _density_grid(mu, Dq).astype(float).ravel()
    m = 1 << Dq
    axes = (np.arange(m) + 0.5) / m
    xq = np.stack(np.meshgrid(*([axes] * n), indexing="ij"), -1).reshape(-1, n)
    wq = dens / dens.sum()
    keep = wq > 0
    xq, wq = xq[keep], wq[keep]
    eps = 0.05 / (1 << i) ** 2
    xy = xq @ ys.T

    def objective(psi):
        z = (xy - psi[None, :]) / eps
        lse = logsumexp(z, axis=1)
        p = np.exp(z - lse[:, None])
        val = eps * np.dot(wq, lse) + psi.mean()
        grad = -(wq @ p) + 1.0 / N
        return val, grad

    psi0 = 0.5 * (ys ** 2).sum(axis=1)
    res = minimize(objective, psi0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
    return res.x


def _round_psi(psi, k: int) -> list[Fraction]:
    s = 1 << k
    ints = [round(float(v) * s) if not isinstance(v, Fraction) else round(v * s) for v in psi]
    low = min(ints)
    return [Fraction(v - low, s) for v in ints]


def brenier_search(mu: DyadicHistogram, K=None, precision: int = 4, budget: int | None = None,
                   gap_tol=None, k: int | None = None) -> BrenierResult:
    """Certified search for the potential whose gradient pushes ``mu`` to the uniform measure.

    Candidates are semi-discrete potentials over ``2**(precision * n)`` slopes.
    The start comes from the semi-discrete dual (exact in one dimension, a
    smoothed float solve otherwise); a best-first sweep of intercept moves then
    keeps the candidate with the smallest certified upper bound and logs every
    neighbour it can rule out. ``gap`` bounds ``J(phi_hat) - min J``.

    Raises:
      ValueError: ``mu`` lacks full support or ``K`` is below ``sqrt(n)``.
      BudgetExceeded: ``gap_tol`` was requested and not met within ``budget``.
    """
    n = mu.n
    if not density_bounds(mu).positive:
        raise ValueError("the source histogram must have full support")
    K = default_K(n) if K is None else as_fraction(K)
    if K * K < n:
        raise ValueError(f"K={K} is below the a priori gradient bound sqrt({n})")
    i = precision
    k = 2 * i + 14 if k is None else k
    if budget is None:
        budget = 6 * (1 << i) + 1 if n == 1 else 24
    start = _semi_discrete_exact_1d(mu, i) if n == 1 else _semi_discrete_float(mu, i)
    psi = _round_psi(start, k)

    def evaluate(p):
        return dual_value(PWAPotential.semi_discrete(i, p, n, K), mu).J

    best = psi
    best_val = evaluate(psi)
    evaluations = 1
    eliminated, history, seen = [], [(tuple(psi), best_val)], {tuple(psi): best_val}
    complete = True
    steps = [Fraction(1, 1 << s) for s in (2 * i + 2, 2 * i + 6, k) if s <= k]
    order = list(range(len(psi)))
    for step in steps:
        improved = True
        while improved:
            improved = False
            trial = None
            for a in order:
                for sign in (1, -1):
                    cand = list(best)
                    cand[a] += sign * step
                    low = min(cand)
                    cand = tuple(v - low for v in cand)
                    if cand in seen:
                        continue
                    if evaluations >= budget:
                        complete = False
                        break
                    val = evaluate(cand)
                    evaluations += 1
                    seen[cand] = val
                    history.append((cand, val))
                    if val.lo > best_val.hi:
                        eliminated.append(EliminatedBall(cand, val.lo, best_val.hi,
                                                         (val.lo - best_val.hi) / 2))
                    elif val.hi < best_val.hi and (trial is None or val.hi < trial[1].hi):
                        trial = (cand, val)
                if not complete:
                    break
            if trial is not None:
                best, best_val = list(trial[0]), trial[1]
                improved = True
            if not complete:
                break
        if not complete:
            break
    phi = PWAPotential.semi_discrete(i, best, n, K)
    lower = coupling_lower_bound(mu)
    survivors = [c for c, v in seen.items() if v.lo <= best_val.hi]
    spread = max(max(abs(x - y) for x, y in zip(c, best)) for c in survivors)
    result = BrenierResult(phi, best_val, lower, eliminated, evaluations, spread, complete, history)
    if gap_tol is not None and result.gap > as_fraction(gap_tol):
        raise BudgetExceeded(f"certified gap {float(result.gap):.3g} above {gap_tol}", best=result)
    return result


def quadratic_cost_bounds(result: BrenierResult, mu: DyadicHistogram, half: bool = False) -> Interval:
    """Bracket the optimal cost for ``|x - y|^2`` (or ``|x - y|^2 / 2`` if ``half``).

    Expanding the square, the cost equals ``int |x|^2 dmu + int |y|^2 dlambda``
    minus twice the maximal correlation, which lies in ``[lower, value.hi]``.
    """
    m2 = mu.second_moment() + Fraction(mu.n, 3)
    out = Interval(m2 - 2 * result.value.hi, m2 - 2 * result.lower)
    return Interval(out.lo / 2, out.hi / 2) if half else out


def verify_elimination(result: BrenierResult, mu: DyadicHistogram) -> bool:
    """Replay the elimination log against the final upper bound."""
    n, i, K = mu.n, result.potential.atoms, result.potential.K
    final = result.value.hi
    for ball in result.eliminated:
        val = dual_value(PWAPotential.semi_discrete(i, ball.psi, n, K), mu).J
        if not (val.lo == ball.lower and val.lo > final and ball.bound >= final):
            return False
    return True


# -- file format -----------------------------------------------------------------

def write_potential(f: PWAPotential) -> str:
    out = [f"dim {f.n}", f"K {format_rational(f.K)}", f"pieces {len(f.pieces)}"]
    for A, b in f.pieces:
        out.append(" ".join([*(format_rational(a) for a in A), format_rational(b)]))
    out.append(f"groups {len(f.groups)}")
    for g in f.groups:
        out.append(" ".join(str(j) for j in g))
    if f.atoms is not None:
        out.append(f"atoms {f.atoms}")
    return "\n".join(out) + "\n"


def read_potential(text: str) -> PWAPotential:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    it = iter(lines)

    def header(name):
        parts = next(it).split()
        if parts[0] != name:
            raise ValueError(f"expected '{name}' line")
        return parts[1]

    n = int(header("dim"))
    K = parse_rational(header("K"))
    m = int(header("pieces"))
    pieces = []
    for _ in range(m):
        vals = [parse_rational(v) for v in next(it).split()]
        if len(vals) != n + 1:
            raise ValueError("piece line needs n slopes and an intercept")
        pieces.append((tuple(vals[:n]), vals[n]))
    l = int(header("groups"))
    groups = [tuple(int(v) for v in next(it).split()) for _ in range(l)]
    atoms = None
    rest = list(it)
    if rest:
        parts = rest[0].split()
        if parts[0] != "atoms":
            raise ValueError("unexpected trailing line")
        atoms = int(parts[1])
    return PWAPotential(n, pieces, groups, K, atoms=atoms)
