"""Monotone maps, the Cayley rotation, resolvents and finite-scale derivative probes."""

from __future__ import annotations

import itertools
import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .exact import Interval, as_fraction, as_vector, sqrt_bounds

__all__ = [
    "MonotoneMap",
    "LipschitzMap",
    "AffineMap",
    "PiecewiseLinear1D",
    "SeparableMap",
    "PotentialGradient",
    "TableMap",
    "ShiftedInverse",
    "NoBracket",
    "NotMonotone",
    "Resolved",
    "DiffReport",
    "ScaleFit",
    "SingularityReport",
    "identity_map",
    "zero_map",
    "scaling_map",
    "constant_map",
    "flatten_map",
    "parabola_map",
    "cayley",
    "cayley_scaled",
    "is_psd",
    "monotone_on",
    "resolvent",
    "resolvent_map",
    "diff_probe",
    "singularity_probe",
]


class NoBracket(RuntimeError):
    """The resolvent equation could not be bracketed or solved to tolerance."""


class NotMonotone(ValueError):
    pass


def _vec(x) -> tuple:
    return as_vector(x)


def _sq(v) -> Fraction:
    return sum((a * a for a in v), Fraction(0))


# -- maps ------------------------------------------------------------------------

class LipschitzMap:
    """A map R^n -> R^n with exact rational evaluation and an optional Lipschitz bound.

    ``reason`` records why the map is monotone (``None`` when it is not claimed to be).
    """

    monotone = False

    def __init__(self, n: int, func: Callable, lipschitz=None, reason: str | None = None,
                 name: str = "map", float_func: Callable | None = None):
        self.n = n
        self._func = func
        self._float = float_func
        self.lipschitz = None if lipschitz is None else as_fraction(lipschitz)
        self.reason = reason
        self.name = name
        if reason is not None:
            self.monotone = True

    def __call__(self, x) -> tuple:
        return _vec(self._func(_vec(x)))

    def batch(self, pts: np.ndarray) -> np.ndarray:
        """Float evaluation on the rows of ``pts`` (used by the probes)."""
        if self._float is not None:
            return np.asarray(self._float(pts), dtype=float)
        return np.array([[float(v) for v in self(tuple(Fraction(float(c)) for c in p))] for p in pts])

    def image_box(self, lo, hi):
        """Closed box containing the image of the box ``[lo, hi]``, per coordinate
        ``(low, high, high_open)``; ``high_open`` marks images of half-open cells
        that never reach ``high``."""
        if self.lipschitz is None:
            raise ValueError("image boxes need a Lipschitz bound")
        lo, hi = _vec(lo), _vec(hi)
        c = tuple((a + b) / 2 for a, b in zip(lo, hi))
        r = self.lipschitz * sqrt_bounds(_sq([(b - a) / 2 for a, b in zip(lo, hi)]), 40).hi
        return [(v - r, v + r, False) for v in self(c)]

    def __repr__(self):
        return f"{type(self).__name__}({self.name}, n={self.n})"


class MonotoneMap(LipschitzMap):
    """Marker base for maps carrying a monotonicity reason."""

    monotone = True


class AffineMap(MonotoneMap):
    """``x -> M x + c``; monotone iff the symmetric part of ``M`` is positive semidefinite."""

    def __init__(self, matrix, offset=None, name: str = "affine", require_monotone: bool = True):
        M = tuple(tuple(as_fraction(v) for v in row) for row in matrix)
        n = len(M)
        if n == 0 or any(len(row) != n for row in M):
            raise ValueError("matrix must be square")
        c = tuple([Fraction(0)] * n) if offset is None else _vec(offset)
        psd = is_psd([[(M[i][j] + M[j][i]) / 2 for j in range(n)] for i in range(n)])
        if require_monotone and not psd:
            raise NotMonotone("symmetric part of the matrix is not positive semidefinite")
        frob = sqrt_bounds(sum(v * v for row in M for v in row), 40).hi
        super().__init__(n, None, frob, "affine with PSD symmetric part" if psd else None, name)
        self.monotone = psd
        self.matrix, self.offset = M, c
        Mf = np.array([[float(v) for v in row] for row in M])
        cf = np.array([float(v) for v in c])
        self._float = lambda pts: pts @ Mf.T + cf

    def __call__(self, x) -> tuple:
        x = _vec(x)
        return tuple(sum((a * v for a, v in zip(row, x)), ci) for row, ci in zip(self.matrix, self.offset))

    def is_diagonal(self) -> bool:
        return all(self.matrix[i][j] == 0 for i in range(self.n) for j in range(self.n) if i != j)

    def image_box(self, lo, hi):
        lo, hi = _vec(lo), _vec(hi)
        out = []
        for row, ci in zip(self.matrix, self.offset):
            a = sum((v * (l if v >= 0 else h) for v, l, h in zip(row, lo, hi)), ci)
            b = sum((v * (h if v >= 0 else l) for v, l, h in zip(row, lo, hi)), ci)
            # a strictly increasing single-coordinate image of [lo, hi) stays open at the top
            nz = [v for v in row if v]
            out.append((a, b, len(nz) == 1 and nz[0] > 0 and a < b))
        return out


class PiecewiseLinear1D:
    """Continuous nondecreasing piecewise-linear function, constant outside its knots."""

    def __init__(self, knots: Sequence, values: Sequence):
        xs = [as_fraction(v) for v in knots]
        ys = [as_fraction(v) for v in values]
        if len(xs) != len(ys) or len(xs) < 1:
            raise ValueError("need matching knots and values")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("knots must increase")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise NotMonotone("values must be nondecreasing")
        self.xs, self.ys = xs, ys
        self.slopes = [(y1 - y0) / (x1 - x0) for x0, x1, y0, y1 in zip(xs, xs[1:], ys, ys[1:])]
        self.lipschitz = max(self.slopes, default=Fraction(0))

    def __call__(self, x) -> Fraction:
        x = as_fraction(x)
        if x <= self.xs[0]:
            return self.ys[0]
        if x >= self.xs[-1]:
            return self.ys[-1]
        j = bisect_right(self.xs, x) - 1
        return self.ys[j] + self.slopes[j] * (x - self.xs[j])

    def left_slope(self, x) -> Fraction:
        x = as_fraction(x)
        if x <= self.xs[0] or x > self.xs[-1]:
            return Fraction(0)
        j = bisect_right(self.xs, x) - 1
        if self.xs[j] == x:
            j -= 1
        return self.slopes[j]

    def solve_shifted(self, t) -> Fraction:
        """The unique ``x`` with ``x + f(x) = t``."""
        t = as_fraction(t)
        if t <= self.xs[0] + self.ys[0]:
            return t - self.ys[0]
        if t >= self.xs[-1] + self.ys[-1]:
            return t - self.ys[-1]
        h = [x + y for x, y in zip(self.xs, self.ys)]
        j = bisect_right(h, t) - 1
        return self.xs[j] + (t - h[j]) / (1 + self.slopes[j])

    def image(self, a, b) -> tuple:
        """Image of ``[a, b)`` as ``(low, high, high_open)``."""
        fa, fb = self(a), self(b)
        return fa, fb, fa < fb and self.left_slope(b) > 0


class SeparableMap(MonotoneMap):
    """``(x_1, ..., x_n) -> (g_1(x_1), ..., g_n(x_n))`` with nondecreasing ``g_i``."""

    def __init__(self, components: Sequence, name: str = "separable"):
        comps = list(components)
        lips = [getattr(g, "lipschitz", None) for g in comps]
        lip = None if any(v is None for v in lips) else max(lips)
        super().__init__(len(comps), None, lip, "coordinatewise nondecreasing", name)
        self.components = comps

    def __call__(self, x) -> tuple:
        x = _vec(x)
        return tuple(as_fraction(g(v)) for g, v in zip(self.components, x))

    def image_box(self, lo, hi):
        out = []
        for g, a, b in zip(self.components, _vec(lo), _vec(hi)):
            if hasattr(g, "image"):
                out.append(g.image(a, b))
            else:
                fa, fb = as_fraction(g(a)), as_fraction(g(b))
                out.append((fa, fb, False))
        return out


class PotentialGradient(MonotoneMap):
    """A selection of the subdifferential of a convex piecewise-affine potential.

    Ties pick the lowest-index active piece; any selection of a convex
    function's subdifferential is monotone.
    """

    def __init__(self, phi, name: str = "gradient"):
        if not phi.is_convex_form:
            raise NotMonotone("only max-of-affine potentials have monotone gradients")
        super().__init__(phi.n, None, None, "subgradient of a convex potential", name)
        self.phi = phi
        self._A = np.array([[float(a) for a in A] for A, _ in phi.pieces])
        self._b = np.array([float(b) for _, b in phi.pieces])

    def active(self, x) -> list[int]:
        x = _vec(x)
        vals = [self.phi.piece_value(j, x) for j in range(len(self.phi.pieces))]
        top = max(vals)
        return [j for j, v in enumerate(vals) if v == top]

    def __call__(self, x) -> tuple:
        return self.phi.pieces[self.active(x)[0]][0]


class TableMap(MonotoneMap):
    """Map given on finitely many points; monotonicity is checked over all pairs."""

    def __init__(self, table: dict, name: str = "table"):
        tab = {_vec(k): _vec(v) for k, v in table.items()}
        if not tab:
            raise ValueError("empty table")
        n = len(next(iter(tab)))
        if not monotone_on(lambda x: tab[x], list(tab)):
            raise NotMonotone("table violates monotonicity")
        super().__init__(n, None, None, "table checked on all pairs", name)
        self.table = tab

    def __call__(self, x) -> tuple:
        x = _vec(x)
        if x not in self.table:
            raise KeyError(f"table map undefined at {x}")
        return self.table[x]


def identity_map(n: int = 1) -> AffineMap:
    return AffineMap([[int(i == j) for j in range(n)] for i in range(n)], name="identity")


def zero_map(n: int = 1) -> AffineMap:
    return AffineMap([[0] * n for _ in range(n)], name="zero")


def scaling_map(c, n: int = 1) -> AffineMap:
    c = as_fraction(c)
    return AffineMap([[c if i == j else 0 for j in range(n)] for i in range(n)], name=f"scale:{c}")


def constant_map(value) -> AffineMap:
    v = _vec(value)
    n = len(v)
    return AffineMap([[0] * n for _ in range(n)], v, name="constant")


def flatten_map() -> AffineMap:
    """``(x1, x2) -> (x1, 0)``: monotone with a rank-one derivative."""
    return AffineMap([[1, 0], [0, 0]], name="flatten")


def parabola_map() -> LipschitzMap:
    """``(x1, x2) -> (x1, x2^2)``; 2-Lipschitz on ``[-1, 1]^2``, singular along ``x2 = 0``."""
    return LipschitzMap(2, lambda x: (x[0], x[1] * x[1]), lipschitz=2, name="parabola",
                        float_func=lambda p: np.stack([p[:, 0], p[:, 1] ** 2], 1))


def is_psd(S) -> bool:
    """Exact test of positive semidefiniteness for a symmetric rational matrix."""
    A = [[as_fraction(v) for v in row] for row in S]
    n = len(A)
    idx = list(range(n))
    while idx:
        # pick the largest remaining diagonal entry as pivot
        p = max(idx, key=lambda i: A[i][i])
        d = A[p][p]
        if d < 0:
            return False
        if d == 0:
            # a PSD matrix with zero diagonal entry has a zero row there
            if any(A[p][j] != 0 for j in idx):
                return False
            idx.remove(p)
            continue
        idx.remove(p)
        for i in idx:
            f = A[i][p] / d
            for j in idx:
                A[i][j] -= f * A[p][j]
    return True


def monotone_on(f: Callable, points: Sequence) -> bool:
    """``<f(x) - f(y), x - y> >= 0`` on every pair of the given points (exact)."""
    pts = [_vec(p) for p in points]
    vals = [_vec(f(p)) for p in pts]
    for (x, fx), (y, fy) in itertools.combinations(zip(pts, vals), 2):
        if sum((a - b) * (c - d) for a, b, c, d in zip(fx, fy, x, y)) < 0:
            return False
    return True


# -- Cayley rotation -----------------------------------------------------------------

_INV_SQRT2 = Interval(sqrt_bounds(Fraction(1, 2), 64).lo, sqrt_bounds(Fraction(1, 2), 64).hi)


def cayley_scaled(x, y) -> tuple[tuple, tuple]:
    """``sqrt(2)`` times the rotated pair: ``(y + x, y - x)``, exact."""
    x, y = _vec(x), _vec(y)
    if len(x) != len(y):
        raise ValueError("dimension mismatch")
    return tuple(b + a for a, b in zip(x, y)), tuple(b - a for a, b in zip(x, y))


def cayley(x, y) -> tuple[tuple, tuple]:
    """``(1/sqrt 2) (y + x, y - x)`` as certified intervals."""
    s, d = cayley_scaled(x, y)
    return tuple(_INV_SQRT2 * v for v in s), tuple(_INV_SQRT2 * v for v in d)


# -- resolvent ---------------------------------------------------------------------

@dataclass(frozen=True)
class Resolved:
    """Approximate ``(u + I)^{-1}(y)`` with a certified residual bound.

    Because ``u + I`` is strongly monotone with modulus 1, ``|x - x*| <= residual``.
    """

    x: tuple
    residual: Fraction
    method: str


def _residual(u, x, y) -> Fraction:
    if isinstance(u, PotentialGradient):
        return _subgradient_residual(u, x, y)
    r = _sq([a + b - c for a, b, c in zip(u(x), x, y)])
    return Fraction(0) if r == 0 else sqrt_bounds(r, 64).hi


def _subgradient_residual(u: PotentialGradient, x, y) -> Fraction:
    """Distance from ``y - x`` to the convex hull of the active slopes (upper bound)."""
    target = [b - a for a, b in zip(x, y)]
    slopes = [u.phi.pieces[j][0] for j in u.active(x)]
    best = min(_sq([t - s for t, s in zip(target, A)]) for A in slopes)
    if len(slopes) > 1:
        lam = _hull_weights(slopes, target)
        if lam is not None:
            v = [sum(l * A[c] for l, A in zip(lam, slopes)) for c in range(len(target))]
            best = min(best, _sq([t - s for t, s in zip(target, v)]))
    return Fraction(0) if best == 0 else sqrt_bounds(best, 64).hi


def _solve_exact(M, rhs):
    """Gaussian elimination over Fractions; ``None`` when singular."""
    n = len(M)
    A = [list(row) + [r] for row, r in zip(M, rhs)]
    for c in range(n):
        p = next((r for r in range(c, n) if A[r][c] != 0), None)
        if p is None:
            return None
        A[c], A[p] = A[p], A[c]
        for r in range(n):
            if r != c and A[r][c] != 0:
                f = A[r][c] / A[c][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return [A[r][n] / A[r][r] for r in range(n)]


def _hull_weights(slopes, target):
    """Exact convex weights reproducing ``target`` from ``slopes`` when it lies in their hull."""
    k = len(slopes)
    n = len(target)
    for size in range(1, min(k, n + 1) + 1):
        for sub in itertools.combinations(range(k), size):
            # least squares normal equations on the affine hull
            rows = [[slopes[j][c] for j in sub] for c in range(n)] + [[Fraction(1)] * size]
            rhs = list(target) + [Fraction(1)]
            G = [[sum(rows[r][a] * rows[r][b] for r in range(len(rows))) for b in range(size)]
                 for a in range(size)]
            h = [sum(rows[r][a] * rhs[r] for r in range(len(rows))) for a in range(size)]
            lam = _solve_exact(G, h)
            if lam is None or any(l < 0 for l in lam):
                continue
            if all(sum(rows[r][a] * lam[a] for a in range(size)) == rhs[r] for r in range(len(rows))):
                out = [Fraction(0)] * k
                for a, j in enumerate(sub):
                    out[j] = lam[a]
                return out
    return None


def _prox_pwa(u: PotentialGradient, y) -> tuple:
    """``argmin phi(x) + |x - y|^2 / 2`` with an exact optimality polish."""
    phi = u.phi
    n = phi.n
    yf = np.array([float(v) for v in y])
    A, b = u._A, u._b
    z0 = np.concatenate([yf, [float(np.max(A @ yf + b))]])
    cons = {"type": "ineq", "fun": lambda z: z[n] - A @ z[:n] - b,
            "jac": lambda z: np.hstack([-A, np.ones((len(b), 1))])}
    res = minimize(lambda z: z[n] + 0.5 * np.sum((z[:n] - yf) ** 2), z0,
                   jac=lambda z: np.concatenate([z[:n] - yf, [1.0]]),
                   constraints=[cons], method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
    xf = res.x[:n]
    vals = A @ xf + b
    cand = [int(j) for j in np.argsort(-vals)[: n + 3] if vals[int(j)] >= vals.max() - 1e-7]
    # exact KKT: x = y - sum lam_j A_j, active pieces equal, lam in the simplex
    for size in range(1, min(len(cand), n + 1) + 1):
        for sub in itertools.combinations(cand, size):
            x = _kkt_solve(phi, y, sub)
            if x is not None:
                return x
    return tuple(Fraction(float(v)) for v in xf)


def _kkt_solve(phi, y, sub):
    n = phi.n
    size = len(sub)
    # unknowns: x (n), t, lam (size)
    N = n + 1 + size
    M, rhs = [], []
    for c in range(n):
        row = [Fraction(0)] * N
        row[c] = Fraction(1)
        for a, j in enumerate(sub):
            row[n + 1 + a] = phi.pieces[j][0][c]
        M.append(row)
        rhs.append(y[c])
    for j in sub:
        A, bj = phi.pieces[j]
        row = [Fraction(0)] * N
        for c in range(n):
            row[c] = A[c]
        row[n] = Fraction(-1)
        M.append(row)
        rhs.append(-bj)
    row = [Fraction(0)] * N
    for a in range(size):
        row[n + 1 + a] = Fraction(1)
    M.append(row)
    rhs.append(Fraction(1))
    if len(M) != N:
        return None
    sol = _solve_exact(M, rhs)
    if sol is None or any(l < 0 for l in sol[n + 1:]):
        return None
    x, t = tuple(sol[:n]), sol[n]
    if any(phi.piece_value(j, x) > t for j in range(len(phi.pieces))):
        return None
    return x


def _bisect_1d(g, t: Fraction, tol: Fraction, max_iter: int = 400) -> Fraction:
    u0 = as_fraction(g(t))
    lo, hi = t - abs(u0), t + abs(u0)
    h = lambda x: x + as_fraction(g(x)) - t
    if h(lo) > 0 or h(hi) < 0:
        raise NoBracket(f"no bracket around {t}")
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = (lo + hi) / 2
        mid = Fraction(math.floor(mid * (1 << 80)), 1 << 80) if mid.denominator > (1 << 80) else mid
        if h(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(h(lo)) <= abs(h(hi)) else hi


def resolvent(u: LipschitzMap, y, tol=Fraction(1, 10 ** 6), max_iter: int = 100_000) -> Resolved:
    """Solve ``u(x) + x = y`` for a monotone ``u`` to residual at most ``tol``.

    Affine maps are solved exactly, separable maps coordinatewise (exactly for
    piecewise-linear components, by bisection otherwise), gradients of
    piecewise-affine potentials through their proximal problem, and anything
    else by the damped iteration ``x <- x - a (u(x) + x - y)`` with
    ``a = 1 / (1 + L)^2``.
    """
    y = _vec(y)
    tol = as_fraction(tol)
    if len(y) != u.n:
        raise ValueError("dimension mismatch")
    if not u.monotone:
        raise NotMonotone(f"{u!r} is not monotone")
    if isinstance(u, AffineMap):
        n = u.n
        M = [[u.matrix[i][j] + (1 if i == j else 0) for j in range(n)] for i in range(n)]
        x = _solve_exact(M, [a - c for a, c in zip(y, u.offset)])
        if x is None:
            raise NoBracket("singular linear system")
        return Resolved(tuple(x), _residual(u, x, y), "exact")
    if isinstance(u, SeparableMap):
        xs = []
        for g, t in zip(u.components, y):
            if hasattr(g, "solve_shifted"):
                xs.append(g.solve_shifted(t))
            else:
                xs.append(_bisect_1d(g, t, tol / (2 * u.n)))
        x = tuple(xs)
        method = "exact" if all(hasattr(g, "solve_shifted") for g in u.components) else "bisection"
    elif isinstance(u, PotentialGradient):
        x = _prox_pwa(u, y)
        method = "prox"
    elif isinstance(u, TableMap):
        raise NoBracket("table maps are only defined on their points")
    else:
        if u.lipschitz is None:
            raise NoBracket("damped iteration needs a Lipschitz bound")
        alpha = 1.0 / float(1 + u.lipschitz) ** 2
        xf = np.array([float(v) for v in y])
        yf = xf.copy()
        for _ in range(max_iter):
            step = np.array([float(v) for v in u(tuple(Fraction(v) for v in xf))]) + xf - yf
            if np.linalg.norm(step) < float(tol) / 4:
                break
            xf = xf - alpha * step
        x = tuple(Fraction(float(v)) for v in xf)
        method = "damped"
    res = _residual(u, x, y)
    if res > tol:
        raise NoBracket(f"residual {float(res):.3g} above tolerance {float(tol):.3g}")
    return Resolved(x, res, method)


def resolvent_map(u: LipschitzMap, tol=Fraction(1, 10 ** 9)) -> LipschitzMap:
    """``(u + I)^{-1}`` as a 1-Lipschitz map (evaluated through :func:`resolvent`).

    Separable piecewise-linear inputs give an exact separable result.
    """
    if isinstance(u, AffineMap):
        n = u.n
        cols = []
        for c in range(n):
            M = [[u.matrix[i][j] + (1 if i == j else 0) for j in range(n)] for i in range(n)]
            col = _solve_exact(M, [Fraction(int(i == c)) for i in range(n)])
            if col is None:
                raise NoBracket("singular linear system")
            cols.append(col)
        inv = [[cols[j][i] for j in range(n)] for i in range(n)]
        off = [-sum((inv[i][j] * u.offset[j] for j in range(n)), Fraction(0)) for i in range(n)]
        g = AffineMap(inv, off, name=f"resolvent({u.name})", require_monotone=False)
        g.lipschitz = Fraction(1)
        return g
    if isinstance(u, SeparableMap) and all(hasattr(g, "solve_shifted") for g in u.components):
        return SeparableMap([ShiftedInverse(g) for g in u.components], name=f"resolvent({u.name})")
    g = LipschitzMap(u.n, lambda y: resolvent(u, y, tol).x, lipschitz=1,
                     reason="resolvent of a monotone map", name=f"resolvent({u.name})")
    return g


class ShiftedInverse:
    """``(g + id)^{-1}`` for a 1D component that can solve ``x + g(x) = t`` exactly."""

    lipschitz = Fraction(1)

    def __init__(self, g):
        self.g = g

    def __call__(self, t) -> Fraction:
        return self.g.solve_shifted(as_fraction(t))

    def image(self, a, b) -> tuple:
        # strictly increasing, so half-open cells keep an open top
        return self(a), self(b), True


# -- differentiability probe ------------------------------------------------------------

@dataclass(frozen=True)
class ScaleFit:
    j: int
    jacobian: np.ndarray
    residual: float
    drift: float | None
    unstable: bool


@dataclass(frozen=True)
class DiffReport:
    """Least-squares linear fits of ``f(z + h d) - f(z)`` over a stencil at ``h = 2**-j``.

    A scale is unstable when its residual or its drift from the previous scale
    reaches ``2**(-j/2)``; two or more unstable scales give ``oscillating``.
    """

    point: tuple
    scales: tuple
    fits: tuple
    verdict: str

    @property
    def jacobian(self) -> np.ndarray:
        return self.fits[-1].jacobian

    def singular_value_min(self) -> float:
        return float(np.linalg.svd(self.jacobian, compute_uv=False).min())

    def unstable_scales(self) -> list[int]:
        return [f.j for f in self.fits if f.unstable]

    def table(self) -> list[tuple]:
        """Rows ``(j, residual, drift, slope entries...)`` for plotting."""
        return [(f.j, f.residual, f.drift, *f.jacobian.ravel().tolist()) for f in self.fits]


def _stencil(n: int) -> list[tuple]:
    dirs = []
    for c in range(n):
        for s in (1, -1):
            dirs.append(tuple(s if i == c else 0 for i in range(n)))
    for signs in itertools.product((1, -1), repeat=n):
        dirs.append(signs)
    return dirs


def diff_probe(f: Callable, z, scales: Sequence[int], n: int | None = None) -> DiffReport:
    """Finite-scale evidence for differentiability of ``f`` at ``z``.

    ``scales`` are exponents ``j`` (step ``2**-j``); the stencil has the ``2n``
    axis directions and the ``2**n`` diagonal sign vectors.
    """
    z = _vec(z)
    n = len(z) if n is None else n
    dirs = _stencil(n)
    D = np.array(dirs, dtype=float)
    fz = np.array([float(v) for v in _vec(f(z))])
    fits = []
    prev = None
    unstable_count = 0
    for j in scales:
        h = Fraction(1, 1 << j)
        rows = []
        for d in dirs:
            x = tuple(a + h * b for a, b in zip(z, d))
            rows.append([float(v) for v in _vec(f(x))])
        Y = (np.array(rows) - fz) / float(h)
        sol, *_ = np.linalg.lstsq(D, Y, rcond=None)
        J = sol.T
        resid = float(np.sqrt(np.mean(np.sum((D @ sol - Y) ** 2, axis=1))))
        drift = None if prev is None else float(np.linalg.norm(J - prev))
        thresh = 2.0 ** (-j / 2)
        unstable = resid >= thresh or (drift is not None and drift >= thresh)
        unstable_count += unstable
        fits.append(ScaleFit(j, J, resid, drift, unstable))
        prev = J
    verdict = "oscillating" if unstable_count >= 2 else "stable"
    return DiffReport(z, tuple(scales), tuple(fits), verdict)


# -- singularity probe ----------------------------------------------------------------

@dataclass(frozen=True)
class SingularityReport:
    """Outcome of searching for a cube whose image is small relative to the cube.

    ``status`` is ``found`` when ``ratio <= eps`` for the cube ``[lo, hi]``,
    otherwise ``inconclusive`` with the best ratio seen.
    """

    status: str
    eps: Fraction
    lo: tuple | None
    hi: tuple | None
    delta: Fraction | None
    ratio: float
    method: str


_MARGIN = 1e-9


def _image_bounds(f, lip: float, z, delta: Fraction, m: int, A: np.ndarray):
    n = len(z)
    zf = np.array([float(v) for v in z])
    axes = [np.linspace(float(c - delta), float(c + delta), m + 1) for c in z]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    vals = f.batch(pts) if hasattr(f, "batch") else \
        np.array([[float(v) for v in _vec(f(tuple(Fraction(p) for p in pt)))] for pt in pts])
    r = float(delta) / m * math.sqrt(n) * (1 + _MARGIN)  # spacing 2 delta / m
    d = 2 * float(delta)
    # bounding box of the image
    box = float(np.prod(vals.max(0) - vals.min(0) + 2 * lip * r)) * (1 + _MARGIN)
    # slab around the affine model f(z) + A(x - z): (n-1)-dim extent times thickness
    fz = np.array([float(v) for v in _vec(f(z))])
    model = fz + (pts - zf) @ A.T
    anorm = float(np.linalg.norm(A, 2))
    eta = (float(np.max(np.linalg.norm(vals - model, axis=1))) + (lip + anorm) * r) * (1 + _MARGIN)
    U, s, Vt = np.linalg.svd(A)
    slab = math.inf
    if s.min() < 1e-12 * max(1.0, s.max()):
        reach = anorm * float(delta) * math.sqrt(n)
        slab = (2 * (reach + eta * math.sqrt(n))) ** (n - 1) * 2 * eta * math.sqrt(n) * (1 + _MARGIN)
    return min(box, slab) / d ** n, "slab" if slab < box else "box"


def singularity_probe(f: LipschitzMap, z, eps, depth_cap: int = 12, jacobian=None,
                      grid_cap: int = 256) -> SingularityReport:
    """Look for a cube ``C`` around ``z`` with ``lambda(f(C)) <= eps lambda(C)``.

    Image volumes are bounded from grid samples widened by the Lipschitz modulus,
    either as a bounding box or, when the (given or probed) derivative is
    singular, as a thin slab around the affine model.
    """
    z = _vec(z)
    eps = as_fraction(eps)
    n = len(z)
    if f.lipschitz is None:
        raise ValueError("the probe needs a Lipschitz bound")
    lip = float(f.lipschitz)
    if jacobian is None:
        jacobian = diff_probe(f, z, [depth_cap + 4]).jacobian
    A = np.atleast_2d(np.array(jacobian, dtype=float))
    best = (math.inf, None, None)
    for j in range(1, depth_cap + 1):
        delta = Fraction(1, 1 << j)
        m = 8
        while m <= grid_cap:
            ratio, method = _image_bounds(f, lip, z, delta, m, A)
            if ratio < best[0]:
                best = (ratio, delta, method)
            if ratio <= float(eps):
                lo = tuple(c - delta for c in z)
                hi = tuple(c + delta for c in z)
                return SingularityReport("found", eps, lo, hi, delta, ratio, method)
            m *= 2
            if m ** n > 70_000:
                break
    ratio, delta, method = best
    return SingularityReport("inconclusive", eps, None, None, delta, ratio, method or "box")
