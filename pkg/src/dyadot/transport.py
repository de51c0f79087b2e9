"""Exact discrete optimal transport.

The solver is the transportation simplex on exactly scaled integers: a
northwest-corner spanning tree, potentials by tree traversal, and a supply
perturbation that makes every basis nondegenerate so pivoting cannot cycle.
Every result carries dual potentials that certify optimality.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .exact import Interval, as_fraction, as_vector, root_bounds, sqrt_bounds
from .measure import DiscreteMeasure, DyadicHistogram, pushforward, _apply

__all__ = [
    "Coupling",
    "TransportResult",
    "CdfMap",
    "cost_of",
    "cost_matrix",
    "pair_cost",
    "solve_ot",
    "wasserstein",
    "map_cost",
    "cdf_transport_1d",
    "cdf_map_cost",
    "diameter_upper",
]


def _sq(x, y) -> Fraction:
    return sum(((a - b) ** 2 for a, b in zip(x, y)), Fraction(0))


def pair_cost(x, y, p: int, bits: int = 96) -> Interval:
    """``|x - y|^p`` as an interval, exact whenever the root is not needed."""
    d2 = _sq(x, y)
    if p % 2 == 0:
        return Interval.point(d2 ** (p // 2))
    if len(x) == 1:
        return Interval.point(abs(x[0] - y[0]) ** p)
    d = sqrt_bounds(d2, bits)
    base = d2 ** (p // 2)
    return Interval(base * d.lo, base * d.hi)


def cost_matrix(xs, ys, p: int, bits: int = 96) -> list[list[Interval]]:
    return [[pair_cost(x, y, p, bits) for y in ys] for x in xs]


def diameter_upper(n: int) -> Fraction:
    """Rational upper bound on the diameter of the unit cube in R^n."""
    return sqrt_bounds(n, 32).hi


class Coupling:
    """Nonnegative matrix with marginals ``mu`` (rows) and ``nu`` (columns), checked exactly."""

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure, matrix):
        m, k = len(mu), len(nu)
        pi = [[as_fraction(v) for v in row] for row in matrix]
        if len(pi) != m or any(len(row) != k for row in pi):
            raise ValueError(f"coupling must be {m}x{k}")
        if any(v < 0 for row in pi for v in row):
            raise ValueError("negative coupling entry")
        for i, w in enumerate(mu.weights):
            if sum(pi[i]) != w:
                raise ValueError(f"row {i} sums to {sum(pi[i])}, expected {w}")
        for j, w in enumerate(nu.weights):
            if sum(pi[i][j] for i in range(m)) != w:
                raise ValueError(f"column {j} does not match the target weight")
        self.mu, self.nu, self.matrix = mu, nu, pi

    @classmethod
    def product(cls, mu: DiscreteMeasure, nu: DiscreteMeasure) -> "Coupling":
        return cls(mu, nu, [[a * b for b in nu.weights] for a in mu.weights])

    @classmethod
    def from_map(cls, mu: DiscreteMeasure, T) -> "Coupling":
        """Plan ``(I x T) # mu`` onto the image measure."""
        nu = pushforward(mu, T)
        index = {p: j for j, p in enumerate(nu.points)}
        rows = []
        for p, w in mu:
            row = [Fraction(0)] * len(nu)
            row[index[_apply(T, p)]] = w
            rows.append(row)
        return cls(mu, nu, rows)

    def support(self) -> list[tuple[int, int]]:
        return [(i, j) for i, row in enumerate(self.matrix) for j, v in enumerate(row) if v]

    def marginals_exact(self) -> bool:
        m, k = len(self.mu), len(self.nu)
        return (all(sum(self.matrix[i]) == self.mu.weights[i] for i in range(m))
                and all(sum(self.matrix[i][j] for i in range(m)) == self.nu.weights[j]
                        for j in range(k)))


def cost_of(pi: Coupling, p: int, bits: int = 96) -> Union[Fraction, Interval]:
    """Transport cost of a plan; a ``Fraction`` when exact, otherwise a certified interval."""
    if p < 1:
        raise ValueError("p must be a positive integer")
    lo = hi = Fraction(0)
    for i, j in pi.support():
        c = pair_cost(pi.mu.points[i], pi.nu.points[j], p, bits)
        lo += pi.matrix[i][j] * c.lo
        hi += pi.matrix[i][j] * c.hi
    return lo if lo == hi else Interval(lo, hi)


def map_cost(mu: DiscreteMeasure, T, p: int) -> Union[Fraction, Interval]:
    return cost_of(Coupling.from_map(mu, T), p)


@dataclass(frozen=True)
class TransportResult:
    """Optimal plan with dual potentials.

    ``cost`` is the exact optimum when the cost matrix is rational (even ``p``
    or ``n == 1``); otherwise it is ``None`` and ``bounds`` brackets the optimum
    between the dual value on the lower cost matrix and the plan's upper cost.
    """

    cost: Fraction | None
    bounds: Interval
    coupling: Coupling
    p: int
    u: tuple
    v: tuple
    pivots: int

    @property
    def dual_value(self) -> Fraction:
        return (sum(a * b for a, b in zip(self.coupling.mu.weights, self.u))
                + sum(a * b for a, b in zip(self.coupling.nu.weights, self.v)))

    def verify(self, bits: int = 96) -> bool:
        """Recheck marginals, dual feasibility, complementary slackness and strong duality."""
        pi = self.coupling
        if not pi.marginals_exact():
            return False
        C = cost_matrix(pi.mu.points, pi.nu.points, self.p, bits)
        for i, row in enumerate(C):
            for j, c in enumerate(row):
                if self.u[i] + self.v[j] > c.lo:
                    return False
                if pi.matrix[i][j] and self.u[i] + self.v[j] != c.lo:
                    return False
        primal = sum((pi.matrix[i][j] * C[i][j].lo for i, j in pi.support()), Fraction(0))
        return primal == self.dual_value == self.bounds.lo


def _northwest(a, b):
    m, k = len(a), len(b)
    a, b = list(a), list(b)
    flow = {}
    i = j = 0
    while i < m and j < k:
        t = min(a[i], b[j])
        flow[(i, j)] = t
        a[i] -= t
        b[j] -= t
        # advance one index only, keeping m + k - 1 basic cells in a spanning tree
        if a[i] == 0 and i < m - 1:
            i += 1
        elif b[j] == 0:
            j += 1
        else:
            i += 1
    return flow


def _potentials(C, basis, m, k):
    adj = [[] for _ in range(m + k)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    u = [None] * m
    v = [None] * k
    u[0] = 0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other in adj[node]:
            if node < m:
                j = other - m
                if v[j] is None:
                    v[j] = C[node][j] - u[node]
                    queue.append(other)
            else:
                i = other
                if u[i] is None:
                    u[i] = C[i][node - m] - v[node - m]
                    queue.append(other)
    return u, v, adj


def _cycle(adj, m, i, j):
    """Tree path from column ``j`` back to row ``i`` as a list of basic cells."""
    start, goal = m + j, i
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for other in adj[node]:
            if other not in parent:
                parent[other] = node
                queue.append(other)
    cells = []
    node = goal
    while parent[node] is not None:
        prev = parent[node]
        cells.append((node, prev - m) if node < m else (prev, node - m))
        node = prev
    cells.reverse()
    return cells


def _common_scale(values) -> int:
    d = 1
    for v in values:
        d = math.lcm(d, v.denominator)
    return d


def _tree_flows(basis, a, b):
    """Flows of a spanning-tree basis for supplies ``a`` and demands ``b`` (leaf peeling)."""
    m = len(a)
    rest = list(a) + list(b)
    adj = {node: set() for node in range(m + len(b))}
    for i, j in basis:
        adj[i].add(m + j)
        adj[m + j].add(i)
    leaves = [node for node, nb in adj.items() if len(nb) == 1]
    flow = {}
    while leaves:
        node = leaves.pop()
        if len(adj[node]) != 1:
            continue
        other = adj[node].pop()
        adj[other].discard(node)
        cell = (node, other - m) if node < m else (other, node - m)
        flow[cell] = rest[node]
        rest[other] -= rest[node]
        rest[node] = 0
        if len(adj[other]) == 1:
            leaves.append(other)
    return flow


def _simplex(C, a, b, pricing: str = "dantzig", max_pivots: int = 10 ** 7):
    """Transportation simplex on exact data; returns flows and potentials as Fractions.

    Supplies are perturbed (``a_i + eps``, last demand ``+ m eps``) so every basis
    is nondegenerate and no pivot sequence can cycle; the optimal basis is then
    re-solved with the true supplies. ``pricing="dantzig"`` enters the most
    negative reduced cost, ``"bland"`` the lowest-index negative one.
    """
    if pricing not in ("dantzig", "bland"):
        raise ValueError("pricing must be 'dantzig' or 'bland'")
    m, k = len(a), len(b)
    cs = _common_scale(v for row in C for v in row)
    ws = _common_scale(list(a) + list(b))
    Ci = [[int(v * cs) for v in row] for row in C]
    big = max((abs(v) for row in Ci for v in row), default=0)
    dtype = np.int64 if big < 1 << 60 else object
    Cn = np.array(Ci, dtype=dtype)
    ai = [int(v * ws) for v in a]
    bi = [int(v * ws) for v in b]
    scale = m + 1
    ap = [x * scale + 1 for x in ai]
    bp = [x * scale for x in bi]
    bp[-1] += m
    flow = _northwest(ap, bp)
    basis = set(flow)
    pivots = 0
    while True:
        u, v, adj = _potentials(Ci, basis, m, k)
        red = Cn - np.array(u, dtype=dtype)[:, None] - np.array(v, dtype=dtype)[None, :]
        neg = np.argwhere(red < 0)
        if len(neg) == 0:
            true = _tree_flows(basis, ai, bi)
            flows = {c: Fraction(f, ws) for c, f in true.items()}
            return (flows, basis, [Fraction(x, cs) for x in u], [Fraction(x, cs) for x in v],
                    pivots)
        if pricing == "bland":
            i, j = (int(t) for t in neg[0])
        else:
            vals = red[neg[:, 0], neg[:, 1]]
            i, j = (int(t) for t in neg[int(np.argmin(vals))])
        entering = (i, j)
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("pivot limit reached")
        path = _cycle(adj, m, i, j)
        # path runs col j -> ... -> row i; signs alternate starting with minus
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min((c for c in minus if flow[c] == theta), key=lambda c: c[0] * k + c[1])
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[entering] = theta
        basis.add(entering)
        basis.remove(leaving)
        del flow[leaving]


def solve_ot(mu: DiscreteMeasure, nu: DiscreteMeasure, p: int = 2, bits: int = 96,
             pricing: str = "dantzig") -> TransportResult:
    """Optimal coupling for the cost ``|x - y|^p`` with a dual certificate."""
    if mu.n != nu.n:
        raise ValueError("dimension mismatch")
    if p < 1:
        raise ValueError("p must be a positive integer")
    C = cost_matrix(mu.points, nu.points, p, bits)
    lower = [[c.lo for c in row] for row in C]
    flow, basis, u, v, pivots = _simplex(lower, mu.weights, nu.weights, pricing)
    m, k = len(mu), len(nu)
    matrix = [[flow.get((i, j), Fraction(0)) for j in range(k)] for i in range(m)]
    pi = Coupling(mu, nu, matrix)
    lo = sum((matrix[i][j] * lower[i][j] for i, j in pi.support()), Fraction(0))
    hi = sum((matrix[i][j] * C[i][j].hi for i, j in pi.support()), Fraction(0))
    exact = all(c.is_exact for row in C for c in row)
    return TransportResult(lo if exact else None, Interval(lo, hi), pi, p,
                           tuple(u), tuple(v), pivots)


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, p: int = 1,
                tol: Fraction = Fraction(1, 1 << 40)) -> Interval:
    """Certified enclosure of ``W_p`` of width at most ``tol`` (when reachable)."""
    tol = as_fraction(tol)
    bits = 64
    while True:
        res = solve_ot(mu, nu, p, bits=bits)
        lo, hi = res.bounds.lo, res.bounds.hi
        root_bits = bits
        while True:
            w = Interval(root_bounds(lo, p, root_bits).lo, root_bounds(hi, p, root_bits).hi)
            if w.width <= tol or root_bits >= 4 * bits:
                break
            root_bits *= 2
        if w.width <= tol or bits >= 1024:
            return w
        bits *= 2


# -- one dimension -------------------------------------------------------------

class CdfMap:
    """Cumulative distribution function of a 1D histogram, exact at every rational point."""

    def __init__(self, h: DyadicHistogram):
        if h.n != 1:
            raise ValueError("the CDF map needs a one-dimensional histogram")
        self.histogram = h
        self.breaks = [Fraction(j, 1 << h.depth) for j in range((1 << h.depth) + 1)]
        masses = [m for _, m in h.cells()]
        acc = [Fraction(0)]
        for m in masses:
            acc.append(acc[-1] + m)
        self.values = acc
        self.densities = [m * (1 << h.depth) for m in masses]

    def __call__(self, x) -> Fraction:
        x = as_vector(x)[0]
        if x <= 0:
            return Fraction(0)
        if x >= 1:
            return Fraction(1)
        j = bisect_right(self.breaks, x) - 1
        return self.values[j] + self.densities[j] * (x - self.breaks[j])

    def inverse(self, y) -> Fraction:
        """Smallest ``x`` with ``F(x) = y``."""
        y = as_fraction(y)
        if not 0 <= y <= 1:
            raise ValueError("argument outside [0, 1]")
        j = bisect_right(self.values, y) - 1
        j = min(j, len(self.densities) - 1)
        while j > 0 and self.values[j] == y:
            j -= 1
        if self.densities[j] == 0:
            return self.breaks[j + 1]
        return self.breaks[j] + (y - self.values[j]) / self.densities[j]

    def table(self) -> dict:
        """Map values at cell centres."""
        h = 1 << self.histogram.depth
        return {(Fraction(2 * j + 1, 2 * h),): (self(Fraction(2 * j + 1, 2 * h)),)
                for j in range(h)}

    def lipschitz(self) -> Fraction:
        return max(self.densities)


def cdf_transport_1d(h: DyadicHistogram) -> CdfMap:
    return CdfMap(h)


def _int_pow_abs(alpha: Fraction, beta: Fraction, a: Fraction, b: Fraction, p: int) -> Fraction:
    """Exact integral of ``|alpha x + beta|^p`` over ``[a, b]``."""
    if a >= b:
        return Fraction(0)
    if alpha == 0:
        return abs(beta) ** p * (b - a)
    root = -beta / alpha
    if a < root < b:
        return _int_pow_abs(alpha, beta, a, root, p) + _int_pow_abs(alpha, beta, root, b, p)
    sign = 1 if alpha * ((a + b) / 2) + beta >= 0 else -1
    prim = lambda x: (alpha * x + beta) ** (p + 1) / (alpha * (p + 1))
    return sign ** p * (prim(b) - prim(a)) if p % 2 == 0 else sign * (prim(b) - prim(a))


def cdf_map_cost(F: CdfMap, p: int = 2) -> Fraction:
    """Exact ``int |F(x) - x|^p dmu(x)`` for the histogram measure behind ``F``."""
    total = Fraction(0)
    for j, rho in enumerate(F.densities):
        if rho == 0:
            continue
        a, b = F.breaks[j], F.breaks[j + 1]
        # F(x) - x = (rho - 1) x + (F(a) - rho a)
        total += rho * _int_pow_abs(rho - 1, F.values[j] - rho * a, a, b, p)
    return total
