import itertools
import random
from fractions import Fraction

import pytest

from dyadot.exact import Interval
from dyadot.measure import DiscreteMeasure, DyadicHistogram, histogram_to_discrete
from dyadot.transport import (
    CdfMap,
    Coupling,
    cdf_map_cost,
    cdf_transport_1d,
    cost_of,
    pair_cost,
    solve_ot,
    wasserstein,
)


def _rand_measure(rng, m, n, den=8):
    pts = set()
    while len(pts) < m:
        pts.add(tuple(Fraction(rng.randrange(den + 1), den) for _ in range(n)))
    return DiscreteMeasure.uniform(sorted(pts))


def _brute(mu, nu, p):
    best = None
    for perm in itertools.permutations(range(len(nu))):
        c = sum(pair_cost(x, nu.points[j], p).lo for x, j in zip(mu.points, perm)) / len(mu)
        best = c if best is None else min(best, c)
    return best


@pytest.mark.parametrize("pricing", ["dantzig", "bland"])
def test_assignment_oracle(pricing):
    rng = random.Random(3)
    for _ in range(30):
        n, m = rng.choice([1, 2]), rng.randint(1, 5)
        mu, nu = _rand_measure(rng, m, n), _rand_measure(rng, m, n)
        res = solve_ot(mu, nu, 2, pricing=pricing)
        assert res.cost == _brute(mu, nu, 2)
        assert res.verify()


def test_unequal_weights_duality():
    mu = DiscreteMeasure(((0,), (1,)), (Fraction(1, 3), Fraction(2, 3)))
    nu = DiscreteMeasure(((Fraction(1, 2),), (2,), (3,)), (Fraction(1, 6),) * 2 + (Fraction(2, 3),))
    res = solve_ot(mu, nu, 1)
    assert res.coupling.marginals_exact()
    assert res.dual_value == res.cost
    # every coupling costs at least the optimum
    assert cost_of(Coupling.product(mu, nu), 1) >= res.cost


def test_irrational_costs_are_bracketed():
    mu = DiscreteMeasure.dirac((0, 0))
    nu = DiscreteMeasure.dirac((1, 1))
    res = solve_ot(mu, nu, 1)
    assert res.cost is None
    assert res.bounds.lo ** 2 <= 2 <= res.bounds.hi ** 2
    assert res.bounds.width < Fraction(1, 2 ** 80)


def test_wasserstein_metric_axioms():
    rng = random.Random(11)
    for _ in range(10):
        a, b, c = (_rand_measure(rng, 3, 2) for _ in range(3))
        ab, bc, ac = wasserstein(a, b, 2), wasserstein(b, c, 2), wasserstein(a, c, 2)
        assert wasserstein(a, a, 2) == Interval.point(0)
        assert ab.lo <= wasserstein(b, a, 2).hi and wasserstein(b, a, 2).lo <= ab.hi
        assert ac.lo <= ab.hi + bc.hi


def test_cdf_map_pushes_to_uniform():
    h = DyadicHistogram.from_densities(1, 2, [Fraction(1, 2), 2, 1, Fraction(1, 2)])
    F = cdf_transport_1d(h)
    assert F(Fraction(1, 4)) == Fraction(1, 8) and F(Fraction(1, 2)) == Fraction(5, 8)
    assert F.inverse(Fraction(5, 8)) == Fraction(1, 2)
    assert F.lipschitz() == 2
    for y in (Fraction(1, 9), Fraction(1, 2), Fraction(7, 8)):
        assert F(F.inverse(y)) == y


def test_cdf_cost_upper_bounds_discrete_lp():
    h = DyadicHistogram.from_densities(1, 2, [Fraction(1, 2), 2, 1, Fraction(1, 2)])
    F = cdf_transport_1d(h)
    exact = cdf_map_cost(F, 2)
    # the monotone map is optimal, so the discretised LP differs only by grid effects
    lam = histogram_to_discrete(DyadicHistogram.uniform(1, 6))
    mu = histogram_to_discrete(h.refine(4))
    lp = solve_ot(mu, lam, 2).cost
    assert abs(lp - exact) < Fraction(1, 100)
    assert cdf_map_cost(CdfMap(DyadicHistogram.uniform(1, 3)), 2) == 0
