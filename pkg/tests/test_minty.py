import random
from fractions import Fraction

import pytest

from dyadot.brenier import PWAPotential, atom_centres
from dyadot.exact import sqrt_bounds
from dyadot.measure import DyadicHistogram
from dyadot.minty import (
    AffineMap,
    LipschitzMap,
    NotMonotone,
    PiecewiseLinear1D,
    PotentialGradient,
    SeparableMap,
    TableMap,
    cayley,
    cayley_scaled,
    constant_map,
    diff_probe,
    flatten_map,
    identity_map,
    is_psd,
    parabola_map,
    resolvent,
    resolvent_map,
    singularity_probe,
    zero_map,
)
from dyadot.transport import CdfMap

H = Fraction(1, 2)


def _identity_potential(depth, n):
    ys = atom_centres(depth, n)
    psi = [sum(v * v for v in y) / 2 for y in ys]
    m = min(psi)
    return PWAPotential.semi_discrete(depth, [p - m for p in psi], n)


def test_psd_detection():
    assert is_psd([[1, 0], [0, 0]])
    assert is_psd([[2, -1], [-1, 2]])
    assert not is_psd([[1, 2], [2, 1]])
    assert not is_psd([[0, 1], [1, 0]])
    with pytest.raises(NotMonotone):
        AffineMap([[1, 2], [2, 1]])
    # a rotation part keeps monotonicity
    assert AffineMap([[1, -1], [1, 1]]).monotone


def test_piecewise_linear_solve_and_image():
    g = PiecewiseLinear1D([0, H, 1], [0, Fraction(1, 4), 1])
    for t in (Fraction(-1), Fraction(1, 3), Fraction(3, 2), Fraction(5)):
        x = g.solve_shifted(t)
        assert x + g(x) == t
    assert g.image(0, H) == (0, Fraction(1, 4), True)
    flat = PiecewiseLinear1D([0, H, 1], [0, 0, 1])
    assert flat.image(0, H) == (0, 0, False)
    with pytest.raises(NotMonotone):
        PiecewiseLinear1D([0, 1], [1, 0])


def test_table_map_checks_pairs():
    TableMap({(0,): (0,), (1,): (2,)})
    with pytest.raises(NotMonotone):
        TableMap({(0,): (1,), (1,): (0,)})


def test_cayley_examples():
    a, b = cayley((1,), (0,))
    assert a[0].lo ** 2 <= H <= a[0].hi ** 2
    assert (-b[0].hi, -b[0].lo) == (a[0].lo, a[0].hi)
    assert cayley_scaled((0, 0), (0, 0)) == ((0, 0), (0, 0))
    s, d = cayley_scaled((1, 2), (3, -1))
    # applying the scaled map twice gives 2 (y, -x)
    assert cayley_scaled(s, d) == ((6, -2), (-2, -4))


def test_resolvent_trivial_cases():
    y = (Fraction(3), Fraction(-1, 5))
    assert resolvent(identity_map(2), y).x == (Fraction(3, 2), Fraction(-1, 10))
    assert resolvent(zero_map(2), y).x == y
    assert resolvent(constant_map((1, 1)), y).x == (2, Fraction(-6, 5))
    with pytest.raises(NotMonotone):
        resolvent(parabola_map(), y)


def test_resolvent_damped_iteration():
    # a generic Lipschitz monotone map without a closed-form resolvent
    u = LipschitzMap(2, lambda x: (x[0] + x[1] / 2, x[1] - x[0] / 2), lipschitz=2, reason="rotation+I")
    tol = Fraction(1, 10 ** 6)
    r = resolvent(u, (1, 1), tol)
    assert r.method == "damped" and r.residual <= tol


def test_resolvent_of_gradient_is_exact_and_contractive():
    u = PotentialGradient(_identity_potential(2, 2))
    rng = random.Random(5)
    pts = [tuple(Fraction(rng.randrange(-2 ** 12, 2 ** 13), 2 ** 12) for _ in range(2)) for _ in range(30)]
    xs = [resolvent(u, y) for y in pts]
    assert all(r.residual == 0 for r in xs)
    for (y1, r1), (y2, r2) in zip(zip(pts, xs), zip(pts[1:], xs[1:])):
        assert sum((a - b) ** 2 for a, b in zip(r1.x, r2.x)) <= sum((a - b) ** 2 for a, b in zip(y1, y2))


def test_resolvent_inverts_forward_map():
    h = DyadicHistogram.from_densities(1, 2, [H, 2, 1, H])
    F = CdfMap(h)
    u = SeparableMap([PiecewiseLinear1D(F.breaks, F.values)] * 2)
    g = resolvent_map(u)
    for x in [(Fraction(1, 3), Fraction(2, 7)), (Fraction(-1), Fraction(5, 4))]:
        gx = tuple(a + b for a, b in zip(u(x), x))
        assert g(gx) == x and resolvent(u, gx).x == x


def test_diff_probe_examples():
    aff = AffineMap([[2, 1], [0, 1]], [1, 1])
    rep = diff_probe(aff, (Fraction(1, 3), Fraction(1, 5)), range(3, 8))
    assert rep.verdict == "stable"
    assert all(f.residual < 1e-12 for f in rep.fits)
    assert all(f.drift < 1e-12 for f in rep.fits[1:])
    kink = diff_probe(lambda x: (abs(x[0]),), (0,), range(3, 10))
    assert kink.verdict == "oscillating"
    assert all(f.residual > 0.5 for f in kink.fits)


def test_singularity_probe_cases():
    for eps in (Fraction(1, 4), Fraction(1, 16)):
        flat = singularity_probe(flatten_map(), (Fraction(1, 3), Fraction(1, 5)), eps)
        assert flat.status == "found" and flat.ratio <= eps
    par = singularity_probe(parabola_map(), (H, 0), Fraction(1, 8))
    assert par.status == "found" and par.ratio <= 1 / 8
    # the exact image of the found cube under x2 -> x2^2 has ratio delta / 2
    assert par.delta / 2 <= par.ratio
    ident = singularity_probe(identity_map(2), (H, H), Fraction(1, 2))
    assert ident.status == "inconclusive" and ident.ratio >= 1
