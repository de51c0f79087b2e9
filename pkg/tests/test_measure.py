from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from dyadot.measure import (
    DiscreteMeasure,
    DyadicHistogram,
    density_bounds,
    histogram_to_discrete,
    pushforward,
    read_discrete,
    read_histogram,
    write_discrete,
    write_histogram,
)

H = Fraction(1, 2)


def test_discrete_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure(((0,), (1,)), (H, Fraction(1, 3)))
    with pytest.raises(ValueError):
        DiscreteMeasure(((0,), (0,)), (H, H))
    with pytest.raises(ValueError):
        DiscreteMeasure(((0,), (1, 1)), (H, H))
    mu = DiscreteMeasure.from_atoms([((0,), Fraction(1, 4)), ((0,), Fraction(1, 4)), ((1,), H)])
    assert len(mu) == 2 and mu.weight_of((0,)) == H


def test_pushforward_merges_images():
    mu = DiscreteMeasure.uniform([(0,), (1,), (2,)])
    nu = pushforward(mu, lambda p: (p[0] % 2,))
    assert nu.weight_of((0,)) == Fraction(2, 3)
    table = {(0,): (5,), (1,): (5,), (2,): (6,)}
    assert pushforward(mu, table).weight_of((5,)) == Fraction(2, 3)


def test_histogram_masses_and_refinement():
    h = DyadicHistogram.from_densities(1, 2, [H, Fraction(3, 2), 1, 1])
    assert h.mass("0") == Fraction(1, 2)
    assert h.mass("01") == Fraction(3, 8)
    assert h.density_at((Fraction(3, 8),)) == Fraction(3, 2)
    r = h.refine(2)
    assert r.depth == 4 and all(r.mass(w) == h.mass(w) for w in ("", "0", "01", "11"))
    assert density_bounds(h) == (H, Fraction(3, 2)) and density_bounds(h).positive
    with pytest.raises(ValueError):
        DyadicHistogram.from_masses(1, 1, [H, Fraction(1, 3)])


def test_uniform_second_moment():
    # E|x|^2 of the uniform law on [0,1]^n is n/3
    for n in (1, 2):
        assert DyadicHistogram.uniform(n, 2).second_moment() == Fraction(n, 3)


def test_histogram_to_discrete_rules():
    h = DyadicHistogram.uniform(2, 1)
    c = histogram_to_discrete(h)
    assert set(c.points) == {(Fraction(a, 4), Fraction(b, 4)) for a in (1, 3) for b in (1, 3)}
    k = histogram_to_discrete(h, "corner")
    assert (Fraction(0), Fraction(0)) in k.points


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=9), min_size=4, max_size=4))
def test_text_round_trips(ints):
    total = sum(ints)
    h = DyadicHistogram.from_masses(2, 1, [Fraction(v, total) for v in ints])
    assert read_histogram(write_histogram(h)) == h
    mu = histogram_to_discrete(h)
    assert read_discrete(write_discrete(mu)) == mu


def test_readers_reject_bad_files():
    with pytest.raises(ValueError):
        read_discrete("1 0\n")
    with pytest.raises(ValueError):
        read_histogram("dim 1\ndepth 1\n0 1/2\n0 1/2\n")
    assert read_histogram("# comment\ndim 1\ndepth 0\n- 1\n").mass("") == 1
