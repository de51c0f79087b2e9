from fractions import Fraction

import pytest

from dyadot.dyadic import words
from dyadot.martingale import (
    InfeasibleSpec,
    Martingale,
    OscillationSpec,
    UnfairMartingale,
    build_oscillating,
    make_uniform,
    measure_of,
    minimum_depth,
    mix,
    quotient_trace,
    read_martingale,
    write_martingale,
)

H = Fraction(1, 2)


def test_fairness_enforced():
    with pytest.raises(UnfairMartingale):
        Martingale(2, {"": 1, "0": H, "1": H})
    M = Martingale(2, {"": 1, "0": H})
    assert M("1") == Fraction(3, 2)       # sibling completes the bet
    assert M("01") == H                    # flat below explicit values
    assert M.check_fairness_exhaustive() > 0


def test_uniform_and_mixture_measures():
    u = make_uniform(3)
    assert all(m == Fraction(1, 8) for _, m in measure_of(u).cells())
    M = Martingale(3, {"": 1, "0": Fraction(3, 2), "00": 2})
    mixed = mix(Fraction(1, 3), u, M)
    # the induced measure is linear in the martingale
    for w in words(3):
        assert mixed.cell_mass(w) == Fraction(1, 3) * u.cell_mass(w) + Fraction(2, 3) * M.cell_mass(w)


def test_box_mass_matches_cell_sum():
    M = Martingale(4, {"": 2, "1": 3, "10": 4, "101": 5})
    h = measure_of(M)
    lo, hi = Fraction(3, 16), Fraction(11, 16)
    direct = sum(h.mass(w) for w in words(4) if lo <= int(w, 2) / 16 and (int(w, 2) + 1) / 16 <= hi)
    assert M.box_mass((lo,), (hi,), 1) == direct


def test_baseline_spec_capital_band():
    spec = OscillationSpec(3, 2, 0, "01" * 6)
    osc = build_oscillating(spec)
    lo, hi = osc.martingale.value_range()
    assert Fraction(1) < lo and hi < Fraction(4)
    assert osc.s_up == [2, 6] and osc.s_down == [4, 8]
    assert osc.interleaved()


def test_separated_spec_witnesses_and_quotients():
    spec = OscillationSpec(7, Fraction(3, 2), 1, "01" * 24)
    osc = build_oscillating(spec)
    assert osc.s_up == [8, 20] and osc.s_down == [14, 26]
    M = osc.martingale
    for w in osc.up + osc.down:
        ((r, qv),) = quotient_trace(M, spec.point, [w.radius])
        if w in osc.up:
            assert qv.lo >= spec.up_threshold
        else:
            assert qv.hi <= spec.down_threshold


def test_spec_rejections():
    with pytest.raises(InfeasibleSpec):
        OscillationSpec(3, 2, 1, "01" * 20)          # separation fails
    with pytest.raises(InfeasibleSpec):
        OscillationSpec(2, 2, 0, "01")               # p = q
    spec = OscillationSpec(7, Fraction(3, 2), 1, "01" * 5)
    with pytest.raises(InfeasibleSpec) as info:
        build_oscillating(spec)
    assert info.value.needed_depth == minimum_depth(spec) == 26


def test_file_round_trip():
    M = build_oscillating(OscillationSpec(3, 2, 0, "01" * 6)).martingale
    text = write_martingale(M)
    assert read_martingale(text).explicit == M.explicit
    assert text.splitlines()[0] == "depth 12"
