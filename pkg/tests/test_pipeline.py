from fractions import Fraction

import pytest

from dyadot.martingale import InfeasibleSpec, OscillationSpec
from dyadot.minty import identity_map, monotone_on
from dyadot.pipeline import (
    MartingaleCdf,
    backward_manifest,
    forward_manifest,
    parse_manifest,
    parse_map,
    replay,
    run_backward,
    run_forward,
)

SPEC = OscillationSpec(7, Fraction(3, 2), 1, "01" * 24)


def test_martingale_cdf_exact():
    run = run_backward(SPEC)
    F = run.transport.components[0]
    assert isinstance(F, MartingaleCdf)
    for x in (Fraction(1, 7), Fraction(1, 3), Fraction(5, 6)):
        t = x + F(x)
        assert F.solve_shifted(t) == x
    assert F(0) == 0 and F(1) == 1


def test_forward_identity():
    z = (Fraction(1, 3), Fraction(1, 3))
    run = run_forward(identity_map(2), z, range(4, 9), "identity:2")
    assert run.y == (Fraction(2, 3), Fraction(2, 3)) and run.gy == z
    assert run.report_z.verdict == run.report_y.verdict == "stable"
    assert run.consistent and run.monotone_g and run.lipschitz_g
    assert replay(forward_manifest(run)) == forward_manifest(run)


def test_backward_band_and_verdict():
    run = run_backward(SPEC)
    lo, hi = run.density_range
    assert SPEC.lower < lo and hi < SPEC.upper
    assert run.verdict == "oscillating"
    keys, tables = parse_manifest(backward_manifest(run))
    assert keys["verdict"] == "oscillating"
    assert len(tables["fit"]) == len(run.scales)


def test_degenerate_spec_rejected():
    with pytest.raises(InfeasibleSpec):
        run_backward(OscillationSpec(2, 2, 0, "01" * 8))


def test_coordinate_split_is_monotone_and_oscillating():
    run = run_backward(SPEC, n=2, certify_depth=1)
    assert run.verdict == "oscillating"
    pts = [(Fraction(a, 9), Fraction(b, 7)) for a in range(9) for b in range(7)]
    assert monotone_on(run.transport, pts)
    assert run.certificate["gap"] >= 0


def test_forward_on_backward_map():
    back = run_backward(SPEC)
    fwd = run_forward(parse_map(back.map_spec), back.point, back.scales, back.map_spec)
    assert fwd.verdict == "oscillating" and fwd.scales == back.scales
    assert fwd.inverse_error == 0 and fwd.monotone_g and fwd.lipschitz_g
