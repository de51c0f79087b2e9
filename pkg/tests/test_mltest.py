from fractions import Fraction

import pytest

from dyadot.minty import LipschitzMap, constant_map, flatten_map, identity_map, scaling_map
from dyadot.mltest import ModulusTooCoarse, critical_test_build, read_mltest, write_mltest


def test_identity_levels_empty_above_zero():
    t = critical_test_build(identity_map(1), 4, 6)
    assert t.measure(0) == 1 and all(t.measure(i) == 0 for i in range(1, 5))
    assert t.verify()


def test_half_map_exact_image_measure():
    t = critical_test_build(scaling_map(Fraction(1, 2)), 3, 6)
    for w in ("0", "00", "01"):
        assert t.nu_lower(w) == 2 * Fraction(1, 2 ** len(w))
    assert t.levels[1] == t.levels[0] and len(t.levels[1]) == 32 and not t.levels[2]
    assert t.verify()


def test_constant_map_single_cell():
    t = critical_test_build(constant_map((Fraction(1, 3),)), 6, 6)
    assert all(len(level) == 1 for level in t.levels)
    assert t.nu_lower(t.levels[0][0]) == 1
    assert t.verify()


def test_two_dimensional_flatten():
    t = critical_test_build(flatten_map(), 3, 3, n=2)
    assert t.verify() and t.measure(3) == Fraction(1, 8)


def test_coarse_modulus_rejected():
    wild = LipschitzMap(1, lambda x: (x[0] * 0,), lipschitz=64)
    with pytest.raises(ModulusTooCoarse):
        critical_test_build(wild, 2, 6)


def test_file_round_trip():
    t = critical_test_build(scaling_map(Fraction(1, 2)), 2, 3)
    back = read_mltest(write_mltest(t))
    assert back.levels == t.levels and back.depth == 3
    with pytest.raises(ValueError):
        read_mltest("levels 1\nV 0\n0\n")
