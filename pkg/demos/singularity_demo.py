"""Singularity probes and bounded tests on a few catalog maps."""

from fractions import Fraction

from dyadot.minty import flatten_map, identity_map, parabola_map, scaling_map, singularity_probe
from dyadot.mltest import critical_test_build

z = (Fraction(1, 3), Fraction(0))
for name, f in [("flatten", flatten_map()), ("parabola", parabola_map()), ("identity", identity_map(2))]:
    rep = singularity_probe(f, z, Fraction(1, 16))
    print(f"{name:9s} {rep.status:12s} ratio bound {rep.ratio:.4g} at side {float(rep.delta):.4g}")

t = critical_test_build(scaling_map(Fraction(1, 2), 1), i_max=4, depth=8)
print("x/2 test valid:", t.verify())
print("level measures:", [str(t.measure(i)) for i in range(5)])
