"""Search a Brenier potential for a 1D histogram and compare with the CDF map."""

from fractions import Fraction

from dyadot.brenier import SubdifferentialCell, brenier_search, gradient_of
from dyadot.measure import DyadicHistogram
from dyadot.transport import cdf_transport_1d

densities = [Fraction(1, 2), 1, Fraction(3, 2), 1, 1, Fraction(3, 2), 1, Fraction(1, 2)]
h = DyadicHistogram.from_densities(1, 3, densities)

res = brenier_search(h, precision=5)
F = cdf_transport_1d(h)
print(f"pieces {len(res.potential.pieces)}, certified gap {float(res.gap):.3g}, complete {res.complete}")
print("centre    grad phi   cdf map")
for i in range(8):
    x = Fraction(2 * i + 1, 16)
    g = gradient_of(res.potential, (x,))
    g = g.centroid() if isinstance(g, SubdifferentialCell) else g
    print(f"{float(x):.4f}    {float(g[0]):.4f}     {float(F(x)):.4f}")
