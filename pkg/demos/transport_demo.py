"""Exact optimal transport between two small point clouds, with its certificate."""

from fractions import Fraction

from dyadot.measure import DiscreteMeasure
from dyadot.transport import solve_ot, wasserstein

mu = DiscreteMeasure.uniform([(0, 0), (Fraction(1, 2), 1), (1, Fraction(1, 4))])
nu = DiscreteMeasure.uniform([(1, 1), (0, Fraction(1, 2)), (Fraction(3, 4), 0)])

res = solve_ot(mu, nu, p=2)
print("squared-distance cost:", res.cost)
print("dual value:           ", res.dual_value)
print("certificate verifies: ", res.verify())

def show(pt):
    return "(" + ", ".join(str(c) for c in pt) + ")"


for i, j in res.coupling.support():
    print(f"  {show(mu.points[i])} -> {show(nu.points[j])}  mass {res.coupling.matrix[i][j]}")

for p in (1, 2, 3):
    w = wasserstein(mu, nu, p, Fraction(1, 10 ** 9))
    print(f"W_{p} in [{float(w.lo):.9f}, {float(w.hi):.9f}]")
