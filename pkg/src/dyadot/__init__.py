"""Exact dyadic measures, optimal transport, Brenier potentials and monotone-map probes."""

from .brenier import (
    BrenierResult,
    BudgetExceeded,
    PWAPotential,
    brenier_search,
    conjugate,
    dual_value,
    enumerate_gamma,
    gradient_of,
)
from .dyadic import BinaryWord, DyadicCube, DyadicRational, estimate_k_constant, sandwich_search
from .exact import Interval
from .martingale import (
    InfeasibleSpec,
    Martingale,
    OscillationSpec,
    build_oscillating,
    measure_of,
    quotient_trace,
)
from .measure import DiscreteMeasure, DyadicHistogram, pushforward
from .minty import (
    AffineMap,
    MonotoneMap,
    SeparableMap,
    PotentialGradient,
    cayley,
    diff_probe,
    resolvent,
    singularity_probe,
)
from .mltest import BoundedMLTest, critical_test_build
from .pipeline import run_backward, run_forward
from .transport import Coupling, cdf_transport_1d, solve_ot, wasserstein

__version__ = "0.1.0"

__all__ = [
    "AffineMap", "BinaryWord", "BoundedMLTest", "BrenierResult", "BudgetExceeded", "Coupling",
    "DiscreteMeasure", "DyadicCube", "DyadicHistogram", "DyadicRational", "InfeasibleSpec",
    "Interval", "Martingale", "MonotoneMap", "OscillationSpec", "PWAPotential", "PotentialGradient",
    "SeparableMap", "brenier_search", "build_oscillating", "cayley", "cdf_transport_1d",
    "conjugate", "critical_test_build", "diff_probe", "dual_value", "enumerate_gamma",
    "estimate_k_constant", "gradient_of", "measure_of", "pushforward", "quotient_trace",
    "resolvent", "run_backward", "run_forward", "sandwich_search", "singularity_probe",
    "solve_ot", "wasserstein",
]
