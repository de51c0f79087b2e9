"""End-to-end runs: monotone map to resolvent and probes, and oscillating martingale to transport map.

Runs are recorded as plain-text manifests: ``key = value`` lines followed by
``[table name]`` blocks of whitespace-separated rows. Replaying a manifest
re-executes the run from its pinned inputs and must reproduce it byte for byte.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .brenier import PWAPotential, brenier_search, gradient_of, read_potential
from .dyadic import BinaryWord, cell_box
from .exact import as_fraction, as_vector, format_rational, parse_rational
from .martingale import Martingale, Oscillation, OscillationSpec, build_oscillating, quotient_trace
from .measure import DyadicHistogram, read_histogram
from .minty import (
    AffineMap,
    DiffReport,
    LipschitzMap,
    PiecewiseLinear1D,
    PotentialGradient,
    SeparableMap,
    SingularityReport,
    constant_map,
    diff_probe,
    flatten_map,
    identity_map,
    monotone_on,
    parabola_map,
    resolvent_map,
    scaling_map,
    singularity_probe,
    zero_map,
)
from .transport import CdfMap

__all__ = [
    "MartingaleCdf",
    "ForwardRun",
    "BackwardRun",
    "parse_map",
    "oscillation_map",
    "run_forward",
    "run_backward",
    "forward_manifest",
    "backward_manifest",
    "parse_manifest",
    "replay",
]


class MartingaleCdf:
    """Exact distribution function of the measure induced by a sparse martingale on [0, 1]."""

    def __init__(self, M: Martingale):
        self.M = M
        lo, hi = M.value_range()
        self.lipschitz = hi / M.root

    def __call__(self, x) -> Fraction:
        x = as_fraction(x)
        if x <= 0:
            return Fraction(0)
        if x >= 1:
            return Fraction(1)
        return self.M.box_mass((Fraction(0),), (x,), 1)

    def image(self, a, b) -> tuple:
        # density is positive everywhere, so the map is strictly increasing
        return self(a), self(b), True

    def solve_shifted(self, t) -> Fraction:
        """The ``x`` with ``x + F(x) = t``, found by descending the bet tree."""
        t = as_fraction(t)
        if t <= 0:
            return t
        if t >= 2:
            return t - 1
        M = self.M
        word = BinaryWord()
        a, Fa, side = Fraction(0), Fraction(0), Fraction(1)
        while len(word) < M.depth and not M.is_flat_below(word):
            half = side / 2
            left = M(word + "0") * half / M.root
            if t <= a + half + Fa + left:
                word = word + "0"
            else:
                a, Fa = a + half, Fa + left
                word = word + "1"
            side = half
        density = M(word) / M.root
        return a + (t - a - Fa) / (1 + density)


def oscillation_map(spec: OscillationSpec, n: int = 1) -> tuple[SeparableMap, Oscillation]:
    """Coordinatewise CDF map of the oscillating measure, repeated in ``n`` coordinates."""
    osc = build_oscillating(spec)
    F = MartingaleCdf(osc.martingale)
    return SeparableMap([F] * n, name="oscillation"), osc


# -- map specifications -------------------------------------------------------------

def _parse_spec_fields(body: str) -> dict:
    out = {}
    for part in body.split(","):
        key, _, value = part.partition("=")
        out[key.strip()] = value.strip()
    return out


def parse_map(spec: str) -> LipschitzMap:
    """Build a catalog map from its text form.

    Forms: ``identity[:n]``, ``zero[:n]``, ``scale:c[:n]``, ``constant:v1,v2``,
    ``flatten``, ``parabola``, ``affine:a,b;c,d[+c1,c2]``, ``cdf:FILE[:n]``
    (histogram file), ``potential:FILE``, and
    ``oscillation:p=..,q=..,k=..,target=..[,n=..,initial=..,n_osc=..]``.
    """
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    if kind in ("identity", "zero"):
        n = int(args[0]) if args else 1
        return identity_map(n) if kind == "identity" else zero_map(n)
    if kind == "scale":
        return scaling_map(parse_rational(args[0]), int(args[1]) if len(args) > 1 else 1)
    if kind == "constant":
        return constant_map(tuple(parse_rational(v) for v in args[0].split(",")))
    if kind == "flatten":
        return flatten_map()
    if kind == "parabola":
        return parabola_map()
    if kind == "affine":
        body, _, off = rest.partition("+")
        M = [[parse_rational(v) for v in row.split(",")] for row in body.split(";")]
        c = [parse_rational(v) for v in off.split(",")] if off else None
        return AffineMap(M, c)
    if kind == "cdf":
        with open(args[0]) as fh:
            h = read_histogram(fh.read())
        F = CdfMap(h)
        n = int(args[1]) if len(args) > 1 else 1
        return SeparableMap([PiecewiseLinear1D(F.breaks, F.values)] * n, name="cdf")
    if kind == "potential":
        with open(args[0]) as fh:
            return PotentialGradient(read_potential(fh.read()))
    if kind == "oscillation":
        f = _parse_spec_fields(rest)
        return oscillation_map(_spec_from_fields(f), int(f.get("n", 1)))[0]
    raise ValueError(f"unknown map spec {spec!r}")


def _spec_from_fields(f: dict) -> OscillationSpec:
    return OscillationSpec(
        parse_rational(f["p"]), parse_rational(f["q"]), int(f["k"]), f["target"],
        n=int(f.get("dim", 1)),
        initial=parse_rational(f["initial"]) if "initial" in f else None,
        n_osc=int(f.get("n_osc", 2)))


def _spec_string(spec: OscillationSpec, n: int) -> str:
    return (f"oscillation:p={format_rational(spec.p)},q={format_rational(spec.q)},k={spec.k},"
            f"target={spec.target},initial={format_rational(spec.initial)},n_osc={spec.n_osc},n={n}")


# -- runs ---------------------------------------------------------------------

@dataclass
class ForwardRun:
    """``u`` at ``z``, the point ``y = u(z) + z``, the resolvent ``g`` and the probes."""

    map_spec: str
    u: LipschitzMap
    z: tuple
    y: tuple
    g: LipschitzMap
    gy: tuple
    scales: tuple
    report_z: DiffReport
    report_y: DiffReport
    singularity: SingularityReport
    monotone_g: bool
    lipschitz_g: bool
    consistent: bool | None
    eps: Fraction
    seed: int

    @property
    def inverse_error(self) -> Fraction:
        return max(abs(a - b) for a, b in zip(self.gy, self.z))

    @property
    def verdict(self) -> str:
        return self.report_z.verdict


def _sample_pairs_ok(g, centre, h: Fraction, seed: int, count: int = 16) -> tuple[bool, bool]:
    rng = random.Random(seed)
    pts = [tuple(c + h * Fraction(rng.randrange(-64, 65), 64) for c in centre) for _ in range(count)]
    vals = {p: g(p) for p in pts}
    mono = monotone_on(lambda p: vals[p], pts)
    lip = all(sum((a - b) ** 2 for a, b in zip(vals[p], vals[q])) <= sum((a - b) ** 2 for a, b in zip(p, q))
              for i, p in enumerate(pts) for q in pts[i + 1:])
    return mono, lip


def run_forward(u: LipschitzMap, z, scales, map_spec: str = "", eps=Fraction(1, 4),
                seed: int = 0) -> ForwardRun:
    """Run the resolvent chain at ``z`` and probe both ends."""
    import numpy as np

    z = as_vector(z)
    scales = tuple(scales)
    y = tuple(a + b for a, b in zip(u(z), z))
    g = resolvent_map(u)
    gy = g(y)
    rz = diff_probe(u, z, scales)
    ry = diff_probe(g, y, scales)
    sing = singularity_probe(g, y, eps, depth_cap=min(8, max(scales)), jacobian=ry.jacobian,
                             grid_cap=32)
    mono, lip = _sample_pairs_ok(g, y, Fraction(1, 1 << min(scales)), seed)
    consistent = None
    if ry.verdict == "stable" and ry.singular_value_min() > 1e-9:
        # u + I = g^{-1}, so Du(z) = Dg(y)^{-1} - I
        pred = np.linalg.inv(ry.jacobian) - np.eye(len(z))
        consistent = bool(np.linalg.norm(pred - rz.jacobian) <= 1e-6 + 2.0 ** (-max(scales) / 2))
    return ForwardRun(map_spec, u, z, y, g, gy, scales, rz, ry, sing, mono, lip, consistent,
                      as_fraction(eps), seed)


@dataclass
class BackwardRun:
    """Oscillating martingale, its measure's transport map and the probe at the target point."""

    spec: OscillationSpec
    n: int
    oscillation: Oscillation
    transport: SeparableMap
    point: tuple
    scales: tuple
    report: DiffReport
    quotients: list
    density_range: tuple
    certificate: dict = field(default_factory=dict)

    @property
    def martingale(self) -> Martingale:
        return self.oscillation.martingale

    @property
    def map_spec(self) -> str:
        return _spec_string(self.spec, self.n)

    @property
    def verdict(self) -> str:
        return self.report.verdict


def default_scales(osc: Oscillation) -> tuple:
    """Contiguous bit levels spanning the witnesses, one level of margin each side."""
    levels = osc.s_up + osc.s_down
    lo = max(1, min(levels) - 1)
    hi = min(osc.martingale.depth - 1, max(levels) + 1)
    return tuple(range(lo, hi + 1))


def run_backward(spec: OscillationSpec, n: int = 1, scales=None, certify_depth: int = 2) -> BackwardRun:
    """Build the oscillating measure and probe its transport map at the target point.

    In one dimension the transport map to the uniform measure is the exact CDF.
    For ``n >= 2`` the map is the coordinate split ``(F, ..., F)``, which is the
    transport map of the product measure; a coarse Brenier search on the
    depth-``certify_depth`` truncation of that product records a gap certificate.
    """
    if spec.n != 1:
        raise ValueError("the oscillating measure is built in one dimension and split across coordinates")
    u, osc = oscillation_map(spec, n)
    M = osc.martingale
    lo, hi = M.value_range()
    if not (spec.lower < lo and hi < spec.upper):
        raise ValueError("martingale left the (q - 1, p + 1) band")
    scales = default_scales(osc) if scales is None else tuple(scales)
    point = spec.point * n
    report = diff_probe(u, point, scales)
    quotients = quotient_trace(M, spec.point, [Fraction(1, 1 << j) for j in scales if j >= 2], 1)
    cert = {}
    if n >= 2:
        cert = _product_certificate(M, n, certify_depth)
    return BackwardRun(spec, n, osc, u, point, scales, report, quotients, (lo / M.root, hi / M.root), cert)


def _product_certificate(M: Martingale, n: int, depth: int) -> dict:
    masses = [M.cell_mass(format(j, f"0{depth}b")) for j in range(1 << depth)]
    h1 = DyadicHistogram.from_masses(1, depth, masses)
    weights = {}
    for idx in range(1 << (n * depth)):
        w = format(idx, f"0{n * depth}b")
        m = Fraction(1)
        for c in range(n):
            m *= h1.mass(w[c::n])
        weights[w] = m
    mu = DyadicHistogram(n, depth, weights)
    res = brenier_search(mu, precision=depth + 1)
    F = CdfMap(h1)
    err = Fraction(0)
    for w in weights:
        lo, hi = cell_box(w, n)
        c = tuple((a + b) / 2 for a, b in zip(lo, hi))
        grad = gradient_of(res.potential, c)
        grads = [grad] if isinstance(grad, tuple) else list(grad.slopes)
        target = tuple(F(x) for x in c)
        err = max(err, min(max(abs(a - b) for a, b in zip(gv, target)) for gv in grads))
    return {"certify_depth": depth, "gap": res.gap, "value_hi": res.value.hi,
            "lower": res.lower, "sup_error": err, "complete": res.complete}


# -- manifests -------------------------------------------------------------------

def _vec_text(v) -> str:
    return " ".join(format_rational(x) for x in v)


def _report_rows(r: DiffReport) -> list[str]:
    rows = []
    for f in r.fits:
        drift = "nan" if f.drift is None else repr(f.drift)
        slope = " ".join(repr(float(v)) for v in f.jacobian.ravel())
        rows.append(f"{f.j} {f.residual!r} {drift} {int(f.unstable)} {slope}")
    return rows


def forward_manifest(run: ForwardRun) -> str:
    s = run.singularity
    lines = [
        "kind = forward",
        f"map = {run.map_spec}",
        f"point = {_vec_text(run.z)}",
        f"scales = {' '.join(map(str, run.scales))}",
        f"eps = {format_rational(run.eps)}",
        f"seed = {run.seed}",
        f"y = {_vec_text(run.y)}",
        f"g_of_y = {_vec_text(run.gy)}",
        f"inverse_error = {format_rational(run.inverse_error)}",
        f"verdict_z = {run.report_z.verdict}",
        f"verdict_y = {run.report_y.verdict}",
        f"unstable_z = {' '.join(map(str, run.report_z.unstable_scales()))}",
        f"unstable_y = {' '.join(map(str, run.report_y.unstable_scales()))}",
        f"singularity = {s.status}",
        f"singularity_ratio = {s.ratio!r}",
        f"monotone_g = {run.monotone_g}",
        f"lipschitz_g = {run.lipschitz_g}",
        f"consistent = {run.consistent}",
        "[table fit_z]",
        "# j residual drift unstable slope...",
        *_report_rows(run.report_z),
        "[table fit_y]",
        *_report_rows(run.report_y),
    ]
    return "\n".join(lines) + "\n"


def backward_manifest(run: BackwardRun) -> str:
    spec = run.spec
    lo, hi = run.density_range
    lines = [
        "kind = backward",
        f"p = {format_rational(spec.p)}",
        f"q = {format_rational(spec.q)}",
        f"k = {spec.k}",
        f"target = {spec.target}",
        f"initial = {format_rational(spec.initial)}",
        f"n_osc = {spec.n_osc}",
        f"n = {run.n}",
        f"scales = {' '.join(map(str, run.scales))}",
        f"certify_depth = {run.certificate.get('certify_depth', 0)}",
        f"map = {run.map_spec}",
        f"point = {_vec_text(run.point)}",
        f"depth = {run.martingale.depth}",
        f"s_up = {' '.join(map(str, run.oscillation.s_up))}",
        f"s_down = {' '.join(map(str, run.oscillation.s_down))}",
        f"density_min = {format_rational(lo)}",
        f"density_max = {format_rational(hi)}",
        f"verdict = {run.verdict}",
        f"unstable = {' '.join(map(str, run.report.unstable_scales()))}",
    ]
    for key in ("gap", "value_hi", "lower", "sup_error"):
        if key in run.certificate:
            lines.append(f"certificate_{key} = {format_rational(run.certificate[key])}")
    if run.certificate:
        lines.append(f"certificate_complete = {run.certificate['complete']}")
    lines += ["[table quotients]", "# radius quotient_lo quotient_hi"]
    lines += [f"{format_rational(r)} {format_rational(qv.lo)} {format_rational(qv.hi)}" for r, qv in run.quotients]
    lines += ["[table fit]", "# j residual drift unstable slope...", *_report_rows(run.report)]
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> tuple[dict, dict]:
    """Split a manifest into its key-value header and its tables (lists of rows)."""
    keys: dict = {}
    tables: dict = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[table ") and line.endswith("]"):
            current = line[7:-1]
            tables[current] = []
        elif current is not None:
            tables[current].append(line.split())
        else:
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"malformed manifest line {line!r}")
            keys[key.strip()] = value.strip()
    return keys, tables


def run_from_config(cfg: dict):
    """Execute a run described by manifest keys (or a config file with the same keys)."""
    kind = cfg.get("kind")
    if kind == "forward":
        u = parse_map(cfg["map"])
        z = tuple(parse_rational(v) for v in cfg["point"].split())
        scales = [int(v) for v in cfg["scales"].split()]
        run = run_forward(u, z, scales, cfg["map"], parse_rational(cfg.get("eps", "1/4")),
                          int(cfg.get("seed", 0)))
        return run, forward_manifest(run)
    if kind == "backward":
        spec = OscillationSpec(parse_rational(cfg["p"]), parse_rational(cfg["q"]), int(cfg["k"]),
                               cfg["target"],
                               initial=parse_rational(cfg["initial"]) if "initial" in cfg else None,
                               n_osc=int(cfg.get("n_osc", 2)))
        scales = [int(v) for v in cfg["scales"].split()] if cfg.get("scales") else None
        run = run_backward(spec, int(cfg.get("n", 1)), scales, int(cfg.get("certify_depth", 2)) or 2)
        return run, backward_manifest(run)
    raise ValueError(f"unknown run kind {kind!r}")


def replay(text: str) -> str:
    """Re-execute the run pinned by a manifest and return the regenerated manifest."""
    keys, _ = parse_manifest(text)
    return run_from_config(keys)[1]
