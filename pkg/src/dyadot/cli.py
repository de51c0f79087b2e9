"""Command-line entry point: ``dyadot <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 bad input file, 3 infeasible
instance, 4 search budget exceeded.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from dataclasses import dataclass, fields
from fractions import Fraction

from .brenier import (BudgetExceeded, SubdifferentialCell, brenier_search, gradient_of,
                      write_potential)
from .dyadic import estimate_k_constant
from .exact import Interval, format_rational, parse_rational, parse_vector
from .martingale import InfeasibleSpec, OscillationSpec, build_oscillating, write_martingale
from .measure import histogram_to_discrete, read_discrete, read_histogram
from .minty import NoBracket, NotMonotone, diff_probe, resolvent
from .mltest import ModulusTooCoarse, critical_test_build, write_mltest
from .pipeline import parse_manifest, parse_map, run_from_config
from .transport import solve_ot, wasserstein

EXIT_USAGE, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_BUDGET = 1, 2, 3, 4


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


@dataclass
class Config:
    """Run-wide settings; loadable from a ``key = value`` file."""

    tol: Fraction = Fraction(1, 10 ** 6)
    pivot: str = "dantzig"
    budget: int | None = None
    outdir: str = "."
    seed: int = 0

    def __post_init__(self):
        self.tol = parse_rational(str(self.tol))
        if self.tol <= 0:
            raise InputError("tolerances must be positive")
        if self.pivot not in ("dantzig", "bland"):
            raise InputError(f"unknown pivot rule {self.pivot!r}")

    @classmethod
    def load(cls, path: str) -> "Config":
        keys = {f.name for f in fields(cls)}
        values = {}
        for key, value in _read_keys(path).items():
            if key not in keys:
                raise InputError(f"unknown config key {key!r}")
            values[key] = int(value) if key in ("budget", "seed") else value
        return cls(**values)


def _read_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(str(exc)) from exc


def _read_keys(path: str) -> dict:
    out = {}
    for raw in _read_text(path).splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"expected key = value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


def _read_measure(path: str):
    """Discrete-measure file, or a histogram file (atoms at cell centres)."""
    text = _read_text(path)
    try:
        if "depth" in text.split("\n", 3)[1]:
            return histogram_to_discrete(read_histogram(text))
        return read_discrete(text)
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _fmt(x, decimal: bool) -> str:
    if isinstance(x, Interval):
        if x.is_exact:
            return _fmt(x.lo, decimal)
        return f"[{_fmt(x.lo, decimal)}, {_fmt(x.hi, decimal)}]"
    x = Fraction(x)
    return f"{float(x):.12g}" if decimal else format_rational(x)


def _vec(text: str) -> tuple:
    try:
        return parse_vector(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _scales(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",")]


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands ---------------------------------------------------------------------

def cmd_wasserstein(a, cfg: Config) -> int:
    mu, nu = _read_measure(a.mu), _read_measure(a.nu)
    if mu.n != nu.n:
        raise InputError("measures live in different dimensions")
    tol = parse_rational(a.tol) if a.tol else Fraction(1, 1 << 40)
    res = solve_ot(mu, nu, a.p, pricing=cfg.pivot)
    cost = res.cost if res.cost is not None else res.bounds
    w = wasserstein(mu, nu, a.p, tol)
    print(_fmt(cost, a.decimal))
    # W_p only adds information when it differs from the cost itself
    if not (w.is_exact and res.cost is not None and w.lo == res.cost):
        print(f"W_{a.p} {_fmt(w, a.decimal)}")
    if a.coupling:
        for i, j in res.coupling.support():
            print(i, j, _fmt(res.coupling.matrix[i][j], a.decimal))
    if a.certificate:
        for i, u in enumerate(res.u):
            print("u", i, _fmt(u, a.decimal))
        for j, v in enumerate(res.v):
            print("v", j, _fmt(v, a.decimal))
        print(f"dual {_fmt(res.dual_value, a.decimal)} verified {res.verify()}")
    return 0


def _gradient_rows(phi, depth: int):
    side = 1 << depth
    rows = []
    for idx in itertools.product(range(side), repeat=phi.n):
        x = tuple(Fraction(2 * i + 1, 2 * side) for i in idx)
        g = gradient_of(phi, x)
        if isinstance(g, SubdifferentialCell):
            g = g.centroid()
        rows.append((x, tuple(g)))
    return rows


def cmd_brenier(a, cfg: Config) -> int:
    try:
        mu = read_histogram(_read_text(a.mu))
    except ValueError as exc:
        raise InputError(f"{a.mu}: {exc}") from exc
    gap_tol = parse_rational(a.gap_tol) if a.gap_tol else None
    res = brenier_search(mu, precision=a.precision, budget=a.budget or cfg.budget, gap_tol=gap_tol)
    if a.plot:
        if mu.n > 2:
            raise UsageError("--plot supports n = 1, 2")
        if a.out:
            _emit(write_potential(res.potential), a.out)
        for x, g in _gradient_rows(res.potential, a.emit_map or 6):
            print(" ".join(f"{float(v):.12g}" for v in (*x, *g)))
    else:
        _emit(write_potential(res.potential), a.out)
        if a.emit_map is not None:
            print(f"gradient {a.emit_map}")
            for x, g in _gradient_rows(res.potential, a.emit_map):
                print(" ".join(_fmt(v, a.decimal) for v in (*x, *g)))
    print(f"value {_fmt(res.value, a.decimal)}", file=sys.stderr)
    print(f"lower {_fmt(res.lower, a.decimal)}", file=sys.stderr)
    print(f"gap {_fmt(res.gap, a.decimal)}", file=sys.stderr)
    print(f"complete {res.complete}", file=sys.stderr)
    return 0


def cmd_resolvent(a, cfg: Config) -> int:
    u = parse_map(a.map)
    tol = parse_rational(a.tol) if a.tol else cfg.tol
    r = resolvent(u, _vec(a.point), tol)
    print(" ".join(_fmt(v, a.decimal) for v in r.x))
    print(f"residual {_fmt(r.residual, a.decimal)} method {r.method}", file=sys.stderr)
    return 0


def cmd_diff_probe(a, cfg: Config) -> int:
    u = parse_map(a.map)
    rep = diff_probe(u, _vec(a.point), _scales(a.scales))
    if a.plot:
        for row in rep.table():
            print(" ".join("nan" if v is None else repr(v) for v in row[:3]))
    else:
        print(f"verdict {rep.verdict}")
        print(f"unstable {' '.join(map(str, rep.unstable_scales()))}")
        for row in rep.table():
            print(" ".join("nan" if v is None else repr(v) for v in row))
    return 0


def cmd_mltest(a, cfg: Config) -> int:
    u = parse_map(a.map)
    t = critical_test_build(u, a.levels, a.depth, n=u.n)
    if not t.verify():
        print("internal check failed", file=sys.stderr)
        return EXIT_INFEASIBLE
    _emit(write_mltest(t), a.out)
    return 0


def cmd_build_martingale(a, cfg: Config) -> int:
    target = a.target
    depth = a.depth or len(target)
    if not target or set(target) - {"0", "1"}:
        raise UsageError("target must be a nonempty binary word")
    target = (target * (depth // len(target) + 1))[:depth]
    spec = OscillationSpec(parse_rational(a.p), parse_rational(a.q), a.k, target, n=a.dim,
                           initial=parse_rational(a.initial) if a.initial else None, n_osc=a.n_osc)
    osc = build_oscillating(spec)
    osc.martingale.check_fairness_sparse()
    _emit(write_martingale(osc.martingale), a.out)
    print(f"s_up {' '.join(map(str, osc.s_up))}", file=sys.stderr)
    print(f"s_down {' '.join(map(str, osc.s_down))}", file=sys.stderr)
    return 0


def cmd_pipeline(a, cfg: Config) -> int:
    try:
        keys, _ = parse_manifest(_read_text(a.config))
    except ValueError as exc:
        raise InputError(f"{a.config}: {exc}") from exc
    keys.setdefault("kind", a.direction)
    if keys["kind"] != a.direction:
        raise InputError(f"config describes a {keys['kind']} run")
    try:
        _, text = run_from_config(keys)
    except KeyError as exc:
        raise InputError(f"missing config key {exc}") from exc
    _emit(text, a.out)
    return 0


def cmd_estimate_k(a, cfg: Config) -> int:
    est = estimate_k_constant(a.dim, a.trials, a.seed if a.seed is not None else cfg.seed)
    print(f"k_hat {est.k_hat}")
    for gap, count in sorted(est.gap_counts.items()):
        print(gap, count)
    return 0


# -- parser -------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dyadot", description="Exact dyadic optimal transport and monotone-map tools.")
    p.add_argument("--config-file", help="key = value file with tol, pivot, budget, outdir, seed")
    p.add_argument("--decimal", action="store_true", help="render numbers as decimals")
    p.add_argument("--threads", type=int, default=1, help="accepted for compatibility; runs are single-threaded")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("wasserstein", help="certified W_p between two measure files")
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("-p", type=int, default=1)
    s.add_argument("--tol")
    s.add_argument("--coupling", action="store_true", help="also print the optimal coupling")
    s.add_argument("--certificate", action="store_true", help="also print the dual potentials")
    s.set_defaults(func=cmd_wasserstein)

    s = sub.add_parser("brenier-solve", help="search a Brenier potential for a histogram")
    s.add_argument("--mu", required=True)
    s.add_argument("-i", "--precision", type=int, default=4)
    s.add_argument("--budget", type=int)
    s.add_argument("--gap-tol")
    s.add_argument("--emit-map", type=int, metavar="DEPTH", help="gradient table at cell centres")
    s.add_argument("--plot", action="store_true", help="float table of x and the gradient")
    s.add_argument("--out")
    s.set_defaults(func=cmd_brenier)

    s = sub.add_parser("resolvent", help="solve u(x) + x = y")
    s.add_argument("--map", required=True)
    s.add_argument("--point", required=True)
    s.add_argument("--tol")
    s.set_defaults(func=cmd_resolvent)

    s = sub.add_parser("diff-probe", help="finite-scale derivative fits")
    s.add_argument("--map", required=True)
    s.add_argument("--point", required=True)
    s.add_argument("--scales", required=True, help="j1..j2 or a comma list")
    s.add_argument("--plot", action="store_true", help="emit j, residual, drift columns")
    s.set_defaults(func=cmd_diff_probe)

    s = sub.add_parser("mltest", help="bounded test from the image measure")
    s.add_argument("--map", required=True)
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--levels", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_mltest)

    s = sub.add_parser("build-martingale", help="oscillating martingale along a target word")
    s.add_argument("--p", required=True)
    s.add_argument("--q", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--depth", type=int)
    s.add_argument("--initial")
    s.add_argument("--n-osc", type=int, default=2)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_build_martingale)

    s = sub.add_parser("pipeline", help="forward or backward run from a config file")
    s.add_argument("direction", choices=["forward", "backward"])
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("estimate-k", help="Monte-Carlo estimate of the sandwich level gap")
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_estimate_k)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if not a.command:
            raise UsageError("a command is required")
        cfg = Config.load(a.config_file) if a.config_file else Config()
        return a.func(a, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except InfeasibleSpec as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NoBracket, NotMonotone, ModulusTooCoarse) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InputError, ValueError, KeyError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
