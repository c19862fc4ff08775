"""Command-line front end.

Exit codes
----------
0  Fredholm and uniquely solvable (``check``), or success for other commands
1  Fredholm but not uniquely solvable (``check``)
2  not Fredholm (``check``)
3  admissibility constraint violated (for instance 1/p < s < 1 + 1/p)
4  argument outside the mathematical domain, or malformed input
5  any other numerical failure (singular system, vanishing symbol)
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from . import __version__
from .bie_solver import GradedMesh, assemble, solve, system_condition
from .errors import (ConstraintError, DomainError, NonEllipticError, SingularSystemError,
                     WedgeError)
from .fredholm_conditions import (BvpParams, bie_fredholm, bie_forbidden_angles, bvp_fredholm,
                                  cross_validate, forbidden_angles, lift_order)
from .helmholtz_potentials import default_probes, exterior_source, solve_bvp
from .mellin_symbol import (SpaceParams, XiGrid, ellipticity_infimum, winding_index,
                            write_symbol_csv)

EXIT_UNIQUE, EXIT_FREDHOLM, EXIT_NOT_FREDHOLM = 0, 1, 2
EXIT_CONSTRAINT, EXIT_DOMAIN, EXIT_NUMERIC = 3, 4, 5
THREADS_ENV = "WEDGEBIE_THREADS"

Number = Union[float, Fraction]


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with EXIT_DOMAIN so they never look like a verdict."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_DOMAIN, f"{self.prog}: error: {message}\n")


_PI_TERM = re.compile(r"^\s*([+-]?[\d./]*)\s*\*?\s*pi\s*(?:/\s*([\d.]+))?\s*$")


def parse_number(text: str) -> Number:
    """Rationals ("3/4", "-1/2") stay exact; multiples of pi ("2pi/3") become floats."""
    s = text.strip().lower().replace("π", "pi")
    m = _PI_TERM.match(s)
    if m:
        coef = m.group(1)
        c = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(Fraction(coef))
        den = float(m.group(2)) if m.group(2) else 1.0
        return c * math.pi / den
    if re.fullmatch(r"[+-]?\d+\s*/\s*\d+", s) or re.fullmatch(r"[+-]?\d+", s):
        return Fraction(s.replace(" ", ""))
    try:
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse number {text!r}") from None


def parse_k(text: str) -> complex:
    try:
        return complex(text.strip().replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse wavenumber {text!r}") from None


def parse_range(text: str):
    """"a:b:n" -> n points from a to b inclusive; exact when a and b are rational."""
    try:
        a, b, n = text.split(":")
        a, b, n = parse_number(a), parse_number(b), int(n)
    except (ValueError, argparse.ArgumentTypeError):
        raise argparse.ArgumentTypeError(f"range must be a:b:n, got {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError("range count must be nonnegative")
    if n == 0:
        return []
    if n == 1:
        return [a]
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return [a + (b - a) * Fraction(i, n - 1) for i in range(n)]
    return [float(a) + (float(b) - float(a)) * i / (n - 1) for i in range(n)]


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _emit(records: list, fmt: str, out):
    if fmt == "json":
        for r in records:
            out.write(json.dumps({k: (str(v) if isinstance(v, Fraction) else v)
                                  for k, v in r.items()}) + "\n")
    else:
        for r in records:
            out.write(" ".join(f"{k}={_fmt(v)}" for k, v in r.items()) + "\n")


def _map(fn, items):
    threads = max(1, int(os.environ.get(THREADS_ENV, "1")))
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))  # map keeps input order


# ---------------------------------------------------------------- commands

def cmd_check(args, out) -> int:
    params = BvpParams(float(args.alpha), args.s, args.p)
    v = bvp_fredholm(params)
    rep = cross_validate(float(args.alpha), args.s, args.p, "BVP")
    rec = dict(alpha=float(args.alpha), s=args.s, p=args.p, r=lift_order(args.s, args.p),
               fredholm=v.fredholm, unique=v.unique, clause=v.triggered_clause.value,
               margin=v.margin, inf_abs_det=rep.inf_abs_det, argmin_xi=rep.argmin_xi,
               numeric=rep.numeric, cross_check=rep.status)
    _emit([rec], args.format, out)
    if not v.fredholm:
        return EXIT_NOT_FREDHOLM
    return EXIT_UNIQUE if v.unique else EXIT_FREDHOLM


SCAN_HEADER = ["alpha", "s", "r", "p", "admissible", "fredholm", "unique", "clause", "margin",
               "inf_abs_det"]


def _scan_row(alpha, s, r, p):
    blank = [alpha, "" if s is None else s, r, p, False, "", "", "", "", ""]
    if not 0.0 < float(alpha) < 2 * math.pi:
        return blank
    if s is not None:
        bp = BvpParams(float(alpha), s, p)
        if not bp.admissible:
            return blank
        v = bvp_fredholm(bp)
    else:
        v = bie_fredholm(float(alpha), r, p)
    inf = ellipticity_infimum(float(alpha), SpaceParams(float(p), float(r))).inf_abs_det
    return [alpha, s if s is not None else "", r, p, True, v.fredholm, v.unique,
            v.triggered_clause.value, v.margin, inf]


def cmd_scan(args, out) -> int:
    if (args.s_range is None) == (args.alpha_range is None):
        raise DomainError("give exactly one of --s-range or --alpha-range")
    if args.s_range is not None:
        if args.alpha is None:
            raise DomainError("--s-range needs --alpha")
        pts = [(args.alpha, s, lift_order(s, args.p), args.p) for s in args.s_range]
    else:
        if (args.s is None) == (args.r is None):
            raise DomainError("--alpha-range needs exactly one of --s or --r")
        r = lift_order(args.s, args.p) if args.s is not None else args.r
        pts = [(a, args.s, r, args.p) for a in args.alpha_range]
    rows = _map(lambda q: _scan_row(*q), pts)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SCAN_HEADER)
    for row in rows:
        w.writerow([_fmt(x) if not isinstance(x, str) else x for x in row])
    return 0


def cmd_symbol(args, out) -> int:
    grid = XiGrid(args.xi_max, args.step)
    write_symbol_csv(out, float(args.alpha), SpaceParams(float(args.p), float(args.r)), grid)
    return 0


def cmd_index(args, out) -> int:
    res = winding_index(float(args.alpha), SpaceParams(float(args.p), float(args.r)),
                        contour=args.contour)
    if args.format == "json":
        _emit([dict(index=res.index, winding=res.winding, total_phase=res.total_phase,
                    closure_error=res.closure_error)], "json", out)
    else:
        out.write(f"{res.index}\n")
    return 0


def cmd_forbidden(args, out) -> int:
    if (args.s is None) == (args.r is None):
        raise DomainError("give exactly one of --s or --r")
    fa = forbidden_angles(args.s, args.p) if args.s is not None \
        else bie_forbidden_angles(args.r, args.p)
    recs = [dict(alpha=a.alpha, alpha_over_pi=a.alpha / math.pi, clause=a.clause.value)
            for a in fa]
    if args.format == "json":
        _emit(recs, "json", out)
    else:
        if not recs:
            out.write("no forbidden angles\n")
        _emit(recs, "text", out)
    return 0


def cmd_solve_bie(args, out) -> int:
    mesh = GradedMesh(args.T, args.N, args.q, args.order)
    system = assemble(float(args.alpha), float(args.r), float(args.p), mesh)
    if args.rhs == "manufactured":
        phi_ex = mesh.sample(lambda t: t * np.exp(-t))
        psi_ex = mesh.sample(lambda t: np.exp(-0.5 * t))
        G, H = system.apply(phi_ex, psi_ex)
    else:
        G, H = (lambda t: np.exp(-t)), (lambda t: t * np.exp(-t))
    sol = solve(system, (G, H))
    rec = dict(alpha=float(args.alpha), r=float(args.r), p=float(args.p), N=args.N, T=args.T,
               cond=system_condition(system.A, mesh), residual=sol.residual,
               relative_residual=sol.relative_residual)
    if args.rhs == "manufactured":
        rec["density_error"] = float(max(np.abs(sol.phi - phi_ex).max(),
                                         np.abs(sol.psi - psi_ex).max()))
    _emit([rec], args.format, out)
    return 0


def cmd_solve_bvp(args, out) -> int:
    alpha = float(args.alpha)
    mesh = GradedMesh(args.T, args.N, args.q, args.order)
    probes = default_probes(alpha, args.probe)
    res = solve_bvp(alpha, args.k, args.extension, exterior_source(alpha, args.source_radius),
                    probes, mesh)
    if args.format == "json":
        recs = [dict(x1=float(x[0]), x2=float(x[1]), re_u=float(u.real), im_u=float(u.imag),
                     re_exact=float(e.real), im_exact=float(e.imag), rel_error=float(er))
                for x, u, e, er in zip(res.probes, res.u, res.exact, res.rel_errors)]
        recs.append(dict(max_rel_error=res.max_rel_error, residual=res.residual,
                         condition=res.condition))
        _emit(recs, "json", out)
    else:
        out.write(f"{'x1':>10} {'x2':>10} {'|u|':>14} {'rel_error':>12}\n")
        for x, u, er in zip(res.probes, res.u, res.rel_errors):
            out.write(f"{x[0]:10.5f} {x[1]:10.5f} {abs(u):14.6e} {er:12.3e}\n")
        out.write(f"max relative error: {res.max_rel_error:.3e}\n")
    return 0


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="wedgebie", description="Fredholm verdicts and boundary integral "
                 "solvers for the mixed Helmholtz problem in a wedge.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--seed", type=int, default=None, help="reserved; unused by default")
    ap.add_argument("--output", "-o", default=None, help="write to this file instead of stdout")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    N = parse_number

    def fmt(p, default="text"):
        p.add_argument("--format", choices=["text", "json"], default=default)

    p = sub.add_parser("check", help="Fredholm/unique verdict for the BVP")
    p.add_argument("--alpha", type=N, required=True)
    p.add_argument("--s", type=N, required=True)
    p.add_argument("--p", type=N, required=True)
    fmt(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("scan", help="CSV verdicts over an s-grid or an alpha-grid")
    p.add_argument("--alpha", type=N)
    p.add_argument("--s", type=N)
    p.add_argument("--r", type=N)
    p.add_argument("--p", type=N, required=True)
    p.add_argument("--s-range", type=parse_range, help="a:b:n")
    p.add_argument("--alpha-range", type=parse_range, help="a:b:n")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("symbol", help="CSV of the determinant on the real Mellin line")
    p.add_argument("--alpha", type=N, required=True)
    p.add_argument("--r", type=N, required=True)
    p.add_argument("--p", type=N, required=True)
    p.add_argument("--xi-max", type=float, default=30.0)
    p.add_argument("--step", type=float, default=1e-2)
    p.set_defaults(func=cmd_symbol)

    p = sub.add_parser("index", help="operator index (minus the winding number)")
    p.add_argument("--alpha", type=N, required=True)
    p.add_argument("--r", type=N, required=True)
    p.add_argument("--p", type=N, required=True)
    p.add_argument("--contour", choices=["full", "gamma1"], default="full")
    fmt(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("forbidden", help="angles where the system fails to be Fredholm")
    p.add_argument("--s", type=N)
    p.add_argument("--r", type=N)
    p.add_argument("--p", type=N, required=True)
    fmt(p)
    p.set_defaults(func=cmd_forbidden)

    def mesh_args(p, N_=256, order=16):
        p.add_argument("--T", type=float, default=40.0)
        p.add_argument("--N", type=int, default=N_)
        p.add_argument("--q", type=float, default=3.0)
        p.add_argument("--order", type=int, default=order)

    p = sub.add_parser("solve-bie", help="solve the reduced 2x2 Mellin system")
    p.add_argument("--alpha", type=N, required=True)
    p.add_argument("--r", type=N, required=True)
    p.add_argument("--p", type=N, required=True)
    p.add_argument("--rhs", choices=["smooth", "manufactured"], default="manufactured")
    mesh_args(p, 64)
    fmt(p)
    p.set_defaults(func=cmd_solve_bie)

    p = sub.add_parser("solve-bvp", help="manufactured point-source BVP solve")
    p.add_argument("--alpha", type=N, required=True)
    p.add_argument("--k", type=parse_k, default=1 + 1j)
    p.add_argument("--probe", type=int, default=20)
    p.add_argument("--extension", choices=["zero", "smooth"], default="zero")
    p.add_argument("--source-radius", type=float, default=1.5)
    mesh_args(p, 32, 8)
    fmt(p)
    p.set_defaults(func=cmd_solve_bvp)
    return ap


_NEG_VALUE = re.compile(r"^-(\d|\.\d|pi|π)")


def _join_negative_values(argv: Sequence[str]) -> list:
    """Turn ``--r -1/2`` into ``--r=-1/2``; argparse would read "-1/2" as an option."""
    out = []
    for tok in argv:
        if out and _NEG_VALUE.match(tok) and out[-1].startswith("--") and "=" not in out[-1]:
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(_join_negative_values(sys.argv[1:] if argv is None else argv))
    try:
        if args.output:
            with open(args.output, "w", newline="") as fh:
                return args.func(args, fh)
        return args.func(args, sys.stdout)
    except ConstraintError as exc:
        print(f"constraint violated: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (SingularSystemError, NonEllipticError, WedgeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
