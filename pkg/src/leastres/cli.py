"""Command-line front end: toy, stretch, solve, verify, radial, export-obj.

Exit codes: 0 success, 2 precondition or validity failure, 3 I/O or
schema failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateInputError,
    FitError,
    PreconditionError,
    ResolutionError,
    ValidityError,
)
from . import serialize
from .geometry import Domain, GridFn, epigraph_body
from .pressure import PressureModel, eval_F, pressure_by_name
from .solver import SolveConfig, VerifyTolerances, solve_2d, solve_radial_1d, verify_solution
from .stretch import analytic_coeffs, fit_quadratic, prepare_site, profile_w, sweep_resistance
from .toy import ConvexFn1D, ToyFamily, f1_by_name, resistance_1d, toy_family_at, toy_slope_identity

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3


def _parse_pressure(spec: str) -> PressureModel:
    name, _, rest = spec.partition(":")
    if name == "affine_plus":
        a1, a2, b = (float(x) for x in rest.split(","))
        return pressure_by_name(name, a=(a1, a2), b=b)
    if name == "flat_disk":
        return pressure_by_name(name, r=float(rest))
    return pressure_by_name(name)


def _write(path, text):
    Path(path).write_text(text)


def _read(path) -> str:
    return Path(path).read_text()


def _load_mesh(path) -> GridFn:
    return serialize.gridfn_from_json(_read(path))


def _toy_profile(spec: str, a: float, b: float, n: int) -> ConvexFn1D:
    if spec == "x^2":
        return ConvexFn1D.from_callable(lambda x: x ** 2, a, b, n)
    if spec == "abs":
        return ConvexFn1D.from_callable(np.abs, a, b, n)
    if spec.startswith("json:"):
        obj = json.loads(_read(spec[5:]))
        return ConvexFn1D(obj["xs"], obj["vals"])
    raise ValidityError(f"unknown 1d profile {spec!r}")


def cmd_toy(args) -> int:
    u = _toy_profile(args.u, args.range[0], args.range[1], args.breaks)
    f1 = f1_by_name(args.f1)
    fam = ToyFamily(u, tuple(args.o))
    svals = np.linspace(0.0, 1.0, args.n) if args.n > 1 else np.array([0.0])
    Fs = np.array([resistance_1d(toy_family_at(fam, s), f1) for s in svals])
    chord = Fs[0] + (Fs[-1] - Fs[0]) * svals if args.n > 1 else Fs.copy()
    resid = Fs - chord
    rows = list(zip(svals, Fs, chord, resid))
    if args.out_csv:
        _write(args.out_csv, serialize.toy_sweep_to_csv(rows))
    summary = None
    if args.n > 1:
        slopes = toy_slope_identity(fam, f1)
        summary = {
            "numeric_slope": slopes.numeric,
            "analytic_slope": slopes.analytic,
            "left_slope": slopes.left,
            "right_slope": slopes.right,
            "max_residual": float(np.abs(resid).max()),
            "tangency": list(fam.tangency_abscissas),
        }
        serialize.assert_finite(summary)
        if args.out_json:
            _write(args.out_json, serialize.dumps(summary))
    if not args.out_csv and not args.out_json:
        print(serialize.dumps(summary if summary else {"F": float(Fs[0])}), end="")
    return EXIT_OK


def cmd_stretch(args) -> int:
    u = _load_mesh(args.mesh)
    f = _parse_pressure(args.f)
    site = prepare_site(u, f, tuple(args.x_check), args.eps,
                        z0=args.z0, delta=args.delta)
    prof = profile_w(u, site)
    coeffs = analytic_coeffs(u, site, f, prof)
    svals = np.linspace(0.0, 1.0, args.samples)
    samples = sweep_resistance(u, site, f, svals, threads=args.threads)
    fit = fit_quadratic(samples)
    report = {
        "site": {
            "x_check": list(map(float, site.x_check)),
            "x0": list(map(float, site.x0)),
            "z0": site.z0,
            "delta": site.delta,
            "shear_b": site.shear_b,
            "eps": site.eps,
            "window": list(site.window),
            "s_min": site.s_min,
            "xi": [prof.xi_minus, prof.xi_plus],
            "x1": [prof.x1_minus, prof.x1_plus],
        },
        "coeffs_analytic": {k: getattr(coeffs, k) for k in
                            ("a0", "a1", "a2", "a3", "a4", "b2", "b3", "b4")}
                           | {"c0": coeffs.c0, "c1": coeffs.c1},
        "coeffs_fit": {"p0": fit.p0, "p1": fit.p1, "p2": fit.p2,
                       "a3_minus_a4": fit.a3_minus_a4,
                       "a3_given_analytic_a4": fit.a3_given_a4(coeffs.a4)},
        "samples": [[s, F] for s, F in samples],
        "derivative_at_0": coeffs.derivative_at_0,
        "residuals": {"max": fit.residual_max, "rms": fit.residual_rms},
        "warnings": list(coeffs.warnings),
    }
    serialize.assert_finite(report)
    text = serialize.dumps(report)
    if args.out:
        _write(args.out, text)
    else:
        print(text, end="")
    return EXIT_OK


def _domain_from_args(args) -> Domain:
    h = None
    if args.domain == "disk":
        h = 2 * args.R / args.grid
        return Domain.disk(tuple(args.center), args.R, h)
    if args.domain == "square":
        h = (args.hi - args.lo) / args.grid
        return Domain.square(args.lo, args.hi, h)
    if args.domain == "polygon":
        verts = np.asarray(json.loads(_read(args.vertices_json)), dtype=float)
        span = max(verts[:, 0].ptp(), verts[:, 1].ptp())
        return Domain.polygon(verts, span / args.grid)
    raise ValidityError(f"unknown domain {args.domain!r}")


def cmd_solve(args) -> int:
    dom = _domain_from_args(args)
    f = _parse_pressure(args.f)
    config = SolveConfig(budget=args.budget, seed=args.seed, grid=args.grid,
                         stretch_cadence=args.stretch_cadence, init=args.init)
    res = solve_2d(dom, args.M, f, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "solution.json", serialize.gridfn_to_json(res.u))
    _write(out / "trace.csv", serialize.trace_to_csv(res.trace))
    report = verify_solution(res.u, f, _tolerances_from(args, res.u.domain))
    _write(out / "report.json", serialize.dumps(report.to_dict()))
    _write(out / "config.json", serialize.dumps({
        "domain": serialize.domain_to_dict(dom), "M": args.M, "f": args.f,
        "grid": args.grid, "budget": args.budget, "seed": args.seed,
        "stretch_cadence": args.stretch_cadence, "init": args.init,
    }))
    if args.obj:
        _write(out / "solution.obj", serialize.gridfn_to_obj(res.u))
    summary = {"resistance": res.resistance, "accepted": res.accepted,
               "trials": res.trials, "stretch_events": len(res.stretch_events)}
    serialize.assert_finite(summary)
    print(serialize.dumps(summary), end="")
    return EXIT_OK


def _tolerances_from(args, domain=None) -> VerifyTolerances:
    kw = {}
    if getattr(args, "tol_angle", None) is not None:
        kw["angle_tol"] = args.tol_angle
    return VerifyTolerances(**kw)


def cmd_verify(args) -> int:
    u = _load_mesh(args.mesh)
    f = _parse_pressure(args.f)
    report = verify_solution(u, f, _tolerances_from(args, u.domain))
    d = report.to_dict()
    d["all_passed"] = report.all_passed
    text = serialize.dumps(d)
    if args.out:
        _write(args.out, text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_radial(args) -> int:
    f = _parse_pressure(args.f)
    sol = solve_radial_1d(args.L, args.M, f, n=args.n)
    if args.out_csv:
        _write(args.out_csv, serialize.radial_to_csv(sol))
    summary = {"resistance": sol.resistance, "flat_radius": sol.flat_radius,
               "L": sol.length, "M": sol.height, "n": args.n}
    serialize.assert_finite(summary)
    if args.out_json:
        _write(args.out_json, serialize.dumps(summary))
    else:
        print(serialize.dumps(summary), end="")
    return EXIT_OK


def cmd_export_obj(args) -> int:
    if args.mesh:
        u = _load_mesh(args.mesh)
        if args.body_surface:
            text = serialize.body_to_obj(epigraph_body(u))
        else:
            text = serialize.gridfn_to_obj(u)
    else:
        text = serialize.body_to_obj(serialize.body_from_json(_read(args.body)))
    _write(args.out, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leastres",
        description="Least-resistance convex shapes: families, laws, and solvers.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--tol-angle", type=float, default=None)
    parser.add_argument("--tol-hessian", type=float, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_globals(p):
        # accepted after the subcommand too; SUPPRESS keeps root defaults
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        p.add_argument("--tol-angle", type=float, default=argparse.SUPPRESS)
        p.add_argument("--tol-hessian", type=float, default=argparse.SUPPRESS)

    p = sub.add_parser("toy", help="1d variation family sweep")
    p.add_argument("--u", required=True, help="x^2 | abs | json:PATH")
    p.add_argument("--range", type=float, nargs=2, default=(-1.0, 1.0))
    p.add_argument("--o", type=float, nargs=2, required=True, help="nose point")
    p.add_argument("--f1", default="newton1d")
    p.add_argument("--n", type=int, default=11)
    p.add_argument("--breaks", type=int, default=2001)
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    add_globals(p)
    p.set_defaults(fn=cmd_toy)

    p = sub.add_parser("stretch", help="nose-stretch family report on a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--f", default="newton")
    p.add_argument("--x-check", type=float, nargs=2, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--z0", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--samples", type=int, default=11)
    p.add_argument("--out")
    add_globals(p)
    p.set_defaults(fn=cmd_stretch)

    p = sub.add_parser("solve", help="2d resistance minimization")
    p.add_argument("--domain", choices=("disk", "square", "polygon"), default="disk")
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--center", type=float, nargs=2, default=(0.0, 0.0))
    p.add_argument("--lo", type=float, default=-1.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--vertices-json")
    p.add_argument("--M", type=float, default=1.0)
    p.add_argument("--f", default="newton")
    p.add_argument("--grid", type=int, default=96)
    p.add_argument("--budget", type=int, default=200_000)
    p.add_argument("--stretch-cadence", type=int, default=25_000)
    p.add_argument("--init", default="auto")
    p.add_argument("--obj", action="store_true")
    p.add_argument("--out-dir", required=True)
    add_globals(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("verify", help="structural checks on a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--f", default="newton")
    p.add_argument("--out")
    add_globals(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("radial", help="rotationally symmetric baseline")
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--M", type=float, default=1.0)
    p.add_argument("--f", default="newton")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    add_globals(p)
    p.set_defaults(fn=cmd_radial)

    p = sub.add_parser("export-obj", help="OBJ surface from a mesh or body")
    p.add_argument("--mesh")
    p.add_argument("--body")
    p.add_argument("--body-surface", action="store_true",
                   help="export the full solid body instead of the graph")
    p.add_argument("--out", required=True)
    add_globals(p)
    p.set_defaults(fn=cmd_export_obj)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (PreconditionError, ValidityError, DegenerateInputError,
            ResolutionError, FitError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError, KeyError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
