"""Command line front end: sweep, solve, certify.

Exit status: 0 on success, 1 on validation/usage errors, 2 on solver
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .certificates import certify_continuous_norm, certify_discrete, make_certificate_params
from .harness import (RunSpec, build_problem, load_solution, parse_config,
                      run_sweep, save_solution, write_csv)
from .solvers import SolverError, multistart_probe, solve_kkt


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_instance_flags(parser, multiple_alphas: bool):
    parser.add_argument("--phi", choices=["power"], default="power")
    parser.add_argument("--phi-a", type=float, default=1.0)
    parser.add_argument("--phi-p", type=float, default=3.0)
    parser.add_argument("--scenario", choices=["A1", "A2", "custom"])
    parser.add_argument("--y0-constant", type=float, default=None)
    parser.add_argument("--case", type=int, choices=[1, 2, 3])
    if multiple_alphas:
        parser.add_argument("--alphas", type=str, help="comma-separated positive values")
    else:
        parser.add_argument("--alpha", type=float)
    parser.add_argument("--n", type=int, default=32)
    parser.add_argument("--control-bound", type=float, default=5.0)
    parser.add_argument("--state-bound", type=float, default=1.0)
    parser.add_argument("--gn-constant-override", type=float, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="certopt",
                     description="Solve and certify semilinear elliptic control problems")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sweep = sub.add_parser("sweep", help="run an alpha sweep and write a CSV")
    sweep.add_argument("--config", type=str, default=None, help="JSON run description")
    _add_instance_flags(sweep, multiple_alphas=True)
    sweep.add_argument("--q", type=float)
    sweep.add_argument("--norm", choices=["lumped", "exact", "both"], default="both")
    sweep.add_argument("--out", type=str, default=None)
    sweep.add_argument("--no-warm-start", action="store_true")
    sweep.add_argument("--multistart", type=int, default=None, metavar="K")
    sweep.add_argument("--radius", type=float, default=5.0)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.set_defaults(func=_cmd_sweep)

    solve = sub.add_parser("solve", help="solve one instance and persist it")
    _add_instance_flags(solve, multiple_alphas=False)
    solve.add_argument("--out", type=str, required=True)
    solve.set_defaults(func=_cmd_solve)

    certify = sub.add_parser("certify", help="recompute certificates for a stored solution")
    certify.add_argument("--solution", type=str, required=True)
    certify.add_argument("--q", type=float, required=True)
    certify.add_argument("--norm", choices=["lumped", "exact", "both"], default="both")
    certify.add_argument("--gn-constant-override", type=float, default=None)
    certify.set_defaults(func=_cmd_certify)
    return parser


def _runspec_from_flags(args) -> RunSpec:
    for name in ("scenario", "case", "alphas", "q"):
        if getattr(args, name) is None:
            raise ValueError(f"{name}: required (flag --{name.replace('_', '-')})")
    try:
        alphas = tuple(float(part) for part in args.alphas.split(",") if part != "")
    except ValueError as err:
        raise ValueError(f"alphas: malformed number ({err})") from err
    if not alphas or any(not a > 0 for a in alphas):
        raise ValueError("alphas: all values must be strictly positive")
    from .harness import _validate_runspec
    raw = dict(phi=args.phi, phi_a=args.phi_a, phi_p=args.phi_p,
               scenario=args.scenario, case=args.case, alphas=list(alphas),
               q=args.q, n=args.n, norm_mode=args.norm, out=args.out,
               warm_start=not args.no_warm_start,
               control_bound=args.control_bound, state_bound=args.state_bound)
    if args.y0_constant is not None:
        raw["y0_constant"] = args.y0_constant
    if args.gn_constant_override is not None:
        raw["gn_constant_override"] = args.gn_constant_override
    if args.multistart is not None:
        raw.update(multistart_k=args.multistart, multistart_radius=args.radius,
                   multistart_seed=args.seed)
    return _validate_runspec(raw)


def _cmd_sweep(args) -> int:
    if args.config is not None:
        run = parse_config(args.config)
        if args.out is not None:
            run = dataclasses.replace(run, out=args.out)
    else:
        run = _runspec_from_flags(args)
    if run.out is None:
        raise ValueError("out: an output CSV path is required (flag --out or key 'out')")

    rows = run_sweep(run)
    write_csv(rows, run.out)
    for row in rows:
        print(f"alpha={row.alpha:.3e} converged={str(row.converged).lower()} "
              f"certified_discrete={_tri(row.certified_discrete)} "
              f"certified_continuous={_tri(row.certified_continuous)}")
    print(f"wrote {len(rows)} rows to {run.out}")

    if run.multistart_k is not None:
        for alpha in run.alphas:
            spec = build_problem(run, alpha)
            probes = multistart_probe(spec, run.multistart_k, run.multistart_radius,
                                      run.multistart_seed)
            values = [r.objective for r in probes if r.converged]
            spread = (max(values) - min(values)) if values else float("nan")
            print(f"multistart alpha={alpha:.3e}: converged {len(values)}/{len(probes)} "
                  f"objective spread {spread:.3e}")
    return 0


def _tri(value) -> str:
    return "-" if value is None else str(bool(value)).lower()


def _cmd_solve(args) -> int:
    if args.alpha is None:
        raise ValueError("alpha: required (flag --alpha)")
    from .harness import _validate_runspec
    raw = dict(phi=args.phi, phi_a=args.phi_a, phi_p=args.phi_p,
               scenario=args.scenario, case=args.case, alphas=[args.alpha],
               q=2.0, n=args.n, norm_mode="lumped",
               control_bound=args.control_bound, state_bound=args.state_bound)
    if args.y0_constant is not None:
        raw["y0_constant"] = args.y0_constant
    for name in ("scenario", "case"):
        if getattr(args, name) is None:
            raise ValueError(f"{name}: required (flag --{name})")
    run = _validate_runspec(raw)
    spec = build_problem(run, args.alpha)
    sol = solve_kkt(spec)
    save_solution(args.out, run, args.alpha, sol)
    res = sol.diagnostics.residuals
    print(f"solved alpha={args.alpha:.3e} in {sol.diagnostics.iterations} iterations, "
          f"residual sup-norm {res.sup:.3e}; wrote {args.out}")
    return 0


def _cmd_certify(args) -> int:
    run, alpha, spec, sol = load_solution(args.solution)
    params = make_certificate_params(spec.nonlinearity, q=args.q, alpha=alpha, d=2,
                                     gn_override=args.gn_constant_override)
    reports = []
    if args.norm in ("lumped", "both"):
        reports.append(certify_discrete(sol, params))
    if args.norm in ("exact", "both"):
        reports.append(certify_continuous_norm(sol, params))
    for report in reports:
        print(f"{report.method:>10}: norm={report.norm_value:.12e} "
              f"threshold={report.threshold:.12e} margin={report.margin:.3e} "
              f"{report.verdict}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as err:
        print(err, file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"certopt: error: {err}", file=sys.stderr)
        return 1
    except SolverError as err:
        print(f"certopt: solver failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
