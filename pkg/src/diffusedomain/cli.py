"""Batch front-end: convergence sweeps, constant validation, error splits
and one-off solves, driven by flags or a key=value config file.

Exit codes: 0 success, 2 usage error (unknown case/scheme, bad flags),
3 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .grid import ScalarField, save_field
from .schemes import SchemeKind
from .solvers import MgConfig

USAGE_ERROR = 2
SOLVER_ERROR = 3

_H_RULES = {
    "eps/4": lambda eps: eps / 4.0,
    "eps/6.4": lambda eps: eps / 6.4,
    "eps/16": lambda eps: eps / 16.0,
    "eps/128": lambda eps: eps / 128.0,
    "eps^1.5/4": lambda eps: eps ** 1.5 / 4.0,
}


def _parse_h_rule(text: str):
    if text in _H_RULES:
        return _H_RULES[text]
    if text.startswith("eps/"):
        c = float(text[4:])
        return lambda eps: eps / c
    raise ValueError(f"unknown h rule {text!r}")


def _scheme_or_exit(parser, name: str) -> SchemeKind:
    try:
        return SchemeKind.parse(name)
    except ValueError:
        parser.error(f"unknown scheme {name!r}")


def _case_or_exit(parser, case_id: str):
    cases = harness.builtin_cases()
    if case_id not in cases:
        parser.error(f"unknown case {case_id!r}; known: {', '.join(sorted(cases))}")
    return cases[case_id]


def _load_config(path: str) -> dict:
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    out = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            out[key.replace("-", "_")] = val
    return out


def _write_effective_config(outdir: Path, command: str, options: dict) -> None:
    cp = configparser.ConfigParser()
    cp["run"] = {"command": command}
    cp["options"] = {k: str(v) for k, v in sorted(options.items())
                     if v is not None}
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "effective-config.ini", "w") as fh:
        cp.write(fh)


def _sweep_worker(args):
    case_id, scheme_name, eps, h = args
    case = harness.builtin_cases()[case_id]
    scheme = SchemeKind.parse(scheme_name)
    if case.time_dependent:
        u, geom, report = harness.march_parabolic(case, scheme, eps, h)
        t = case.t_end
    else:
        u, geom, report = harness.solve_elliptic_once(case, scheme, eps, h)
        t = 0.0
    e2, einf = harness.relative_errors(u, case, geom, t=t)
    return eps, e2, einf, report


def _run_converge(case, scheme, eps_schedule, h_rule, workers: int):
    jobs = [(case.id, harness.scheme_name(scheme), eps,
             h_rule(eps) if h_rule else None) for eps in eps_schedule]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    table = harness.ConvergenceTable(case.id, harness.scheme_name(scheme),
                                     "cli")
    for eps, e2, einf, report in results:
        table.add(eps, e2, einf, report)
    return table


def _add_common(p):
    p.add_argument("--case", required=True)
    p.add_argument("--scheme", required=True)
    p.add_argument("--eps", type=float, nargs="+", default=None,
                   help="interface widths (default: the case schedule)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--dry-run", action="store_true",
                   help="validate the configuration without computing")
    p.add_argument("--correction-support", choices=["inside", "band"],
                   default=None)
    p.add_argument("--mg-tolerance", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddm",
        description="Diffuse-domain solver batch front-end")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("converge", help="eps sweep, print convergence CSV")
    _add_common(p)
    p.add_argument("--h-rule", default=None,
                   help="h as a function of eps, e.g. eps/4 or eps^1.5/4")
    p.add_argument("--with-reports", action="store_true",
                   help="append solver iteration columns")

    p = sub.add_parser("constants", help="asymptotic constant validation")
    _add_common(p)

    p = sub.add_parser("split", help="truncation/analytic error split")
    _add_common(p)
    p.add_argument("--h-ladder", type=float, nargs="+", default=None,
                   help="explicit grid sizes (default eps/4, eps/8, eps/16)")

    p = sub.add_parser("solve", help="single solve with field dumps")
    _add_common(p)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--omega", type=float, nargs=2, default=None,
                   help="override box bounds (same on every axis)")
    p.add_argument("--h-over-eps", type=float, default=None,
                   help="override h = eps / value")

    p = sub.add_parser("levelset-demo",
                       help="advect the star interface and dump distance fields")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--out", default="out")
    p.add_argument("--config", default=None)
    p.add_argument("--dry-run", action="store_true")
    return parser


def _apply_config_file(parser, argv):
    """Config-file values become defaults; explicit flags win."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    cfg = _load_config(argv[i + 1])
    command = argv[0]
    extra = []
    for key, val in cfg.items():
        if key == "command":
            continue
        flag = "--" + key.replace("_", "-")
        if flag not in argv:
            extra.append(flag)
            extra.extend(str(val).split())
    return argv + extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if argv and not argv[0].startswith("-"):
        argv = _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    outdir = Path(getattr(args, "out", "out"))
    workers = max(1, int(os.environ.get("DDM_THREADS", "1")))

    try:
        if args.command == "levelset-demo":
            return _cmd_levelset_demo(args, outdir)

        case = _case_or_exit(parser, args.case)
        scheme = _scheme_or_exit(parser, args.scheme)
        if args.correction_support:
            scheme = replace(scheme, correction_support=args.correction_support)
        eps_schedule = tuple(args.eps) if args.eps else case.eps_schedule
        for eps in eps_schedule:
            case.problem(eps).validate()

        options = {k: v for k, v in vars(args).items()
                   if k not in ("command", "config")}
        _write_effective_config(outdir, args.command, options)
        if args.dry_run:
            print("dry-run: configuration valid")
            return 0

        if args.command == "converge":
            h_rule = _parse_h_rule(args.h_rule) if args.h_rule else None
            if case.time_dependent and not scheme.time_dependent:
                scheme = replace(scheme, time_dependent=True)
            table = _run_converge(case, scheme, eps_schedule, h_rule, workers)
            csv = table.to_csv(with_reports=args.with_reports)
            sys.stdout.write(csv)
            (outdir / f"converge_{case.id}_{harness.scheme_name(scheme)}.csv"
             ).write_text(csv)
            return 0

        if args.command == "constants":
            rows = harness.run_constant_validation(
                case, scheme, eps_schedule if args.eps else None)
            csv = harness.constants_csv(rows)
            sys.stdout.write(csv)
            (outdir / f"constants_{case.id}_{scheme.family}.csv").write_text(csv)
            return 0

        if args.command == "split":
            eps = eps_schedule[0]
            ladder = args.h_ladder or [eps / 4, eps / 8, eps / 16]
            rep = harness.truncation_split(case, scheme, eps, ladder)
            lines = ["h,consecutive_error"]
            for h, e in zip(rep.h_values[:-1], rep.consecutive):
                lines.append(f"{h:.8g},{e:+.6e}")
            lines.append(f"truncation_sum,{rep.truncation_sum:+.6e}")
            lines.append(f"analytic_leading,{rep.analytic_leading:+.6e}")
            lines.append(f"fitted_order,{rep.fitted_order():.4f}")
            text = "\n".join(lines) + "\n"
            sys.stdout.write(text)
            (outdir / f"split_{case.id}_{scheme.family}.csv").write_text(text)
            return 0

        if args.command == "solve":
            return _cmd_solve(args, case, scheme, eps_schedule[0], outdir)

        parser.error(f"unhandled command {args.command}")
    except RuntimeError as exc:
        print(f"error: solver-failure: {exc}", file=sys.stderr)
        return SOLVER_ERROR
    except ValueError as exc:
        print(f"error: invalid-configuration: {exc}", file=sys.stderr)
        return USAGE_ERROR
    return 0


def _cmd_solve(args, case, scheme, eps, outdir: Path) -> int:
    if args.omega:
        lo, hi = args.omega
        case = replace(case, omega_lo=(lo,) * case.dim, omega_hi=(hi,) * case.dim)
    h = eps / args.h_over_eps if args.h_over_eps else None
    mg = MgConfig(tolerance=args.mg_tolerance) if args.mg_tolerance else None
    if case.time_dependent:
        if not scheme.time_dependent:
            scheme = replace(scheme, time_dependent=True)
        u, geom, _ = harness.march_parabolic(case, scheme, eps, h,
                                             mg_config=mg, t_end=args.t_end)
        t = args.t_end if args.t_end is not None else case.t_end
    else:
        u, geom, _ = harness.solve_elliptic_once(case, scheme, eps, h,
                                                 mg_config=mg)
        t = 0.0
    e2, einf = harness.relative_errors(u, case, geom, t=t)
    outdir.mkdir(parents=True, exist_ok=True)
    save_field(outdir / f"solution_{case.id}.txt", u)
    save_field(outdir / f"distance_{case.id}.txt", geom.ls.r)
    save_field(outdir / f"phase_{case.id}.txt", geom.phase.phi)
    print(f"case={case.id} scheme={harness.scheme_name(scheme)} eps={eps} "
          f"t={t} E2={e2:.6e} Einf={einf:.6e}")
    return 0


def _cmd_levelset_demo(args, outdir: Path) -> int:
    from .levelset import advect, seed_polar_star, star_velocity
    from .grid import GridSpec, centered_gradient

    if args.dry_run:
        print("dry-run: configuration valid")
        return 0
    eps = args.eps
    h = eps / 6.4
    n = int(round(4.0 / h)) + 1
    grid = GridSpec((-2.0, -2.0), (2.0, 2.0), (n, n))
    ls = seed_polar_star(grid, 5.0 * eps)
    dt = 0.4 * h
    outdir.mkdir(parents=True, exist_ok=True)
    save_field(outdir / "distance_0000.txt", ls.r)
    t = 0.0
    for k in range(args.steps):
        v = star_velocity(grid, t)
        grad = centered_gradient(ls.r)
        mag = np.maximum(grad.magnitude().data, 1e-12)
        vn = sum(v.components[d] * grad.components[d] for d in range(2)) / mag
        ls = advect(ls, ScalarField(grid, vn), dt)
        t += dt
    save_field(outdir / f"distance_{args.steps:04d}.txt", ls.r)
    print(f"advected star interface for {args.steps} steps to t={t:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
