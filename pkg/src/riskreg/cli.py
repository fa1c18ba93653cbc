"""Batch command-line frontend.

Subcommands: ``generate`` (problem + noisy data containers), ``select``
(choose alpha by any rule, JSON on stdout), ``study`` (replicate harness,
CSV reports) and ``curve`` (risk-style curves as CSV).

Exit codes: 0 success, 2 usage/config error, 3 degenerate data,
4 convergence failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench, problems, rules, tikhonov
from .errors import ConvergenceError, DegenerateDataError
from .linop import largest_eigenvalue, svd
from .risk import RiskCurve, predictive_risk
from .tikhonov import influence_path_exact, influence_path_stochastic

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_CONVERGENCE = 4


def _fallback_seed(value):
    if value is not None:
        return value
    return int(os.environ.get("RISKREG_SEED", "0"))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskreg",
                                     description="Regularization-parameter selection "
                                                 "for linear inverse problems")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a benchmark problem and noisy data")
    gen.add_argument("--problem", required=True)
    gen.add_argument("--variant", type=int, default=None)
    gen.add_argument("--n", type=int, default=64)
    gen.add_argument("--xi", type=float, default=10.0)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--replicate", type=int, default=0, help="first replicate index")
    gen.add_argument("--replicates", type=int, default=1,
                     help="number of consecutive replicates to write")
    gen.add_argument("--out", required=True, help="output directory")

    sel = sub.add_parser("select", help="choose alpha for a data container")
    sel.add_argument("--data", required=True, help="container file with the data")
    sel.add_argument("--rule", required=True, choices=rules.RULE_NAMES)
    sel.add_argument("--rho2", type=float, default=None)
    sel.add_argument("--sigma2", type=float, default=None)
    sel.add_argument("--sigma", type=float, default=None)
    sel.add_argument("--alpha-init", type=float, default=None)
    sel.add_argument("--grid-min", type=float, default=None)
    sel.add_argument("--grid-max", type=float, default=None)
    sel.add_argument("--grid-points", type=int, default=None)
    sel.add_argument("--matrix-free", action="store_true")
    sel.add_argument("--probes", type=int, default=bench.DEFAULT_PROBES)
    sel.add_argument("--seed", type=int, default=None)
    sel.add_argument("--bp-gamma", type=float, default=0.25)
    sel.add_argument("--bp-c", type=float, default=1.5)

    study = sub.add_parser("study", help="run a replicate study from a config file")
    study.add_argument("--config", required=True)
    study.add_argument("--out", required=True, help="output directory for the CSVs")
    study.add_argument("--workers", type=int, default=1)

    curve = sub.add_parser("curve", help="emit a risk-style curve as CSV")
    curve.add_argument("--data", required=True)
    curve.add_argument("--kind", required=True,
                       choices=("lower_bound", "predictive", "upre", "gcv", "lcurve"))
    curve.add_argument("--grid-min", type=float, default=None)
    curve.add_argument("--grid-max", type=float, default=None)
    curve.add_argument("--grid-points", type=int, default=None)
    curve.add_argument("--out", default=None, help="output file (default stdout)")
    return parser


def _cmd_generate(args) -> int:
    seed = _fallback_seed(args.seed)
    if args.replicates < 1:
        raise ValueError("need at least one replicate")
    problem = problems.make_problem(args.problem, args.variant, args.n)
    os.makedirs(args.out, exist_ok=True)
    tag = problem.name if problem.variant is None else f"{problem.name}{problem.variant}"
    ppath = os.path.join(args.out, f"problem_{tag}_n{args.n}.rr")
    problems.save_container(ppath, problem=problem)
    paths = [ppath]
    for rep in range(args.replicate, args.replicate + args.replicates):
        data = problems.add_noise(problem, args.xi, seed, rep)
        dpath = os.path.join(args.out, f"data_{tag}_n{args.n}_xi{args.xi:g}_r{rep}.rr")
        problems.save_container(dpath, problem=problem, noisy=data)
        paths.append(dpath)
        if rep == args.replicate:
            print(f"sigma = {data.sigma:.12g}")
            print(f"xi = {data.xi:.12g}")
    for path in paths:
        print(path)
    return EXIT_OK


def _load_dataset(path):
    raw = problems.load_container(path)
    problem = problems.problem_from_container(raw)
    noisy = problems.noisy_from_container(raw) if "g" in raw else None
    return raw, problem, noisy


def _grid_for(args, s1_sq: float, matrix_free: bool) -> bench.AlphaGrid:
    if matrix_free:
        grid = bench.matrix_free_grid(s1_sq, args.grid_points or bench.MATRIX_FREE_GRID_POINTS)
    else:
        grid = bench.default_grid(s1_sq, args.grid_points or bench.DEFAULT_GRID_POINTS)
    lo = args.grid_min if args.grid_min is not None else grid.min
    hi = args.grid_max if args.grid_max is not None else grid.max
    return bench.AlphaGrid(lo, hi, grid.points)


def _cmd_select(args, parser) -> int:
    raw, problem, noisy = _load_dataset(args.data)
    if noisy is None:
        parser.error("container has no noisy data vector")
    g = noisy.g
    seed = _fallback_seed(args.seed)
    sigma = args.sigma if args.sigma is not None else (noisy.sigma or None)
    sigma2 = args.sigma2 if args.sigma2 is not None else (
        None if sigma is None else sigma * sigma)

    matrix_free = args.matrix_free or problem.A.representation != "dense"
    if matrix_free:
        lam1 = largest_eigenvalue(problem.A, seed=seed)
        dec = None
        s1_sq = lam1
    else:
        dec = svd(problem.A)
        s1_sq = float(dec.s[0]) ** 2

    needs_path = args.rule in ("dp", "upre", "bp", "gcv", "lc", "qoc") or matrix_free
    path = influence = None
    if needs_path:
        grid = _grid_for(args, s1_sq, matrix_free)
        if matrix_free:
            influence = influence_path_stochastic(problem.A, grid.values, args.probes,
                                                  seed, lam1=s1_sq)
            path = tikhonov.iterative_path(problem.A, g, grid.values)
        else:
            influence = influence_path_exact(dec, grid.values)
            path = tikhonov.spectral_path(dec, g, grid.values)

    if args.rule == "pro":
        if args.rho2 is not None:
            if sigma2 is None:
                parser.error("pro with --rho2 also needs --sigma2 or --sigma")
            sel = rules.pro(influence if matrix_free else dec, args.rho2, sigma2,
                            n=g.size)
        else:
            if sigma2 is None:
                parser.error("pro needs --sigma2/--sigma (and optionally --rho2)")
            sel = rules.pro_estimated(influence if matrix_free else dec, g, sigma2)
    elif args.rule == "ipro":
        sel = rules.ipro(influence if matrix_free else dec, g,
                         alpha_init=args.alpha_init, path=path)
    elif args.rule == "dp":
        if sigma is None:
            parser.error("dp needs --sigma")
        sel = rules.dp(path, sigma)
    elif args.rule == "upre":
        if sigma2 is None:
            parser.error("upre needs --sigma2 or --sigma")
        sel = rules.upre(path, influence if matrix_free else dec, sigma2)
    elif args.rule == "gcv":
        sel = rules.gcv(path, influence if matrix_free else dec)
    elif args.rule == "bp":
        if sigma is None:
            parser.error("bp needs --sigma")
        sel = rules.bp(path, sigma, influence if matrix_free else dec,
                       gamma=args.bp_gamma, c=args.bp_c)
    elif args.rule == "lc":
        sel = rules.lc(path)
    else:
        sel = rules.qoc(path)
    print(sel.to_json())
    return EXIT_OK


def _cmd_study(args) -> int:
    with open(args.config) as fh:
        config = bench.StudyConfig.from_json(fh.read())
    reports = bench.run_study(config, workers=args.workers)
    for fname in bench.write_reports(reports, args.out):
        print(fname)
    return EXIT_OK


def _cmd_curve(args, parser) -> int:
    raw, problem, noisy = _load_dataset(args.data)
    dec = svd(problem.A)
    s1_sq = float(dec.s[0]) ** 2
    grid = _grid_for(args, s1_sq, matrix_free=False)
    alphas = grid.values
    sigma2 = None if noisy is None else noisy.sigma ** 2

    if args.kind in ("predictive", "lower_bound"):
        if problem.g_true is None:
            raise DegenerateDataError("curve kind needs the exact data in the container")
        if sigma2 is None:
            raise DegenerateDataError("curve kind needs the noise level in the container")
    if args.kind in ("upre", "gcv", "lcurve") and noisy is None:
        raise DegenerateDataError("curve kind needs noisy data in the container")

    out = sys.stdout if args.out is None else open(args.out, "w", newline="")
    try:
        if args.kind == "predictive":
            if problem.f_true is None:
                raise DegenerateDataError("predictive curve needs f_true in the container")
            values = predictive_risk(dec, problem.g_true, sigma2, alphas)
            RiskCurve(alphas, values, "predictive").to_csv(out)
        elif args.kind == "lower_bound":
            rho2 = float(problem.g_true @ problem.g_true)
            inf = influence_path_exact(dec, alphas)
            values = rho2 * inf.sn_sq + sigma2 * inf.frob_sq
            RiskCurve(alphas, values, "lower_bound").to_csv(out)
        else:
            path = tikhonov.spectral_path(dec, noisy.g, alphas, keep_solutions=False)
            inf = influence_path_exact(dec, alphas)
            n = noisy.g.size
            if args.kind == "upre":
                if sigma2 is None:
                    raise DegenerateDataError("upre curve needs the noise level")
                values = path.residual_norms ** 2 - 2.0 * sigma2 * (n - inf.trace)
                RiskCurve(alphas, values, "upre").to_csv(out)
            elif args.kind == "gcv":
                values = path.residual_norms ** 2 / (n - inf.trace) ** 2
                RiskCurve(alphas, values, "gcv").to_csv(out)
            else:
                out.write("alpha,residual_norm,solution_norm\n")
                for a, r, s in zip(alphas, path.residual_norms, path.solution_norms):
                    out.write(f"{a:.12g},{r:.12g},{s:.12g}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "select":
            return _cmd_select(args, parser)
        if args.command == "study":
            return _cmd_study(args)
        if args.command == "curve":
            return _cmd_curve(args, parser)
        parser.error(f"unknown command {args.command}")
    except SystemExit as exc:  # parser.error inside a command
        return EXIT_USAGE if exc.code not in (0, None) else 0
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        if isinstance(exc, DegenerateDataError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DEGENERATE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
