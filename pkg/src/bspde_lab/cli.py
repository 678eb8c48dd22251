"""Command line interface: ``bspde-lab {solve,compare,risk,check,selftest}``.

Exit codes: 0 success/pass, 1 selftest failure, 2 configuration or
precondition error, 3 numeric error, 4 hypotheses/assumptions not satisfied
(verdict void), 5 ordering or axiom violated.
"""

from __future__ import annotations

import argparse
import csv
import sys
import types
from pathlib import Path

import numpy as np

from . import penalization
from .comparison import ComparisonReport, run_comparison
from .config import RunConfig, load_config, terminal
from .errors import ConfigurationError, ExpressionError, NumericError, PreconditionError
from .levy import check_lambda_bound
from .problem import check_A1, check_A3, estimate_lipschitz, space_samples, time_samples
from .risk import convexity_suite, monotonicity_suite, translation_suite
from .solver import solve_deterministic, solve_stochastic
from .tree import build_tree

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VOID = 4
EXIT_VIOLATION = 5

VERDICT_EXIT = {"pass": EXIT_OK, "void": EXIT_VOID, "fail": EXIT_VIOLATION}


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([fmt(v) for v in row] for row in rows)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(cfg: RunConfig, args) -> int:
    spec = cfg.problem
    x = spec.grid.x
    J = spec.levy.J
    header = ["t", "node_id", "path_prob", "x", "u", "Z"] + [f"r_{j + 1}" for j in range(J)]
    out = _out_dir(args)
    method = cfg.method
    if method == "auto":
        method = "tree" if spec.phi.path_dependent else "deterministic"
    rows = []
    if method == "deterministic":
        sol = solve_deterministic(spec, cfg.scheme, force=args.force_unchecked)
        verified = sol.verified
        levels = range(cfg.scheme.N + 1) if cfg.full_bundle else [0]
        for k in levels:
            for i in range(spec.grid.M):
                z = "" if k == cfg.scheme.N else 0.0
                rows.append([sol.times[k], 0, 1.0, x[i], sol.u[k][i], z] + [z] * J)
    else:
        tree = build_tree(cfg.scheme.N, spec.T, spec.levy)
        bundle = solve_stochastic(spec, tree, cfg.scheme, threads=args.threads, force=args.force_unchecked)
        verified = bundle.verified
        levels = range(tree.N + 1) if cfg.full_bundle else [0]
        times = tree.times()
        for k in levels:
            for node in range(tree.n_nodes(k)):
                for i in range(spec.grid.M):
                    if k < tree.N:
                        zr = [bundle.Z[k][node, i]] + [bundle.r[k][j, node, i] for j in range(J)]
                    else:
                        zr = [""] * (J + 1)
                    rows.append([times[k], node, tree.path_prob[k][node], x[i], bundle.u[k][node, i]] + zr)
    write_csv(out / "solution.csv", header, rows)
    with open(out / "solve_summary.txt", "w", encoding="utf-8") as fh:
        fh.write(f"method: {method}\n")
        fh.write(f"verified: {fmt(verified)}\n")
        fh.write(f"N: {cfg.scheme.N}\ntheta: {fmt(cfg.scheme.theta)}\nM: {spec.grid.M}\n")
        if not verified:
            fh.write("WARNING: ellipticity check failed; results are unverified\n")
    return EXIT_OK


def _hypothesis_rows(report: ComparisonReport):
    h = report.hypotheses
    return [
        ["terminal_ordered", h.terminal_ordered, h.terminal_gap],
        ["driver_dominated_along_sol1", h.driver_dominated, h.driver_gap],
        ["A1", h.A1.passed, h.A1.margin],
        ["A2", h.A2.passed is True, max(h.A2.constants)],
        ["A3", h.A3.passed, h.A3.worst_violation],
    ]


def cmd_compare(cfg: RunConfig, args) -> int:
    if len(cfg.problems) != 2:
        raise ConfigurationError("compare needs exactly two problems")
    spec1, spec2 = cfg.problems
    report = run_comparison(
        spec1,
        spec2,
        cfg.scheme,
        threads=args.threads,
        seed=cfg.seed,
        n_samples=cfg.n_samples,
        force=args.force_unchecked,
    )
    out = _out_dir(args)
    write_csv(
        out / "comparison_levels.csv",
        ["level", "t", "worst_positive_part", "expected_defect"],
        [[k, report.times[k], report.worst_positive_part[k], report.expected_defect[k]] for k in range(len(report.times))],
    )
    write_csv(out / "comparison_hypotheses.csv", ["check", "passed", "value"], _hypothesis_rows(report))
    with open(out / "comparison_summary.txt", "w", encoding="utf-8") as fh:
        fh.write(f"verdict: {report.verdict}\n")
        fh.write(f"tier: {report.tier}\n")
        fh.write(f"tolerance: {fmt(report.tolerance)}\n")
        fh.write(f"max worst positive part: {fmt(report.max_positive_part)}\n")
        fh.write(f"expected defect at t=0: {fmt(report.expected_defect[0])}\n")
        for line in report.hypotheses.failures():
            fh.write(f"hypothesis failed: {line}\n")
    return VERDICT_EXIT[report.verdict]


def cmd_risk(cfg: RunConfig, args) -> int:
    spec = cfg.problem
    tree = build_tree(cfg.scheme.N, spec.T, spec.levy)
    settings = cfg.risk
    if args.suite == "translation":
        report = translation_suite(spec, spec.phi, float(settings.get("shift", 1.0)), tree, cfg.scheme, args.threads)
    else:
        if "terminal2" not in settings:
            raise ConfigurationError(f"{args.suite} needs risk.terminal2")
        phi2 = terminal(settings["terminal2"], spec.grid.M, "risk.terminal2")
        if args.suite == "monotonicity":
            report = monotonicity_suite(spec, spec.phi, phi2, tree, cfg.scheme, args.threads)
        else:
            lambdas = [float(v) for v in settings.get("lambdas", [0.0, 0.25, 0.5, 0.75, 1.0])]
            report = convexity_suite(spec, spec.phi, phi2, lambdas, tree, cfg.scheme, args.threads)
    out = _out_dir(args)
    write_csv(out / "risk_rho.csv", ["x", "rho"], zip(spec.grid.x, report.rho))
    keys = list(report.rows[0]) if report.rows else []
    write_csv(out / f"risk_{report.axiom}.csv", keys, [[row[k] for k in keys] for row in report.rows])
    with open(out / "risk_summary.txt", "w", encoding="utf-8") as fh:
        fh.write(f"axiom: {report.axiom}\npassed: {fmt(report.passed)}\n")
        fh.write(f"worst violation: {fmt(report.worst_violation)}\ntolerance: {fmt(report.tolerance)}\n")
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_check(cfg: RunConfig, args) -> int:
    rows = []
    ok = True
    for i, spec in enumerate(cfg.problems):
        ts = time_samples(spec, cfg.scheme.N)
        a1 = check_A1(spec, ts, space_samples(spec))
        a2 = estimate_lipschitz(spec, n_samples=cfg.n_samples, seed=cfg.seed)
        a3 = check_A3(spec, ts, seed=cfg.seed)
        lam = check_lambda_bound(spec.levy, spec.lam, ts)
        rows += [
            [i, "A1", a1.passed, a1.margin],
            [i, "A2_u", a2.passed, a2.u],
            [i, "A2_v", a2.passed, a2.v],
            [i, "A2_Z", a2.passed, a2.Z],
            [i, "A3", a3.passed, a3.worst_violation],
            [i, "lambda_bound", lam.passed, lam.worst_ratio],
        ]
        ok = ok and a1.passed and a2.passed is True and a3.passed and lam.passed
    out = _out_dir(args)
    write_csv(out / "check_report.csv", ["problem", "check", "passed", "value"], rows)
    with open(out / "check_summary.txt", "w", encoding="utf-8") as fh:
        fh.write(f"all assumptions hold: {fmt(ok)}\n")
        fh.write("A2 is a sampled estimate (falsifier), not a proof\n")
    return EXIT_OK if ok else EXIT_VOID


def _faulty(name: str):
    ns = types.SimpleNamespace(
        f_n=penalization.f_n, f_n_prime=penalization.f_n_prime, f_n_second=penalization.f_n_second
    )
    if name == "f_n":
        ns.f_n = lambda n, x: penalization.f_n(n + 1, x)
    elif name == "f_n_prime":
        ns.f_n_prime = lambda n, x: 1.01 * penalization.f_n_prime(n, x)
    elif name == "f_n_second":
        ns.f_n_second = lambda n, x: 0.5 * penalization.f_n_second(n, x)
    return ns


def cmd_selftest(args) -> int:
    impl = _faulty(args.inject_fault) if args.inject_fault else None
    results = penalization.property_sweep(impl, seed=args.seed or 0)
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'}  {res.name}: {res.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bspde-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "compare", "risk", "check", "selftest"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "selftest")
        p.add_argument("--out", default="out")
        p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = auto")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--force-unchecked", action="store_true")
        if name == "risk":
            p.add_argument("--suite", required=True, choices=["monotonicity", "convexity", "translation"])
        if name == "selftest":
            p.add_argument(
                "--inject-fault", choices=["f_n", "f_n_prime", "f_n_second"], default=None, help=argparse.SUPPRESS
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return cmd_selftest(args)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        handler = {"solve": cmd_solve, "compare": cmd_compare, "risk": cmd_risk, "check": cmd_check}
        return handler[args.command](cfg, args)
    except (ConfigurationError, PreconditionError, ExpressionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
