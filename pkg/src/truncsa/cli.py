"""Command line entry point: ``truncsa {run,check,report,compare}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 when ``check`` finds a hypothesis violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config, parse_config
from .problems import check_h1, check_h3
from .rng import RandomStream, derive_seed
from .schedules import check_h2

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VIOLATION = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="truncsa", description="Randomly truncated stochastic approximation experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an ensemble from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--seed", type=int)

    chk = sub.add_parser("check", help="sample the theorem hypotheses for a problem and schedule")
    chk.add_argument("--config")
    chk.add_argument("--problem")
    chk.add_argument("--dim", type=int)
    chk.add_argument("--noise", choices=("additive", "state_scaled"))
    chk.add_argument("--sigma", type=float)
    chk.add_argument("--samples", type=int, default=2000)
    chk.add_argument("--seed", type=int)

    rep = sub.add_parser("report", help="re-render the summary of a stored run")
    rep.add_argument("--out", required=True)
    rep.add_argument("--json", action="store_true", help="print the reports as JSON")

    cmp_ = sub.add_parser("compare", help="paired truncated vs plain Robbins-Monro table")
    src = cmp_.add_mutually_exclusive_group(required=True)
    src.add_argument("--config")
    src.add_argument("--from", dest="from_dir")
    cmp_.add_argument("--out")
    cmp_.add_argument("--workers", type=int, default=1)
    cmp_.add_argument("--seed", type=int)
    cmp_.add_argument("--rows", type=int, default=20)
    return p


def _overrides(args) -> dict:
    o = {}
    if getattr(args, "seed", None) is not None:
        o["master_seed"] = args.seed
    return o


def _cmd_run(args) -> int:
    from .harness import run_ensemble

    cfg = load_config(args.config, _overrides(args))
    res = run_ensemble(cfg, args.out, workers=args.workers)
    for algo, rep in res.reports.items():
        print(rep.table())
        print()
    print(f"outputs written to {args.out or cfg.output_dir}")
    return EXIT_OK


def _cmd_check(args) -> int:
    overrides = _overrides(args)
    for flag, key in (("problem", "problem.name"), ("dim", "problem.dim"), ("noise", "noise.kind"), ("sigma", "noise.sigma")):
        v = getattr(args, flag)
        if v is not None:
            overrides[key] = v
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        if "problem.name" not in overrides:
            raise ConfigError("check needs --config or --problem")
        cfg = parse_config({}, overrides)
    problem = cfg.problem()
    ok = True

    h1 = check_h1(problem)
    print(f"problem: {problem.name} (dim={problem.dim}, noise={cfg.noise_kind}, sigma={cfg.noise_sigma:g})")
    if h1.passed:
        print(f"H1 monotonicity: pass (min inner product {h1.min_inner_product:.4g} over {h1.n_points} points)")
    else:
        ok = False
        print(f"H1 monotonicity: FAIL ({len(h1.violations)} of {h1.n_points} points with (u(x) | x - x*) <= 0)")
        for v in h1.violations[:10]:
            print(f"  violation at x = {v.tolist()}")

    h2 = check_h2(cfg.schedule())
    status = "pass" if h2.holds else "FAIL"
    ok &= h2.holds
    print(
        f"H2 gains: {status} (alpha={cfg.gain_alpha:g}: sum diverges={h2.divergent_sum}, "
        f"squares summable={h2.square_summable})"
    )

    radius = max(cfg.q_values)
    h3 = check_h3(problem, radius, args.samples, RandomStream(derive_seed(cfg.master_seed, 0)))
    status = "pass" if h3.passed else "FAIL"
    ok &= h3.passed
    print(
        f"H3 second moment: {status} (max E|U|^2 ~ {h3.max_second_moment_estimate:.6g} "
        f"+- {h3.standard_error:.3g} on ball of radius {radius:g})"
    )
    return EXIT_OK if ok else EXIT_VIOLATION


def _cmd_report(args) -> int:
    from .harness import read_summary, reports_from_rows

    out = Path(args.out)
    summary = out / "summary.csv"
    if not summary.exists():
        raise ConfigError(f"no summary.csv in {out}")
    tol, stab = 0.05, 0.1
    if (out / "config.toml").exists():
        cfg = load_config(out / "config.toml")
        tol, stab = cfg.tolerances[0], cfg.stabilization_fraction
    reports = reports_from_rows(read_summary(summary), tol, stab)
    if args.json:
        print(json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=2, default=str))
    else:
        for rep in reports.values():
            print(rep.table())
            print()
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .harness import paired_table, read_summary, run_ensemble

    limit = args.rows if args.rows >= 0 else None
    if args.from_dir:
        rows = read_summary(Path(args.from_dir) / "summary.csv")
        chen = [r for r in rows if r.algorithm == "chen"]
        rm = [r for r in rows if r.algorithm == "rm"]
        if not chen or not rm:
            raise ConfigError(f"{args.from_dir} does not hold a paired run")
        print(paired_table(chen, rm, limit))
        return EXIT_OK
    overrides = _overrides(args)
    overrides["algorithm"] = "both_paired"
    cfg = load_config(args.config, overrides)
    res = run_ensemble(cfg, args.out, workers=args.workers)
    print(paired_table(res.trajectories["chen"], res.trajectories["rm"], limit))
    print()
    print(res.reports["chen"].table())
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "check": _cmd_check, "report": _cmd_report, "compare": _cmd_compare}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
