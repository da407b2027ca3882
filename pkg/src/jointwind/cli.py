"""Command-line entry point: ``jointwind {solve,bench,check-gradients,rose}``.

Exit status is 0 on success, 1 on usage errors (bad flags, unreadable
files) and 2 when a solve or a check fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, checks
from .params import load_params
from .sampling import sample_wind_rose

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jointwind", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one seeded problem and write its report")
    s.add_argument("--n-turbines", type=_positive_int, required=True)
    s.add_argument("--scenarios", type=_positive_int, default=36, help="wind directions W")
    s.add_argument("--seed", type=int, default=0, help="seeds the wind rose and the start")
    s.add_argument("--formulation", choices=["mlr", "joint", "admm"], default="mlr",
                   type=str.lower)
    s.add_argument("--params-file", type=Path, help="key = value physical parameter overrides")
    s.add_argument("--budget", type=float, help="wall-clock limit in seconds")
    s.add_argument("--out", type=Path, default=Path("report.json"), help="report path (JSON)")

    b = sub.add_parser("bench", help="run a multi-seed experiment from a config file")
    b.add_argument("config", type=Path, help="key = value experiment config")
    b.add_argument("--output", type=Path, help="override the config's output directory")
    b.add_argument("--print-default", action="store_true",
                   help="print the default desk-scale config and exit")

    c = sub.add_parser("check-gradients", help="run the randomized gradient checks")
    c.add_argument("--instances", type=_positive_int, default=1000)
    c.add_argument("--envelope-instances", type=int, default=50,
                   help="0 skips the envelope check")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tol", type=float, default=1e-4, help="power-gradient tolerance")
    c.add_argument("--envelope-tol", type=float, default=1e-3)

    r = sub.add_parser("rose", help="write a sampled wind rose as CSV")
    r.add_argument("--scenarios", type=_positive_int, default=36)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", type=Path, help="file to write (default: stdout)")
    return p


def _solve(args) -> int:
    params = load_params(args.params_file) if args.params_file else None
    problem, start = bench.build_problem(args.n_turbines, args.scenarios, args.seed, params)
    config = bench.solver_config({}, args.budget)
    try:
        report = bench.run_one(args.formulation, problem, start, config)
    except Exception as exc:
        print(f"solver failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(report.to_json(indent=1))
    print(f"{report.formulation} N={report.n_turbines} W={report.n_scenarios}: "
          f"{report.objective_gwh:.4f} GWh in {report.runtime_s:.2f} s, "
          f"converged={report.converged} ({report.message}); report written to {args.out}")
    return EXIT_OK if report.converged else EXIT_FAILURE


def _bench(args) -> int:
    if args.print_default:
        print(bench.DEFAULT_CONFIG, end="")
        return EXIT_OK
    if not args.config.is_file():
        raise UsageError(f"config file not found: {args.config}")
    config = bench.load_config(args.config)
    if args.output is not None:
        config.output_dir = args.output
    records = bench.run_experiments(config)
    failed = sum(np.isnan(r.objective_gwh) for r in records)
    print(f"{len(records)} runs written to {config.output_dir}; {failed} failed")
    return EXIT_OK


def _check(args) -> int:
    ok = True
    res = checks.gradient_suite(args.instances, args.seed)
    print(res.line())
    ok &= res.passed(args.tol)
    if args.envelope_instances > 0:
        env = checks.envelope_suite(args.envelope_instances, args.seed)
        print(env.line())
        ok &= env.passed(args.envelope_tol)
    return EXIT_OK if ok else EXIT_FAILURE


def _rose(args) -> int:
    rose = sample_wind_rose(args.scenarios, args.seed)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["index", "angle_deg", "angle_rad", "probability"])
        for i, (a, p) in enumerate(zip(rose.angles, rose.probabilities)):
            writer.writerow([i, repr(float(np.degrees(a))), repr(float(a)), repr(float(p))])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"solve": _solve, "bench": _bench, "check-gradients": _check, "rose": _rose}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"jointwind: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"jointwind: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
