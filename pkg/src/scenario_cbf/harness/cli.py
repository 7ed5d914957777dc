"""``scenario-cbf`` command line.

Exit codes: 0 success, 2 bad input, 3 a check ran and failed.
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..scenario import BOUND_FORMULAS, RiskConfig, sample_bound, validate_guarantee
from .config import ConfigError, default_output_dir, load_config, parse_value
from .experiments import run_experiment, summarize_by_epsilon, write_table1

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 2, 3


def _parse_overrides(tokens):
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--") or len(tok) <= 2:
            raise ConfigError(f"override {tok!r}: expected --key value")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            try:
                val = next(it)
            except StopIteration:
                raise ConfigError(f"override --{key}: missing value") from None
        out[key] = parse_value(val)
    return out


def _cmd_sample_bound(args) -> int:
    try:
        cfg = RiskConfig(args.epsilon, args.beta, args.dims)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.formula == "both":
        print(",".join(f"N_{name}" for name in BOUND_FORMULAS))
        print(",".join(str(sample_bound(cfg, name)) for name in BOUND_FORMULAS))
    else:
        print(sample_bound(cfg, args.formula))
    return EXIT_OK


def _cmd_table1(args) -> int:
    path, ok = write_table1(args.output_dir or default_output_dir())
    print(path.read_text(encoding="utf-8"), end="")
    print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAILED


def _cmd_run_sim(args) -> int:
    rest = list(args.rest)
    if "-h" in rest or "--help" in rest:
        args.parser.print_help()
        return EXIT_OK
    path = rest.pop(0) if rest and not rest[0].startswith("--") else None
    try:
        cfg = load_config(path, _parse_overrides(rest))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rows, degraded = run_experiment(cfg)
    for eps, stats in sorted(summarize_by_epsilon(rows).items()):
        print(f"epsilon={eps!r} mean_time_to_goal_s={stats['mean_time_to_goal']!r} "
              f"incursion_steps={stats['incursion_steps']}")
    for eps, seed in degraded:
        print(f"warning: run epsilon={eps!r} seed={seed} used the slack fallback "
              "on more than 5% of steps", file=sys.stderr)
    print(f"wrote {cfg.output_dir}/summary.csv", file=sys.stderr)
    return EXIT_OK


def _cmd_guarantee(args) -> int:
    try:
        rep = validate_guarantee(args.epsilon, args.beta, args.repetitions, args.seed,
                                 n_samples=args.samples, dims=args.dims)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    verdict = "PASS" if rep.passed else "FAIL"
    print(f"{verdict} N={rep.n_samples} repetitions={rep.repetitions} "
          f"bad_fraction={rep.bad_fraction!r} threshold={rep.threshold!r}")
    return EXIT_OK if rep.passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scenario-cbf",
                                 description="Scenario-based CBF safety filter tools.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver fallbacks")
    sub = ap.add_subparsers(dest="command", required=True)

    sb = sub.add_parser("sample-bound", help="scenario count for a risk level")
    sb.add_argument("--epsilon", type=float, required=True)
    sb.add_argument("--beta", type=float, default=0.01)
    sb.add_argument("--dims", type=int, default=2)
    sb.add_argument("--formula", choices=(*BOUND_FORMULAS, "both"), default="campi")
    sb.set_defaults(func=_cmd_sample_bound)

    t1 = sub.add_parser("reproduce-table1", help="write table1.csv and compare")
    t1.add_argument("--output-dir", default=None)
    t1.set_defaults(func=_cmd_table1)

    rs = sub.add_parser("run-sim", help="closed-loop runs over an epsilon sweep",
                        epilog="Extra --key value pairs override config fields.")
    rs.usage = "scenario-cbf run-sim [config.json] [--key value ...]"
    rs.set_defaults(func=_cmd_run_sim, parser=rs)

    vg = sub.add_parser("validate-guarantee", help="empirical check of the risk level")
    vg.add_argument("--epsilon", type=float, required=True)
    vg.add_argument("--beta", type=float, default=0.01)
    vg.add_argument("--repetitions", type=int, default=1000)
    vg.add_argument("--seed", type=int, default=0)
    vg.add_argument("--dims", type=int, default=2, help="dimension used in the sample bound")
    vg.add_argument("--samples", type=int, default=None, help="override N")
    vg.set_defaults(func=_cmd_guarantee)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    rest = []
    if "run-sim" in argv:
        # everything after the subcommand is a config path and free-form overrides
        cut = argv.index("run-sim") + 1
        argv, rest = argv[:cut], argv[cut:]
    args = ap.parse_args(argv)
    args.rest = rest
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
