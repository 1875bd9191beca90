"""
Command-line driver.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
failure during a run, 4 perfect sampler failed to coalesce.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import CoalescenceError, ConfigError, DatasetMismatch, RouletteError
from .experiments import compare_runs, diagnose, format_report, run_experiment, substream
from .ising import IsingParams, cftp_sample

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_COALESCENCE = 0, 2, 3, 4

log = logging.getLogger("roulette_mcmc.cli")


def _cmd_simulate(args):
    lat = cftp_sample(args.n, IsingParams(args.alpha, args.beta), substream(args.seed, "data"),
                      max_sweeps=args.max_sweeps)
    Path(args.out).write_text(lat.to_text())
    print(f"wrote {args.n}x{args.n} lattice to {args.out} "
          f"(magnetization {lat.magnetization}, bond sum {lat.bond_sum})")


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.run.output_dir = args.output_dir
    if args.workers:
        cfg.run.workers = args.workers
    summary = run_experiment(cfg)
    print(json.dumps({k: summary.get(k) for k in
                      ("method", "mean", "sd", "ess", "r_hat", "negative_fraction",
                       "acceptance_rate", "wall_time")}, indent=2))


def _cmd_compare(args):
    try:
        report = compare_runs(args.summaries)
    except (OSError, KeyError, ValueError) as err:
        if isinstance(err, DatasetMismatch):
            raise
        raise ConfigError(f"cannot read summaries: {err}") from err
    print(json.dumps(report, indent=2) if args.json else format_report(report))


def _cmd_diagnose(args):
    try:
        out = diagnose(args.chain, args.burn_in)
    except (OSError, ValueError) as err:
        if isinstance(err, RouletteError):
            raise
        raise ConfigError(f"cannot diagnose {args.chain}: {err}") from err
    print(json.dumps(out, indent=2, sort_keys=True))


def build_parser():
    p = argparse.ArgumentParser(prog="roulette-mcmc",
                                description="Signed pseudo-marginal MCMC experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ising-simulate", help="draw an Ising lattice by coupling from the past")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--beta", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-sweeps", type=int, default=2**20)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("run", help="run one experiment from a TOML or JSON config")
    s.add_argument("config")
    s.add_argument("--output-dir")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=_cmd_run)

    s = sub.add_parser("compare", help="compare run summaries on a shared dataset")
    s.add_argument("summaries", nargs="+")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=_cmd_compare)

    s = sub.add_parser("diagnose", help="recompute summaries from a chain CSV")
    s.add_argument("chain")
    s.add_argument("--burn-in", type=int)
    s.set_defaults(func=_cmd_diagnose)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    for h in logging.getLogger().handlers:
        h.setLevel(level)
    try:
        args.func(args)
    except (ConfigError, DatasetMismatch) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except CoalescenceError as err:
        print(f"coalescence failure: {err}", file=sys.stderr)
        return EXIT_COALESCENCE
    except (RouletteError, ArithmeticError) as err:
        print(f"numerical failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
