"""Command line entry point: ``gen``, ``run``, ``sweep`` and ``oracle``.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 oracle refusal.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .errors import ConfigError, InputDomainError, OracleLimitError, ParseError
from .runner import RunConfig, cmd_gen, cmd_oracle, cmd_run, cmd_sweep, load_config

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ORACLE = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--alpha", type=float)
    common.add_argument("--avg-demand-ratio", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--lambda", dest="lambda_m", type=float, help="reach in metres")
    common.add_argument("--policies", help="comma separated, e.g. EA,EBOE")
    common.add_argument("--seed", type=int)
    common.add_argument("--reps", type=int)
    common.add_argument("--out")
    common.add_argument("--workers", type=int)
    common.add_argument("--dump-allocations", action="store_true", default=None)
    common.add_argument("--no-timing", action="store_true",
                        help="write 0 in the seconds column (reproducible reports)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="billboard-regret", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="write a synthetic instance to CSV")
    sub.add_parser("run", parents=[common], help="run policies on one scenario")
    sub.add_parser("sweep", parents=[common], help="alpha x p grid plus gamma sweep")
    sub.add_parser("oracle", parents=[common], help="brute-force optimum and policy gaps")
    return ap


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    scen = {}
    for flag, key in (("alpha", "alpha"), ("avg_demand_ratio", "avg_demand_ratio"),
                      ("gamma", "gamma"), ("lambda_m", "lambda_m")):
        if getattr(args, flag) is not None:
            scen[key] = getattr(args, flag)
    if scen:
        cfg = replace(cfg, scenario=replace(cfg.scenario, **scen))
    top = {}
    if args.policies is not None:
        top["policies"] = tuple(p.strip().upper() for p in args.policies.split(",") if p.strip())
    if args.seed is not None:
        top["seed"] = args.seed
    if args.reps is not None:
        top["repetitions"] = args.reps
    if args.out is not None:
        top["out"] = args.out
    if args.workers is not None:
        top["workers"] = args.workers
    if args.dump_allocations:
        top["dump_allocations"] = True
    if args.no_timing:
        top["record_timing"] = False
    return replace(cfg, **top).validate()


def _print_rows(rows) -> None:
    for r in rows:
        if r["rep"] == "mean":
            print(f"{r['scenario_id']:<24} {r['policy']:<5} total={r['total']:.6g} "
                  f"excessive={r['excessive']:.6g} unsatisfied={r['unsatisfied']:.6g} "
                  f"satisfied={r['satisfied']:.3g}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "gen":
            out = cmd_gen(cfg)
            print(f"instance written to {out}")
        elif args.command == "run":
            _print_rows(cmd_run(cfg))
        elif args.command == "sweep":
            rows = cmd_sweep(cfg)
            print(f"{len(rows)} rows written to {cfg.out}/report.csv")
        else:
            rep = cmd_oracle(cfg)
            print(f"optimal regret {rep.optimal!r} over {rep.enumerated} assignments")
            for adv, held in rep.allocation.slots.items():
                print(f"  advertiser {adv}: {held}")
            print(f"  pool: {rep.allocation.pool}")
            for name, gap in rep.gaps.items():
                print(f"gap {name:<5} {gap:.6g}")
    except OracleLimitError as exc:
        print(f"refusing: {exc} (required {exc.required})", file=sys.stderr)
        return EXIT_ORACLE
    except ParseError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InputDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
