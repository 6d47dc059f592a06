"""Command-line entry point: ``openkrotov {optimize,sweep,reproduce,replay}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiments as ex


def _threads(n):
    n = int(n)
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return n


def _global_options(parser, default):
    # accepted before or after the subcommand
    parser.add_argument("--seed", type=int, default=default(None),
                        help="random seed for fidelity sampling (overrides the config)")
    parser.add_argument("--threads", type=_threads, default=default(1),
                        help="worker processes for independent decay rates")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser():
    p = argparse.ArgumentParser(prog="openkrotov",
                                description="Krotov optimal control for Lindblad dynamics")
    _global_options(p, lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, lambda v: argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", parents=[common], help="single optimization, writes a pulse file")
    o.add_argument("--config", required=True)
    o.add_argument("--gamma", type=float, default=None,
                   help="decay rate (default: first entry of gamma_list)")
    o.add_argument("--out", default=None, help="pulse file (default: <output>.pulse.json)")

    s = sub.add_parser("sweep", parents=[common], help="unitary vs non-unitary sweep over gamma_list")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None, help="CSV path (default: config output)")

    r = sub.add_parser("reproduce", parents=[common], help="run one figure protocol")
    r.add_argument("--figure", type=int, choices=ex.FIGURES, required=True)
    r.add_argument("--out", required=True, help="output directory")

    y = sub.add_parser("replay", parents=[common], help="re-evaluate a saved pulse")
    y.add_argument("--pulse", required=True)
    y.add_argument("--atol", type=float, default=1e-10)
    return p


def _load_config(path, seed):
    cfg = ex.ExperimentConfig.load(path)
    if seed is not None:
        cfg = cfg.replace(fidelity={**cfg.fidelity, "seed": seed})
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    # one BLAS thread per worker; parallelism comes from the process pool
    os.environ.setdefault("OMP_NUM_THREADS", "1")

    if args.command == "optimize":
        cfg = _load_config(args.config, args.seed)
        out = args.out or str(Path(cfg.output).with_suffix(".pulse.json"))
        res, meta = ex.optimize_config(cfg, args.gamma, out)
        print(json.dumps({k: meta[k] for k in ("gamma", "iterations", "converged", "reason",
                                               "JT", "F")} | {"pulse": out}))
        return 0

    if args.command == "sweep":
        cfg = _load_config(args.config, args.seed)
        records = ex.run_sweep(cfg, args.threads)
        out = args.out or cfg.output
        ex.records_to_csv(records, out)
        bad = [r.gamma for r in records if not r.converged_n]
        if bad:
            print(f"warning: no convergence at gamma = {bad}", file=sys.stderr)
        print(out)
        return 0

    if args.command == "reproduce":
        seed = 0 if args.seed is None else args.seed
        for path in ex.reproduce(args.figure, args.out, seed, args.threads):
            print(path)
        return 0

    if args.command == "replay":
        report = ex.replay(args.pulse)
        print(json.dumps(report))
        return 0 if report["max_abs_diff"] <= args.atol else 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
