"""``uwdloc`` command line: generate | estimate | train | sweep.

Exit codes: 0 success, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from ..estimators import MissingTruthError
from .config import ESTIMATORS, ConfigError, load_config
from .dataset import read_dataset
from .runner import cmd_estimate, cmd_generate, cmd_sweep, cmd_train

EXIT_USAGE = 2
EXIT_DATA = 3


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text):
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [n for n in names if n not in ESTIMATORS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown estimator(s) {bad}; choose from {', '.join(ESTIMATORS)}")
    return names


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=_u64, help="master seed")
    common.add_argument("--out", help="output file (generate) or directory")
    common.add_argument("--estimators", type=_names, help="comma list of " + ", ".join(ESTIMATORS))
    common.add_argument("--trials", type=int, help="trials per SNR (records per SNR for generate)")
    common.add_argument("--snr", type=_floats, help="comma list of SNR levels in dB")
    common.add_argument("--dynamic", action="store_true", default=None, help="dynamic-surface model")
    common.add_argument("--noise-file", help="recorded noise (interleaved little-endian f64)")
    common.add_argument("--checkpoint", help="joint model checkpoint for the cnn estimator")
    common.add_argument("--data", help="dataset file")
    common.add_argument("--workers", type=int, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="uwdloc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a labeled dataset file")
    est = sub.add_parser("estimate", parents=[common], help="localize one dataset record")
    est.add_argument("--index", type=int, default=0, help="record index in --data")
    sub.add_parser("train", parents=[common], help="progressive CNN training on --data")
    sub.add_parser("sweep", parents=[common], help="RMSE-vs-SNR Monte-Carlo sweep")
    return p


def _config(args):
    cfg = load_config(args.config)
    over = {
        "seed": args.seed,
        "estimators": args.estimators,
        "snr_db": args.snr,
        "dynamic": args.dynamic,
        "noise_file": args.noise_file,
        "checkpoint": args.checkpoint,
        "workers": args.workers,
    }
    if args.trials is not None:
        over["trials"] = args.trials
        over["records_per_snr"] = args.trials
    return cfg.with_overrides(**over)


def _require(parser, args, *names):
    for n in names:
        if getattr(args, n) is None:
            parser.error(f"{args.command} needs --{n}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as exc:
        parser.error(str(exc))
    try:
        if args.command == "generate":
            _require(parser, args, "out")
            n = cmd_generate(cfg, args.out)
            print(f"wrote {n} records to {args.out}")
        elif args.command == "estimate":
            _require(parser, args, "data")
            records, _ = read_dataset(args.data)
            if not 0 <= args.index < len(records):
                raise IndexError(f"record index {args.index} out of range (0..{len(records) - 1})")
            rec = records[args.index]
            print("estimator,x,y,z,objective,runtime_s,error_m")
            for name in cfg.estimators:
                e = cmd_estimate(rec, name, cfg)
                err = float(np.linalg.norm(e.position - rec.label))
                print(",".join([name, *(repr(float(v)) for v in e.position),
                                repr(e.objective), f"{e.runtime_s:.6f}", repr(err)]))
        elif args.command == "train":
            _require(parser, args, "data", "out")
            paths, traces = cmd_train(cfg, args.data, args.out)
            for name, path in paths.items():
                print(f"{name}: {path}")
        elif args.command == "sweep":
            _require(parser, args, "out")
            res = cmd_sweep(cfg, args.out, args.data)
            for r in res.rows:
                print(f"{r['estimator']:>10s} {r['snr_db']:7.2f} dB  RMSE {r['rmse_m']:9.3f} m  "
                      f"({r['trials']} trials, {r['mean_runtime_s']:.3f} s/trial)")
    except (MissingTruthError, FileNotFoundError, IndexError, ValueError, OSError) as exc:
        print(f"uwdloc: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
