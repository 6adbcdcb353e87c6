"""Command line entry point: ``idslab {simulate,extract,train-eval,report}``.

On failure a single JSON object describing the error is written to stderr
and the exit status is nonzero (2 for configuration or input problems, 1
otherwise).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline
from .config import ExperimentConfig
from .errors import ConfigurationError, IdsLabError, ParseError


def build_parser():
    parser = argparse.ArgumentParser(prog="idslab",
                                     description="Synthetic SCADA intrusion detection lab.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment INI file")
    common.add_argument("--seed", metavar="N", type=int, help="override the master seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common],
                   help="run the plant and attacks, write the labeled packet log")
    p = sub.add_parser("extract", parents=[common], help="aggregate flows into the dataset CSV")
    p.add_argument("--packets", metavar="PATH", help="packet log (default: OUT/packets.csv)")
    p = sub.add_parser("train-eval", parents=[common],
                       help="train and evaluate every configured algorithm")
    p.add_argument("--dataset", metavar="PATH", help="dataset CSV (default: OUT/dataset.csv)")
    sub.add_parser("report", parents=[common],
                   help="verify the manifest and summarize results")
    return parser


def load_config(args):
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(seed=args.seed, out=args.out)


def _error_document(exc):
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigurationError):
        doc["path"] = exc.path
        doc["reason"] = exc.reason
    if isinstance(exc, ParseError):
        doc["line"] = exc.line
        doc["path"] = exc.path
    return doc


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        if args.command == "simulate":
            pipeline.simulate(config)
        elif args.command == "extract":
            pipeline.extract(config, args.packets)
        elif args.command == "train-eval":
            pipeline.train_eval(config, args.dataset)
        else:
            pipeline.report(config)
    except (IdsLabError, ValueError, OSError) as exc:
        print(json.dumps(_error_document(exc), sort_keys=True), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigurationError, ParseError, OSError)) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
