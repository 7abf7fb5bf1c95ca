"""Command-line front end for the transfer-learning lab bench."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import TransferLabError

_STAGES = {
    "generate": ("write synthetic branch CSVs under <out>/data",
                 pipeline.cmd_generate),
    "sweep": ("train base models and every transfer path",
              pipeline.cmd_sweep),
    "indicators": ("compute divergence, projection, and net-similarity "
                   "indicators", pipeline.cmd_indicators),
    "report": ("join sweep and indicators into the report bundle",
               pipeline.cmd_report),
    "all": ("run generate, sweep, indicators, and report in order",
            pipeline.cmd_all),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="transferlab",
        description="Exhaustive transfer sweeps over per-branch sales "
                    "forecasting models, with pre-transfer indicators and "
                    "a hypothesis report.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, _) in _STAGES.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", type=Path, default=None,
                         metavar="FILE",
                         help="key=value run configuration file")
        sub.add_argument("--seed", type=int, default=None,
                         help="override global_seed")
        sub.add_argument("--max-degree", type=int, default=None,
                         help="override transfer.max_degree")
        sub.add_argument("--out", type=Path, default=None,
                         metavar="DIR", help="override output_dir")
        sub.add_argument("--resume", action="store_true",
                         help="reuse existing checkpoints instead of "
                              "retraining")
    return parser


def main(argv=None):
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            config = pipeline.RunConfig.from_file(args.config)
        else:
            config = pipeline.RunConfig()
        config = config.with_overrides(
            seed=args.seed, max_degree=args.max_degree, out=args.out,
            resume=args.resume)
        _STAGES[args.command][1](config)
    except TransferLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
