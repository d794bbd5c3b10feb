"""``segaeval`` command line: augment, evaluate, sensitivity, leaderboard, meshqc."""

import argparse
import logging
import sys

from . import harness
from .errors import SegaEvalError

COMMANDS = {
    "augment": harness.cmd_augment,
    "evaluate": harness.cmd_evaluate,
    "sensitivity": harness.cmd_sensitivity,
    "leaderboard": harness.cmd_leaderboard,
    "meshqc": harness.cmd_meshqc,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="segaeval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--n-base", dest="n_base", type=int)
        p.add_argument("--threads", help="worker count or 'auto'")
        p.add_argument("--out", dest="output_dir", help="output directory")
        p.add_argument("--ground-truth", dest="ground_truth_dir")
        p.add_argument("--submissions", dest="submissions_dir")
        p.add_argument("--manifest")
        p.add_argument("--meshes", dest="meshes_dir")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        config = harness.load_config(args.config, **overrides)
        return COMMANDS[args.command](config)
    except (SegaEvalError, OSError) as exc:
        logging.error("%s: %s", type(exc).__name__, exc)
        return harness.EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
