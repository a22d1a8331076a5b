"""Command-line entry point: ``ristopo <stage> [--config PATH] [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, default_config, load_config
from .harness import StageError, report, run_scenario

COMMANDS = {
    "spectrum": ["spectrum"],
    "audit": ["audit"],
    "plan": ["plan"],
    "consensus": ["consensus-sweep"],
    "train-ris": ["train-ris"],
    "eval-ris": ["evaluate-ris"],
    "fl": ["fl-bench"],
    "run": None,  # stages listed in the config
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario file (flat dotted TOML)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", metavar="DIR", default="artifacts", help="artifact directory")
    common.add_argument("--preset", help="named graph: star8, ring8, path-<n>, fig3a-candidate")
    common.add_argument("--graph", metavar="FILE", help="edge-list or adjacency CSV graph file")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="ristopo", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    sub.add_parser("report", parents=[common], help="summarise an artifact directory")
    return parser


def _config(args):
    cfg = load_config(args.config) if args.config else default_config()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.preset:
        over["graph.preset"] = args.preset
    if args.graph:
        over["graph.edge_list"] = args.graph
    return cfg.override(**over) if over else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "report":
            for line in report(args.out):
                print(line)
            return 0
        cfg = _config(args)
        art = run_scenario(cfg, args.out, COMMANDS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"stage {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for f in art.files:
        print(art.out_dir / f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
