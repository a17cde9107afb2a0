"""Command-line interface over the experiment pipeline.

Each subcommand runs one pipeline stage (or all of them for ``run``)
against a JSON config file; completed stages are cached in the output
directory and skipped on rerun unless ``--force`` is given.
"""

from __future__ import annotations

import argparse
import sys

from .pipeline import STAGE_ORDER, StageError, load_config, run_pipeline

SUBCOMMANDS = {
    "train-expert": (("expert",), "train the DQN expert and save expert.model"),
    "distill": (("dataset",), "roll the expert out into a labeled dataset"),
    "train-students": (("students",), "fit the tree and kernel-machine sweeps"),
    "evaluate": (("evaluate",), "compute fidelity and performance metrics"),
    "report": (("report",), "write metrics.csv, plot data, and figures"),
    "run": (STAGE_ORDER, "run the full pipeline end to end"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distillbench",
        description="Train a DQN expert and distill it into trees and kernel machines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, metavar="FILE",
                       help="JSON experiment config (defaults apply when omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed override")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="output directory override")
        p.add_argument("--env", default=None, choices=("mountaincar", "cartpole"),
                       help="environment override")
        p.add_argument("--force", action="store_true",
                       help="recompute stages even when cached")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stages, _ = SUBCOMMANDS[args.command]
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out, env=args.env)
    except (ValueError, OSError) as exc:
        print(f"distillbench: bad configuration: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run_pipeline(cfg, only=stages, force=args.force)
    except StageError as exc:
        print(f"distillbench: {exc}", file=sys.stderr)
        return 1
    done = [s for s in stages if s in manifest["stages"]]
    print(f"{args.command}: completed {', '.join(done)} (seed {cfg.master_seed}, "
          f"outputs in {cfg.out_dir})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
