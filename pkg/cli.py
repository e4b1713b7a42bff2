"""Command-line entry point: python cli.py <formula|boxcount|cantor|certify|diagnose|sweep>."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from config.constants import EXIT_BUDGET, EXIT_CERTIFICATE_FAILED, EXIT_INVALID
from config.settings import settings
from models.errors import CellBudgetExceeded, MassFloorError, UbiquityError
from utils.config_loader import apply_overrides, load_config, parse_levels
from utils.export import run_directory
from utils.logger import setup_logging
from workflows.experiment import COMMANDS, ExperimentWorkflow

logger = logging.getLogger("cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ubiquity",
        description="Dimension bounds for limsup sets of anisotropically shrunk balls.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="64-bit seed")
    parser.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    parser.add_argument("--out", help="output directory for this run")
    parser.add_argument("--levels", type=parse_levels, help="box-count levels A..B")
    parser.add_argument("--depth", type=int, help="Cantor depth P")
    parser.add_argument("--cell-budget", type=int, dest="cell_budget", help="maximum grid cells")
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ...")
    parser.add_argument("--no-progress", action="store_true", help="disable progress bars")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    # argparse itself exits with status 2 on bad flags
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = apply_overrides(
            load_config(args.config),
            settings,
            seed=args.seed,
            threads=args.threads,
            cell_budget=args.cell_budget,
            output_dir=args.out,
            levels=args.levels,
            depth=args.depth,
        )
        out_dir = run_directory(config.output_dir, args.command, explicit=args.out is not None)
        workflow = ExperimentWorkflow(config, out_dir, progress=False if args.no_progress else None)
        report = workflow.execute(args.command)
    except CellBudgetExceeded as exc:
        logger.error("%s", exc)
        return EXIT_BUDGET
    except MassFloorError as exc:
        logger.error("%s", exc)
        return EXIT_CERTIFICATE_FAILED
    except (UbiquityError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    logger.info("%s finished: passed=%s, artifacts in %s", args.command, report["passed"], out_dir)
    return report["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
