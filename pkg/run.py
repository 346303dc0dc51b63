#!/usr/bin/env python3
"""
Command-line entry point for bumpy_torus experiments.

    ./run.py classify --config configs/s1_classify.json --out runs/s1
"""

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from config import config
from models.experiment import TaskName
from services.experiment_runner import load_config, run
from utils.errors import ConfigError, InvalidInputError, NumericalError
from utils.formatters import format_report_markdown

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Verification experiments for mechanical Hamiltonians on the 2-torus"
    )
    subparsers = parser.add_subparsers(dest="task", required=True)
    for task in TaskName:
        sub = subparsers.add_parser(task.value, help=f"Run a {task.value} experiment")
        sub.add_argument("--config", required=True, help="Experiment config (JSON)")
        sub.add_argument("--out", help="Output directory (default: the config's output_dir)")
        sub.add_argument("--seed", type=int, help="Override the config's random seed")
        sub.add_argument("--jobs", type=int, help="Worker processes (0 = one per core)")
        sub.add_argument(
            "--tol-override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override one tolerance; repeatable",
        )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    args = build_parser().parse_args(argv)

    try:
        experiment = load_config(args.config, args.tol_override)
        if experiment.task.value != args.task:
            raise ConfigError(
                f"Config {args.config} is a {experiment.task.value} experiment, not {args.task}"
            )
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.jobs is not None:
            if args.jobs < 0:
                raise ConfigError(f"--jobs must be ≥ 0, got {args.jobs}")
            updates["jobs"] = args.jobs
        experiment = experiment.model_copy(update=updates)
        report = run(experiment, args.out)
    except (ConfigError, InvalidInputError, ValidationError) as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG_ERROR
    except NumericalError as e:
        logger.error(f"Numerical failure: {str(e)}")
        return EXIT_NUMERICAL_ERROR

    print(format_report_markdown(report))
    return EXIT_PASS if report.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
