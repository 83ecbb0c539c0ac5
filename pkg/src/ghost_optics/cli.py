"""Command-line entry point: ``ghost-optics <mode> [--config PATH] [--seed N] [--out DIR]``."""

import argparse
import sys
from typing import List, Optional

from ghost_optics import __version__
from ghost_optics.config.loader import load_config
from ghost_optics.config.logger import setup_logging
from ghost_optics.config.settings import setting
from ghost_optics.errors import GhostOpticsError
from ghost_optics.models.experiment import ExperimentMode, RunStatus
from ghost_optics.services.runner import ExperimentRunner, status_for

DEFAULT_PRESETS = {
    ExperimentMode.INTERFERENCE: "paper-fig1",
    ExperimentMode.IMAGE: "paper-fig1",
    ExperimentMode.CLASSICAL: "paper-fig1-classical",
    ExperimentMode.REPORT: "paper-fig1",
    ExperimentMode.SWEEP: "paper-fig1",
}

HELP = {
    ExperimentMode.INTERFERENCE: "Ghost interference pattern, Poisson counts and visibility fit",
    ExperimentMode.IMAGE: "Ghost image pattern, Poisson counts and blur fit",
    ExperimentMode.CLASSICAL: "Classical gun pairs: statistics, bounds and washed-out pattern",
    ExperimentMode.REPORT: "EPR report from inline values or earlier run reports",
    ExperimentMode.SWEEP: "Classical property sweep over random gun models",
}


def create_parser() -> argparse.ArgumentParser:
    """Create command-line argument parser"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment file or preset name (default depends on mode)")
    common.add_argument("--seed", type=int, help="Override the master seed")
    common.add_argument("--out", help=f"Output directory (default: {setting.GHOST_OPTICS_OUT_DIR})")
    common.add_argument(
        "--log-level",
        choices=["debug", "info", "warning", "error"],
        help=f"Log level (default: {setting.GHOST_OPTICS_LOG_LEVEL})",
    )

    parser = argparse.ArgumentParser(
        prog="ghost-optics",
        description="Ghost interference / ghost imaging simulator and EPR estimator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  ghost-optics interference                       # paper-fig1 preset
  ghost-optics image --seed 7 --out results/img
  ghost-optics classical --config paper-fig1-classical
  ghost-optics report --config my-report.cfg
  ghost-optics sweep --out results/sweep
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="mode", metavar="MODE")
    subparsers.required = True
    for mode in ExperimentMode:
        subparsers.add_parser(mode.value, parents=[common], help=HELP[mode])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function"""
    parser = create_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    mode = ExperimentMode(args.mode)
    source = args.config or DEFAULT_PRESETS[mode]
    out_dir = args.out or setting.GHOST_OPTICS_OUT_DIR

    try:
        config = load_config(source, mode=mode)
    except GhostOpticsError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return status_for(e).exit_code

    print(f"🚀 Running {mode.value} ({source}, seed={args.seed if args.seed is not None else config.counts.seed})")
    try:
        result = ExperimentRunner(config, out_dir, seed=args.seed).run()
    except Exception as e:
        print(f"❌ Unexpected error: {e}", file=sys.stderr)
        return RunStatus.ERROR.exit_code

    if result.status != RunStatus.SUCCESS:
        icon = "⚠️" if result.status == RunStatus.FIT_ERROR else "❌"
        print(f"{icon} {result.status.value}: {result.message}", file=sys.stderr)
        return result.exit_code

    for artifact in result.artifacts:
        print(f"📄 {artifact}")
    print(f"✅ {mode.value} completed")
    return RunStatus.SUCCESS.exit_code


if __name__ == "__main__":
    sys.exit(main())
