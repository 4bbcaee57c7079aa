"""Command-line entry point: ``python -m renewal.main <command> ...``."""

import argparse
import sys
from typing import Callable, Dict, List, Optional

from loguru import logger
from pydantic import ValidationError

from renewal.commands import exact, posterior, renewal_test, replay, simulate
from renewal.commands.common import build_config
from renewal.core.config import get_settings
from renewal.core.errors import InputError, RenewalError
from renewal.core.logging import setup_logging
from renewal.models.schemas import CommandName, RunConfig

COMMANDS: Dict[CommandName, Callable[[RunConfig], object]] = {
    CommandName.SIMULATE: simulate.run,
    CommandName.POSTERIOR: posterior.run,
    CommandName.RENEWAL: renewal_test.run,
    CommandName.EXACT: exact.run,
}


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog=settings.app_name,
        description="Bayesian context-tree inference and renewal-state tests for variable-length Markov chains",
    )
    parser.add_argument("--log-level", help=f"Logging level (default {settings.log_level})")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in (simulate, posterior, renewal_test, exact, replay):
        module.add_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        if args.command == "replay":
            config = replay.config_from_manifest(args.manifest, args.output_dir)
        else:
            config = build_config(args)
        logger.debug(f"Running {config.command.value} with seed {config.seed}")
        COMMANDS[config.command](config)
        return 0
    except ValidationError as e:
        for error in e.errors():
            logger.error(f"Invalid configuration: {error['msg']}")
        return InputError.exit_code
    except RenewalError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return InputError.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
