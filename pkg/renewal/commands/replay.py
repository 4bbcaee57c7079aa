"""`replay`: rerun a previous run from its manifest."""

import argparse
from pathlib import Path
from typing import Optional

from loguru import logger

from renewal.commands.common import load_manifest
from renewal.models.schemas import RunConfig


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("replay", help="Rerun the configuration recorded in a manifest")
    parser.add_argument("manifest", type=Path, help="manifest.json written by an earlier run")
    parser.add_argument("--output-dir", type=Path, help="Write to this directory instead of the recorded one")
    return parser


def config_from_manifest(manifest_path: Path, output_dir: Optional[Path] = None) -> RunConfig:
    manifest = load_manifest(manifest_path)
    fields = manifest.config.model_dump()
    if output_dir is not None:
        fields["output_dir"] = output_dir
    logger.info(f"Replaying {fields['command']} from {manifest_path} (seed {fields['seed']})")
    return RunConfig(**fields)
