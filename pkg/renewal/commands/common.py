"""Arguments, configuration and output helpers shared by the subcommands."""

import argparse
from pathlib import Path
from typing import Iterable, Optional, Tuple

import numpy as np
from loguru import logger

from renewal.core.config import settings
from renewal.core.errors import InputError
from renewal.models.schemas import Manifest, RenderOrder, RunConfig, read_document
from renewal.services.context_tree import AllowedMatrix, load_allowed_matrix
from renewal.services.inference import DirichletHyper
from renewal.services.sequences import Alphabet, Dataset, load_dataset

MANIFEST_NAME = "manifest.json"


def add_model_arguments(parser: argparse.ArgumentParser) -> None:
    """Alphabet, depth bound and prior hyperparameters."""
    parser.add_argument("-m", "--alphabet-size", type=int, help="Alphabet size m (symbols 0..m-1)")
    parser.add_argument("-L", "--max-depth", type=int, help="Depth bound L of the context trees")
    parser.add_argument("--alpha", type=float, default=settings.default_alpha,
                        help="Dirichlet hyperparameter for every symbol")
    parser.add_argument("--allowed", dest="allowed_path", type=Path,
                        help="JSON file with the allowed-transition matrix")


def add_output_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help="Master seed (falls back to VLMC_SEED, then fresh entropy)")
    parser.add_argument("--output-dir", type=Path, default=Path("output"), help="Directory for results")
    parser.add_argument("--render", type=RenderOrder, choices=list(RenderOrder),
                        default=RenderOrder.OLDEST_FIRST, help="Order in which contexts are written")


def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    if settings.seed is not None:
        return settings.seed
    fresh = int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
    logger.info(f"No seed given, using fresh seed {fresh}")
    return fresh


def build_config(args: argparse.Namespace) -> RunConfig:
    """Turn parsed arguments into a validated run configuration."""
    fields = {
        name: value for name, value in vars(args).items()
        if name in RunConfig.model_fields and value is not None
    }
    fields["seed"] = resolve_seed(args.seed)
    return RunConfig(**fields)


def load_allowed(config: RunConfig) -> Optional[AllowedMatrix]:
    if config.allowed_path is None:
        return None
    return load_allowed_matrix(config.allowed_path)


def load_inputs(config: RunConfig, require_dataset: bool = True) -> Tuple[Dataset, DirichletHyper]:
    """Dataset and hyperparameters for posterior, renewal and exact runs."""
    m, L = config.alphabet_size, config.max_depth
    allowed = load_allowed(config)
    if config.dataset_path is not None:
        dataset = load_dataset(config.dataset_path, m, L)
    elif require_dataset:
        raise InputError(f"{config.command.value} needs a dataset")
    else:
        dataset = Dataset(Alphabet(m), (), L)
    if allowed is not None:
        dataset.check_transitions(allowed)
    return dataset, DirichletHyper(m, config.alpha, allowed)


def write_json(path: Path, payload: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload, encoding="utf-8")
    return path


def write_manifest(config: RunConfig, outputs: Iterable[Path]) -> Path:
    """Record the full configuration, including the seed, next to the outputs."""
    manifest = Manifest(
        tool=settings.app_name,
        version=settings.app_version,
        config=config,
        outputs=[str(path) for path in outputs],
    )
    path = write_json(Path(config.output_dir) / MANIFEST_NAME, manifest.model_dump_json(indent=2))
    logger.info(f"Manifest written to {path}")
    return path


def load_manifest(path: Path) -> Manifest:
    return read_document(path, Manifest)
