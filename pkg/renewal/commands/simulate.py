"""`simulate`: draw sequences from a probabilistic context tree."""

import argparse
from pathlib import Path

from loguru import logger

from renewal.commands.common import add_output_arguments, write_manifest
from renewal.core.errors import InputError
from renewal.models.schemas import ModelName, RunConfig
from renewal.services.sequences import write_dataset
from renewal.services.simulation import load_pct, model1, model2, save_pct, simulate


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("simulate", help="Simulate sequences from a probabilistic context tree")
    parser.add_argument("--model", type=ModelName, choices=list(ModelName), default=ModelName.MODEL1,
                        help="Built-in model, or 'custom' with --pct")
    parser.add_argument("--pct", dest="pct_path", type=Path, help="JSON file with a probabilistic context tree")
    parser.add_argument("--I", dest="n_sequences", type=int, default=3, help="Number of sequences")
    parser.add_argument("--T", dest="length", type=int, default=1000, help="Length of each sequence")
    parser.add_argument("--sim-burn-in", type=int, help="Discarded steps before each sequence")
    parser.add_argument("-m", "--alphabet-size", type=int, help="Expected alphabet size (checked against the model)")
    parser.add_argument("-L", "--max-depth", type=int, help="Depth bound recorded for the dataset")
    add_output_arguments(parser)
    return parser


def run(config: RunConfig) -> Path:
    if config.model == ModelName.CUSTOM:
        pct = load_pct(config.pct_path)
    else:
        pct = model1() if config.model == ModelName.MODEL1 else model2()
    if config.alphabet_size is not None and config.alphabet_size != pct.m:
        raise InputError(f"the model has {pct.m} symbols, not {config.alphabet_size}")

    dataset = simulate(
        pct,
        config.n_sequences,
        config.length,
        config.seed,
        burn_in=config.sim_burn_in,
        depth_bound=config.max_depth,
    )
    output_dir = Path(config.output_dir)
    dataset_path = write_dataset(dataset, output_dir / "dataset.txt")
    pct_path = save_pct(pct, output_dir / "pct.json")
    logger.info(f"Dataset written to {dataset_path}")
    print(f"{dataset.n_sequences} sequences of length {config.length} written to {dataset_path}")
    return write_manifest(config, [dataset_path, pct_path])
