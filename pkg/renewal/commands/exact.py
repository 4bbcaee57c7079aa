"""`exact`: enumerate every tree for the posterior, the evidence and the Bayes factor."""

import argparse
from pathlib import Path

from loguru import logger

from renewal.commands.common import add_model_arguments, add_output_arguments, load_inputs, write_json, write_manifest
from renewal.models.schemas import ExactReport, RunConfig, TreeFrequency
from renewal.services.bayes_factor import kass_raftery_label
from renewal.services.context_tree import TreePrior, describe_tree_space
from renewal.services.inference import MarginalLikelihood, score_tree_space
from renewal.services.sequences import build_count_trie


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("exact", help="Exact posterior and Bayes factor by enumeration (small m, L)")
    parser.add_argument("dataset_path", type=Path, nargs="?", help="Dataset file; omitted means no data")
    add_model_arguments(parser)
    parser.add_argument("--state", type=int, help="Also compute the exact Bayes factor for this state")
    parser.add_argument("--top", type=int, default=10, help="Most probable trees reported")
    add_output_arguments(parser)
    return parser


def run(config: RunConfig) -> Path:
    dataset, hyper = load_inputs(config, require_dataset=False)
    m, L = dataset.m, dataset.depth_bound
    logger.info(f"Enumerating the tree space for m={m}, L={L}: {describe_tree_space(m, L)} trees")

    trie = build_count_trie(dataset)
    prior = TreePrior.uniform(m, L, hyper.allowed)
    scores = score_tree_space(trie, prior, hyper, L)
    posterior = scores.posterior()
    likelihood = MarginalLikelihood(trie, hyper)
    ranked = sorted(posterior.items(), key=lambda item: (-item[1], item[0].contexts))

    report = ExactReport(
        m=m,
        L=L,
        n_trees=len(posterior),
        log_evidence=scores.log_evidence(),
        constraints=prior.describe(),
        posterior=[
            TreeFrequency(contexts=tree.render(config.render), probability=min(probability, 1.0),
                          log_q=likelihood.log_q(tree))
            for tree, probability in ranked[:config.top]
        ],
    )
    print(f"{report.n_trees} trees, log evidence {report.log_evidence:.6f}")
    for item in report.posterior:
        print(f"{item.probability:.4f}  {{{', '.join(item.contexts)}}}")

    if config.state is not None:
        evidence = scores.hypothesis_evidence(config.state)
        label = kass_raftery_label(evidence.log10_bayes_factor)
        report = report.model_copy(update={
            "state": config.state,
            "renewing_trees": evidence.n_renewing,
            "not_renewing_trees": evidence.n_not_renewing,
            "log10_bayes_factor": evidence.log10_bayes_factor,
            "label": label,
        })
        print(f"a={config.state} log10 BF={evidence.log10_bayes_factor:.4f} [{label}]")

    exact_path = write_json(Path(config.output_dir) / "exact.json", report.model_dump_json(indent=2))
    return write_manifest(config, [exact_path])
