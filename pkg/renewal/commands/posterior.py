"""`posterior`: sample the posterior over context trees with Metropolis-Hastings."""

import argparse
from pathlib import Path

from renewal.commands.common import add_model_arguments, add_output_arguments, load_inputs, write_json, write_manifest
from renewal.core.config import settings
from renewal.models.schemas import Hypothesis, PosteriorReport, RunConfig, TreeFrequency
from renewal.services.context_tree import TreePrior
from renewal.services.inference import MarginalLikelihood, mh_run, write_chain
from renewal.services.sequences import build_count_trie


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("posterior", help="Sample the posterior over context trees")
    parser.add_argument("dataset_path", type=Path, help="Dataset file, one sequence per line")
    add_model_arguments(parser)
    parser.add_argument("--state", type=int, help="Restrict the prior to trees where this state is (not) renewing")
    parser.add_argument("--hypothesis", type=Hypothesis, choices=list(Hypothesis), default=Hypothesis.RENEWING,
                        help="Side of the renewal split used with --state")
    parser.add_argument("--iters", type=int, default=settings.mh_default_iters, help="Recorded iterations")
    parser.add_argument("--burn-in", type=int, default=0, help="Discarded iterations before recording")
    parser.add_argument("--top", type=int, default=10, help="Trees printed to the console")
    parser.add_argument("--dump-chain", action="store_true", help="Write the full chain trace")
    add_output_arguments(parser)
    return parser


def run(config: RunConfig) -> Path:
    dataset, hyper = load_inputs(config)
    m, L = dataset.m, dataset.depth_bound
    if config.state is None:
        prior = TreePrior.uniform(m, L, hyper.allowed)
    else:
        prior = TreePrior.for_hypothesis(m, L, config.state, config.hypothesis == Hypothesis.RENEWING, hyper.allowed)

    likelihood = MarginalLikelihood(build_count_trie(dataset), hyper)
    chain = mh_run(likelihood.trie, prior, hyper, config.iters, config.seed,
                   burn_in=config.burn_in, likelihood=likelihood)

    trees = [
        TreeFrequency(
            contexts=tree.render(config.render),
            probability=frequency,
            log_q=likelihood.log_q(tree),
            visits=int(round(frequency * chain.n_iter)),
        )
        for tree, frequency in chain.frequencies()
    ]
    report = PosteriorReport(
        n_iter=chain.n_iter,
        burn_in=config.burn_in,
        seed=config.seed,
        acceptance_rate=chain.acceptance_rate,
        distinct_trees=len(trees),
        constraints=prior.describe(),
        render=config.render,
        trees=trees,
    )
    output_dir = Path(config.output_dir)
    outputs = [write_json(output_dir / "posterior.json", report.model_dump_json(indent=2))]
    if config.dump_chain:
        outputs.extend(write_chain(chain, output_dir, "chain", config.render))

    print(f"acceptance rate {chain.acceptance_rate:.3f}, {len(trees)} distinct trees")
    for item in trees[:config.top]:
        print(f"{item.probability:.4f}  {{{', '.join(item.contexts)}}}")
    return write_manifest(config, outputs)
