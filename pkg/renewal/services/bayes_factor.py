"""Partial and intrinsic Bayes factors for the renewal-state test."""

import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import logsumexp
from tqdm import tqdm

from renewal.core.errors import ContractViolation, InputError, NonFiniteValueError, RenewalError, SubsetFailure
from renewal.models.schemas import (
    EvidenceLabel,
    EvidenceStrength,
    Favours,
    IntrinsicBayesFactors,
    PbfRecord,
    RenewalReport,
    TrimMode,
)
from renewal.services.context_tree import TreePrior
from renewal.services.inference import LN10, ChainRecord, DirichletHyper, MarginalLikelihood, mh_run, write_chain
from renewal.services.sequences import Dataset, build_count_trie

RENEWING_TAG = 0
NOT_RENEWING_TAG = 1


class SubsetPlan:
    """All training subsets of size v drawn from I sequences, in lexicographic order."""

    def __init__(self, n_sequences: int, v: int):
        if not 1 <= v < n_sequences:
            raise InputError(f"training subset size v={v} must satisfy 1 <= v < I={n_sequences}")
        self.n_sequences = n_sequences
        self.v = v
        self.subsets: List[Tuple[int, ...]] = list(combinations(range(n_sequences), v))

    def __len__(self) -> int:
        return len(self.subsets)

    def __iter__(self) -> Iterator[Tuple[int, ...]]:
        return iter(self.subsets)


def derive_seed(seed: int, subset: Sequence[int], tag: int) -> int:
    """Per-(subset, hypothesis) chain seed, independent of scheduling."""
    sequence = np.random.SeedSequence(seed, spawn_key=(len(subset), *subset, tag))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def hypothesis_prior(dataset: Dataset, state: int, hyper: DirichletHyper, renewing: bool) -> TreePrior:
    return TreePrior.for_hypothesis(dataset.m, dataset.depth_bound, state, renewing, hyper.allowed)


def log10_mean_predictive(chain: ChainRecord, test: MarginalLikelihood) -> float:
    """log10 of the chain average of q(tree, test data)."""
    test_log_q = np.array([test.log_q(tree) for tree in chain.trees])
    value = (logsumexp(test_log_q, b=chain.visits()) - math.log(chain.n_iter)) / LN10
    if not math.isfinite(value):
        raise NonFiniteValueError(f"predictive average is {value}")
    return float(value)


def pbf_hat(
    dataset: Dataset,
    subset: Sequence[int],
    state: int,
    hyper: DirichletHyper,
    n_iter: int,
    seed_base: int,
    burn_in: int = 0,
    chain_dir: Optional[Union[str, Path]] = None,
) -> PbfRecord:
    """Monte Carlo partial Bayes factor trained on ``subset`` and tested on the rest.

    Each hypothesis gets its own chain on the training counts, seeded from
    ``seed_base``, the subset and the hypothesis.
    """
    subset = tuple(sorted(subset))
    if not subset or len(subset) >= dataset.n_sequences or len(set(subset)) != len(subset):
        raise ContractViolation(f"training subset {list(subset)} must be a non-empty proper subset of the sequences")

    train = build_count_trie(dataset.subset(subset))
    test = MarginalLikelihood(build_count_trie(dataset.complement(subset)), hyper)

    results: Dict[int, Tuple[float, int, float]] = {}
    for renewing, tag in ((True, RENEWING_TAG), (False, NOT_RENEWING_TAG)):
        prior = hypothesis_prior(dataset, state, hyper, renewing)
        seed = derive_seed(seed_base, subset, tag)
        chain = mh_run(train, prior, hyper, n_iter, seed, burn_in=burn_in)
        results[tag] = (log10_mean_predictive(chain, test), seed, chain.acceptance_rate)
        if chain_dir is not None:
            label = "renewing" if renewing else "not_renewing"
            write_chain(chain, chain_dir, f"subset_{'-'.join(map(str, subset))}_{label}")

    log10_num, seed_num, acceptance_num = results[RENEWING_TAG]
    log10_den, seed_den, acceptance_den = results[NOT_RENEWING_TAG]
    logger.debug(f"Subset {list(subset)}: log10 PBF = {log10_num - log10_den:.4f}")
    return PbfRecord(
        subset=list(subset),
        log10_pbf=log10_num - log10_den,
        log10_num=log10_num,
        log10_den=log10_den,
        seed_renewing=seed_num,
        seed_not_renewing=seed_den,
        acceptance_renewing=acceptance_num,
        acceptance_not_renewing=acceptance_den,
    )


def kass_raftery_label(log10_bf: float) -> EvidenceLabel:
    """Evidence band of |log10 BF|; the sign says which hypothesis is favoured.

    Band edges belong to the stronger band: 0.5 is substantial, 1 strong, 2 decisive.
    """
    if not math.isfinite(log10_bf):
        raise NonFiniteValueError(f"cannot label a Bayes factor of {log10_bf}")
    magnitude = abs(log10_bf)
    if magnitude < 0.5:
        strength = EvidenceStrength.BARE_MENTION
    elif magnitude < 1.0:
        strength = EvidenceStrength.SUBSTANTIAL
    elif magnitude < 2.0:
        strength = EvidenceStrength.STRONG
    else:
        strength = EvidenceStrength.DECISIVE

    if log10_bf > 0:
        favours = Favours.RENEWING
    elif log10_bf < 0:
        favours = Favours.NOT_RENEWING
    else:
        favours = Favours.NEITHER
    return EvidenceLabel(strength=strength, favours=favours)


def _log10_mean_exp10(values: np.ndarray) -> float:
    return float((logsumexp(values * LN10) - math.log(len(values))) / LN10)


def aggregate(
    records: Sequence[PbfRecord],
    trim_fraction: float = 0.10,
    trim_count: Optional[int] = None,
) -> IntrinsicBayesFactors:
    """Arithmetic (AIBF) and geometric (GIBF) means of the PBFs, in log10.

    Trimmed variants drop ``floor(trim_fraction / 2 * N)`` records from each
    tail of the sorted log10 PBFs, or exactly ``trim_count`` per tail when
    given.
    """
    if not records:
        raise InputError("no partial Bayes factors to aggregate")
    ordered = sorted(records, key=lambda record: record.subset)
    values = np.array([record.log10_pbf for record in ordered], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("partial Bayes factors contain non-finite values")
    n = len(values)

    if trim_count is not None:
        if trim_count < 0:
            raise InputError(f"trim count must be non-negative, got {trim_count}")
        per_tail, mode = trim_count, TrimMode.COUNT
    else:
        if not 0.0 <= trim_fraction < 0.5:
            raise InputError(f"trim fraction must lie in [0, 0.5), got {trim_fraction}")
        per_tail, mode = int(math.floor(trim_fraction / 2.0 * n + 1e-9)), TrimMode.FRACTION
    if 2 * per_tail >= n:
        raise InputError(f"trimming {per_tail} per tail leaves none of the {n} partial Bayes factors")

    kept = np.sort(values, kind="stable")[per_tail:n - per_tail]
    aibf, gibf = _log10_mean_exp10(values), float(values.mean())
    aibf_trimmed, gibf_trimmed = _log10_mean_exp10(kept), float(kept.mean())

    return IntrinsicBayesFactors(
        aibf=aibf,
        gibf=gibf,
        aibf_trimmed=aibf_trimmed,
        gibf_trimmed=gibf_trimmed,
        n_records=n,
        trimmed_per_tail=per_tail,
        trim_mode=mode,
        trim_fraction=trim_fraction if mode == TrimMode.FRACTION else None,
        trim_count=trim_count,
        labels={
            "aibf": kass_raftery_label(aibf),
            "gibf": kass_raftery_label(gibf),
            "aibf_trimmed": kass_raftery_label(aibf_trimmed),
            "gibf_trimmed": kass_raftery_label(gibf_trimmed),
        },
    )


# Per-process state for the subset fan-out, set once by the pool initializer.
_worker_state: Dict[str, object] = {}


def _init_worker(dataset: Dataset, state: int, hyper: DirichletHyper, n_iter: int, seed: int,
                 burn_in: int, chain_dir: Optional[Path]) -> None:
    _worker_state.update(dataset=dataset, state=state, hyper=hyper, n_iter=n_iter, seed=seed,
                         burn_in=burn_in, chain_dir=chain_dir)


def _run_subset(subset: Tuple[int, ...]) -> PbfRecord:
    return pbf_hat(
        _worker_state["dataset"],
        subset,
        _worker_state["state"],
        _worker_state["hyper"],
        _worker_state["n_iter"],
        _worker_state["seed"],
        burn_in=_worker_state["burn_in"],
        chain_dir=_worker_state["chain_dir"],
    )


def run_renewal_test(
    dataset: Dataset,
    state: int,
    v: int,
    n_iter: int,
    hyper: DirichletHyper,
    trim_fraction: float = 0.10,
    seed: int = 0,
    parallelism: int = 1,
    *,
    trim_count: Optional[int] = None,
    burn_in: int = 0,
    chain_dir: Optional[Union[str, Path]] = None,
    show_progress: bool = False,
) -> RenewalReport:
    """Test whether ``state`` is a renewal state: one PBF per training subset, then AIBF and GIBF.

    Results do not depend on ``parallelism``: every chain is seeded from
    ``seed`` and its subset, and records are ordered by subset.
    """
    if not 0 <= state < dataset.m:
        raise InputError(f"state {state} is not a symbol of an alphabet of size {dataset.m}")
    if hyper.m != dataset.m:
        raise InputError(f"hyperparameters are for m={hyper.m}, the data have m={dataset.m}")
    if parallelism < 1:
        raise InputError(f"parallelism must be at least 1, got {parallelism}")
    if hyper.allowed is not None:
        dataset.check_transitions(hyper.allowed)
    plan = SubsetPlan(dataset.n_sequences, v)
    for renewing in (True, False):
        hypothesis_prior(dataset, state, hyper, renewing)
    chain_dir = Path(chain_dir) if chain_dir is not None else None

    logger.info(
        f"Renewal test for state {state}: I={dataset.n_sequences}, v={v}, {len(plan)} subsets, "
        f"{n_iter} iterations per chain, {parallelism} worker(s)"
    )
    init_args = (dataset, state, hyper, n_iter, seed, burn_in, chain_dir)
    records: List[PbfRecord] = []

    if parallelism == 1:
        _init_worker(*init_args)
        for subset in tqdm(plan, desc=f"PBF state {state}", disable=not show_progress):
            try:
                records.append(_run_subset(subset))
            except RenewalError as exc:
                raise SubsetFailure(subset, exc) from exc
    else:
        with ProcessPoolExecutor(max_workers=parallelism, initializer=_init_worker, initargs=init_args) as pool:
            futures = {pool.submit(_run_subset, subset): subset for subset in plan}
            try:
                for future in tqdm(as_completed(futures), total=len(futures),
                                   desc=f"PBF state {state}", disable=not show_progress):
                    subset = futures[future]
                    try:
                        records.append(future.result())
                    except RenewalError as exc:
                        raise SubsetFailure(subset, exc) from exc
            except BaseException:
                pool.shutdown(wait=True, cancel_futures=True)
                raise

    records.sort(key=lambda record: record.subset)
    aggregates = aggregate(records, trim_fraction, trim_count)
    logger.info(
        f"State {state}: AIBF={aggregates.aibf:.2f} GIBF={aggregates.gibf:.2f} "
        f"(trimmed {aggregates.aibf_trimmed:.2f} / {aggregates.gibf_trimmed:.2f}), "
        f"{aggregates.labels['gibf']}"
    )
    return RenewalReport(
        state=state,
        n_sequences=dataset.n_sequences,
        v=v,
        n_iter=n_iter,
        burn_in=burn_in,
        seed=seed,
        alpha=hyper.alpha if isinstance(hyper.alpha, float) else float(np.mean(hyper.alpha)),
        constrained=hyper.allowed is not None,
        records=records,
        aggregates=aggregates,
    )
