"""Marginal likelihood of context trees, Metropolis-Hastings over trees, and exact oracles."""

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.special import gammaln, logsumexp

from renewal.core.errors import (
    ContractViolation,
    DegenerateSpaceError,
    EmptySupportError,
    InputError,
    NonFiniteValueError,
    ProhibitedTransitionError,
    SupportError,
)
from renewal.models.schemas import RenderOrder
from renewal.services.context_tree import (
    AllowedMatrix,
    Context,
    ContextTree,
    Neighbourhood,
    TreePrior,
    enumerate_trees,
    is_renewing,
    neighbourhood,
    render_context,
)
from renewal.services.sequences import CountTrie

LN10 = math.log(10.0)


@dataclass(frozen=True)
class DirichletHyper:
    """Dirichlet(alpha) prior on every context's next-symbol distribution.

    With an allowed-transition matrix the prior of a context ending in ``b``
    lives on the symbols reachable from ``b``.
    """

    m: int
    alpha: Union[float, Tuple[float, ...]] = 0.001
    allowed: Optional[AllowedMatrix] = None

    def __post_init__(self):
        if isinstance(self.alpha, (int, float)):
            alpha: Union[float, Tuple[float, ...]] = float(self.alpha)
            vector = np.full(self.m, alpha)
        else:
            alpha = tuple(float(x) for x in self.alpha)
            vector = np.array(alpha)
            if len(alpha) != self.m:
                raise InputError(f"alpha has {len(alpha)} entries for an alphabet of size {self.m}")
        if not np.all(np.isfinite(vector)) or np.any(vector <= 0):
            raise InputError(f"Dirichlet hyperparameters must be positive and finite, got {self.alpha}")
        if self.allowed is not None and self.allowed.m != self.m:
            raise InputError(f"allowed matrix is for m={self.allowed.m}, the alphabet has m={self.m}")
        object.__setattr__(self, "alpha", alpha)

    @cached_property
    def vector(self) -> np.ndarray:
        vector = np.full(self.m, self.alpha) if isinstance(self.alpha, float) else np.array(self.alpha)
        vector.setflags(write=False)
        return vector

    def mask(self, context: Context) -> Optional[np.ndarray]:
        """Admissible next symbols for ``context``, or None when all are."""
        if self.allowed is None or not context:
            return None
        return self.allowed.matrix[context[0]]


def log_context_term(counts: np.ndarray, alpha: np.ndarray) -> float:
    """log of the Dirichlet-multinomial marginal for one count vector."""
    total = counts.sum()
    if total == 0:
        return 0.0
    alpha_sum = alpha.sum()
    value = (gammaln(alpha_sum) - gammaln(alpha).sum()
             + gammaln(counts + alpha).sum() - gammaln(total + alpha_sum))
    return float(value)


class MarginalLikelihood:
    """log q(tree, data) for one count trie, memoising the per-context terms."""

    def __init__(self, trie: CountTrie, hyper: DirichletHyper):
        if trie.m != hyper.m:
            raise ContractViolation(f"counts are over {trie.m} symbols but the hyperparameters over {hyper.m}")
        self.trie = trie
        self.hyper = hyper
        self._terms: Dict[Context, float] = {}

    def context_term(self, context: Context) -> float:
        term = self._terms.get(context)
        if term is None:
            counts = self.trie.counts(context)
            mask = self.hyper.mask(context)
            if mask is None:
                term = log_context_term(counts, self.hyper.vector)
            else:
                if counts[~mask].any():
                    raise ProhibitedTransitionError(
                        f"data contain a prohibited transition after context {render_context(context, self.hyper.m)}"
                    )
                term = log_context_term(counts[mask], self.hyper.vector[mask])
            if not math.isfinite(term):
                raise NonFiniteValueError(f"log marginal term for context {context} is {term}")
            self._terms[context] = term
        return term

    def log_q(self, tree: ContextTree) -> float:
        if tree.depth > self.trie.depth:
            raise ContractViolation(f"tree depth {tree.depth} exceeds the count depth {self.trie.depth}")
        return math.fsum(self.context_term(context) for context in tree.contexts)

    def grow_delta(self, node: Context) -> float:
        """Change in log q when the leaf ``node`` is split into its children."""
        m = self.hyper.m
        return sum(self.context_term(node + (k,)) for k in range(m)) - self.context_term(node)


def log_q(tree: ContextTree, trie: CountTrie, hyper: DirichletHyper) -> float:
    """Marginal log-likelihood of the counts under ``tree``."""
    return MarginalLikelihood(trie, hyper).log_q(tree)


def log_posterior_unnorm(tree: ContextTree, trie: CountTrie, hyper: DirichletHyper, prior: TreePrior) -> float:
    log_h = prior.log_h(tree)
    if log_h == -math.inf:
        raise SupportError(f"{tree} is outside the support of {prior.name}")
    return log_h + log_q(tree, trie, hyper)


class Proposal(NamedTuple):
    tree: ContextTree
    log_forward: float
    log_backward: float
    kind: str
    node: Context
    neighbourhood: Neighbourhood


def _log_move_probability(moves: Neighbourhood, grow: bool) -> float:
    chosen = moves.grows if grow else moves.prunes
    log_kind = math.log(0.5) if moves.grows and moves.prunes else 0.0
    return log_kind - math.log(len(chosen))


def propose(
    tree: ContextTree,
    prior: TreePrior,
    rng: np.random.Generator,
    current: Optional[Neighbourhood] = None,
) -> Proposal:
    """Draw a grow or prune move and return its forward and backward log probabilities.

    Grow and prune are picked with probability one half each when both are
    possible, otherwise the possible one is taken; the move itself is uniform
    within its kind.
    """
    here = current if current is not None else neighbourhood(tree, prior)
    if not here.grows and not here.prunes:
        raise DegenerateSpaceError(f"no grow or prune move leaves {tree} inside the support")

    if here.grows and here.prunes:
        grow = bool(rng.random() < 0.5)
    else:
        grow = bool(here.grows)
    moves = here.grows if grow else here.prunes
    node, candidate = moves[int(rng.integers(len(moves)))]

    there = neighbourhood(candidate, prior)
    if not (there.prunes if grow else there.grows):
        raise ContractViolation(f"move from {tree} to {candidate} cannot be reversed inside the support")

    return Proposal(
        tree=candidate,
        log_forward=_log_move_probability(here, grow),
        log_backward=_log_move_probability(there, not grow),
        kind="grow" if grow else "prune",
        node=node,
        neighbourhood=there,
    )


class ChainRecord:
    """States visited by one chain after burn-in.

    ``tree_ids`` index into ``trees``, which lists distinct trees in order of
    first visit.
    """

    def __init__(
        self,
        seed: int,
        burn_in: int,
        tree_ids: np.ndarray,
        log_q: np.ndarray,
        accepted: np.ndarray,
        trees: List[ContextTree],
    ):
        self.seed = seed
        self.burn_in = burn_in
        self.tree_ids = tree_ids
        self.log_q = log_q
        self.accepted = accepted
        self.trees = trees

    @property
    def n_iter(self) -> int:
        return len(self.tree_ids)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean()) if self.n_iter else 0.0

    def visits(self) -> np.ndarray:
        return np.bincount(self.tree_ids, minlength=len(self.trees))

    def frequencies(self) -> List[Tuple[ContextTree, float]]:
        """Distinct trees with empirical frequencies, most visited first."""
        visits = self.visits()
        order = sorted(range(len(self.trees)), key=lambda i: (-visits[i], i))
        return [(self.trees[i], visits[i] / self.n_iter) for i in order]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "iter": np.arange(1, self.n_iter + 1),
            "tree_id": self.tree_ids,
            "log_q": self.log_q,
            "accepted": self.accepted,
        })

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChainRecord):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.burn_in == other.burn_in
            and self.trees == other.trees
            and np.array_equal(self.tree_ids, other.tree_ids)
            and np.array_equal(self.log_q, other.log_q)
            and np.array_equal(self.accepted, other.accepted)
        )

    __hash__ = None


def mh_run(
    trie: CountTrie,
    prior: TreePrior,
    hyper: DirichletHyper,
    n_iter: int,
    seed: int,
    init: Optional[ContextTree] = None,
    burn_in: int = 0,
    likelihood: Optional[MarginalLikelihood] = None,
) -> ChainRecord:
    """Metropolis-Hastings over context trees targeting h(tree) q(tree, data).

    Runs ``burn_in + n_iter`` steps from ``init`` (the prior's smallest tree
    by default) and records the last ``n_iter`` states. A support with a
    single tree yields a constant chain.
    """
    if n_iter < 1:
        raise ContractViolation(f"n_iter must be at least 1, got {n_iter}")
    if burn_in < 0:
        raise ContractViolation(f"burn_in must be non-negative, got {burn_in}")
    if prior.m != trie.m:
        raise ContractViolation(f"prior is over {prior.m} symbols, counts over {trie.m}")
    if prior.depth_bound > trie.depth:
        raise ContractViolation(f"prior depth bound {prior.depth_bound} exceeds the count depth {trie.depth}")

    rng = np.random.Generator(np.random.Philox(seed))
    likelihood = likelihood if likelihood is not None else MarginalLikelihood(trie, hyper)

    current = init if init is not None else prior.initial_tree
    if not prior.supports(current):
        raise SupportError(f"initial tree {current} is outside the support of {prior.name}")
    current_log_q = likelihood.log_q(current)
    current_log_h = prior.log_h(current)
    here = neighbourhood(current, prior)
    degenerate = not here.grows and not here.prunes
    if degenerate:
        logger.warning(f"Support of {prior.name} holds a single tree; the chain is constant")

    ids: Dict[ContextTree, int] = {}
    trees: List[ContextTree] = []
    tree_ids = np.empty(n_iter, dtype=np.int64)
    log_qs = np.empty(n_iter, dtype=np.float64)
    accepted = np.zeros(n_iter, dtype=bool)

    for step in range(burn_in + n_iter):
        moved = False
        if not degenerate:
            proposal = propose(current, prior, rng, here)
            delta = likelihood.grow_delta(proposal.node)
            proposed_log_q = current_log_q + delta if proposal.kind == "grow" else current_log_q - delta
            proposed_log_h = prior.log_h(proposal.tree)
            log_ratio = (proposed_log_h + proposed_log_q + proposal.log_backward
                         - current_log_h - current_log_q - proposal.log_forward)
            if rng.random() < math.exp(min(0.0, log_ratio)):
                current, here = proposal.tree, proposal.neighbourhood
                current_log_q, current_log_h = proposed_log_q, proposed_log_h
                moved = True

        if step >= burn_in:
            index = step - burn_in
            tree_id = ids.get(current)
            if tree_id is None:
                tree_id = ids[current] = len(trees)
                trees.append(current)
            tree_ids[index] = tree_id
            log_qs[index] = current_log_q
            accepted[index] = moved

    record = ChainRecord(seed, burn_in, tree_ids, log_qs, accepted, trees)
    logger.debug(
        f"MH chain ({prior.name}): {n_iter} iterations after {burn_in} burn-in, "
        f"acceptance {record.acceptance_rate:.3f}, {len(trees)} distinct trees"
    )
    return record


def write_chain(
    record: ChainRecord,
    directory: Union[str, Path],
    stem: str,
    order: RenderOrder = RenderOrder.OLDEST_FIRST,
) -> List[Path]:
    """Dump a chain as ``<stem>.csv`` plus ``<stem>_trees.json`` mapping tree ids to contexts."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{stem}.csv"
    record.to_frame().to_csv(csv_path, index=False)
    trees_path = directory / f"{stem}_trees.json"
    trees = {str(i): tree.render(order) for i, tree in enumerate(record.trees)}
    trees_path.write_text(json.dumps({"seed": record.seed, "burn_in": record.burn_in, "trees": trees}, indent=2),
                          encoding="utf-8")
    return [csv_path, trees_path]


class HypothesisEvidence(NamedTuple):
    log_evidence_renewing: float
    log_evidence_not_renewing: float
    n_renewing: int
    n_not_renewing: int

    @property
    def log10_bayes_factor(self) -> float:
        return (self.log_evidence_renewing - self.log_evidence_not_renewing) / LN10


class TreeSpaceScores(NamedTuple):
    """Prior weight and marginal likelihood of every supported tree."""

    trees: List[ContextTree]
    log_h: np.ndarray
    log_q: np.ndarray

    def posterior(self) -> Dict[ContextTree, float]:
        weights = self.log_h + self.log_q
        probabilities = np.exp(weights - logsumexp(weights))
        return dict(zip(self.trees, probabilities.tolist()))

    def log_evidence(self, mask: Optional[np.ndarray] = None) -> float:
        """log sum pi(tree) q(tree, data), the prior normalised over the (masked) support."""
        if mask is None:
            mask = np.ones(len(self.trees), dtype=bool)
        return float(logsumexp(self.log_h[mask] + self.log_q[mask]) - logsumexp(self.log_h[mask]))

    def renewing_mask(self, state: int) -> np.ndarray:
        return np.array([is_renewing(tree, state) for tree in self.trees], dtype=bool)

    def hypothesis_evidence(self, state: int) -> HypothesisEvidence:
        renewing = self.renewing_mask(state)
        if not renewing.any():
            raise EmptySupportError(f"H_a ({state}-renewing)")
        if renewing.all():
            raise EmptySupportError(f"H_abar (not {state}-renewing)", f"every supported tree is {state}-renewing")
        return HypothesisEvidence(
            log_evidence_renewing=self.log_evidence(renewing),
            log_evidence_not_renewing=self.log_evidence(~renewing),
            n_renewing=int(renewing.sum()),
            n_not_renewing=int((~renewing).sum()),
        )


def score_tree_space(
    trie: CountTrie, prior: TreePrior, hyper: DirichletHyper, L: Optional[int] = None
) -> TreeSpaceScores:
    """Enumerate the support of ``prior`` and score every tree on ``trie``."""
    L = prior.depth_bound if L is None else L
    likelihood = MarginalLikelihood(trie, hyper)
    trees = list(enumerate_trees(L, trie.m, prior))
    if not trees:
        raise EmptySupportError(prior.name)
    log_h = np.array([prior.log_h(tree) for tree in trees])
    log_qs = np.array([likelihood.log_q(tree) for tree in trees])
    logger.debug(f"Scored {len(trees)} trees of depth <= {L}")
    return TreeSpaceScores(trees, log_h, log_qs)


def exact_posterior(
    trie: CountTrie, prior: TreePrior, hyper: DirichletHyper, L: Optional[int] = None
) -> Dict[ContextTree, float]:
    """Posterior probability of every supported tree, by enumeration."""
    return score_tree_space(trie, prior, hyper, L).posterior()


def exact_log_evidence(
    trie: CountTrie, prior: TreePrior, hyper: DirichletHyper, L: Optional[int] = None
) -> float:
    return score_tree_space(trie, prior, hyper, L).log_evidence()


def exact_hypothesis_evidence(
    trie: CountTrie, state: int, hyper: DirichletHyper, L: int
) -> HypothesisEvidence:
    """Normalised evidence of H_a and H_abar under uniform priors on their supports."""
    prior = TreePrior.uniform(trie.m, L, hyper.allowed)
    return score_tree_space(trie, prior, hyper, L).hypothesis_evidence(state)


def exact_log10_bayes_factor(trie: CountTrie, state: int, hyper: DirichletHyper, L: int) -> float:
    """log10 of the Bayes factor of H_a (``state`` renewing) against H_abar."""
    return exact_hypothesis_evidence(trie, state, hyper, L).log10_bayes_factor


def exact_log10_partial_bayes_factor(
    train: CountTrie, test: CountTrie, state: int, hyper: DirichletHyper, L: int
) -> float:
    """log10 partial Bayes factor: each hypothesis' posterior on ``train`` predicts ``test``."""
    scores = score_tree_space(train, TreePrior.uniform(train.m, L, hyper.allowed), hyper, L)
    test_likelihood = MarginalLikelihood(test, hyper)
    test_log_q = np.array([test_likelihood.log_q(tree) for tree in scores.trees])
    renewing = scores.renewing_mask(state)
    if not renewing.any() or renewing.all():
        raise EmptySupportError("H_a" if not renewing.any() else "H_abar")

    def log_predictive(mask: np.ndarray) -> float:
        weights = scores.log_h[mask] + scores.log_q[mask]
        return float(logsumexp(weights + test_log_q[mask]) - logsumexp(weights))

    return (log_predictive(renewing) - log_predictive(~renewing)) / LN10
