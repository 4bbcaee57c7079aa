"""Context trees: validity, suffix mapping, grow/prune moves, renewal predicates and priors.

A context is a tuple of symbols stored most-recent-first, so the children of
a node ``s`` are ``s + (k,)`` and the suffix property of the usual
oldest-first notation becomes a prefix relation here. Text and file formats
use the oldest-first order unless asked otherwise.
"""

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, FrozenSet, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from renewal.core.config import settings
from renewal.core.errors import (
    ContractViolation,
    EmptySupportError,
    EnumerationBoundError,
    InputError,
    NonFiniteValueError,
    TreeValidationError,
)
from renewal.models.schemas import AllowedMatrixDocument, RenderOrder, TreeDocument, read_document

Context = Tuple[int, ...]


def render_context(context: Sequence[int], m: int, order: RenderOrder = RenderOrder.OLDEST_FIRST) -> str:
    """Digits for m <= 10, dot-separated symbols otherwise."""
    symbols = list(context) if order == RenderOrder.RECENT_FIRST else list(reversed(context))
    separator = "" if m <= 10 else "."
    return separator.join(str(s) for s in symbols)


def parse_context(text: str, m: int, order: RenderOrder = RenderOrder.OLDEST_FIRST) -> Context:
    """Inverse of :func:`render_context`."""
    text = text.strip()
    if not text:
        raise InputError("empty context string")
    tokens = list(text) if m <= 10 and "." not in text else text.split(".")
    try:
        symbols = [int(token) for token in tokens]
    except ValueError:
        raise InputError(f"context {text!r} is not a string of symbols") from None
    return tuple(symbols) if order == RenderOrder.RECENT_FIRST else tuple(reversed(symbols))


@dataclass(frozen=True)
class ContextTree:
    """A full, suffix-free set of contexts over the alphabet ``0 .. m-1``.

    Instances are canonical: ``contexts`` is sorted, so equal trees compare and
    hash equal. Construct through :func:`validate_tree` unless the input is
    known to be valid.
    """

    m: int
    contexts: Tuple[Context, ...]

    @classmethod
    def from_contexts(cls, m: int, contexts: Iterable[Sequence[int]]) -> "ContextTree":
        return cls(m, tuple(sorted({tuple(c) for c in contexts})))

    @classmethod
    def depth_one(cls, m: int) -> "ContextTree":
        return cls(m, tuple((k,) for k in range(m)))

    @classmethod
    def maximal(cls, m: int, depth: int) -> "ContextTree":
        return cls(m, tuple(itertools.product(range(m), repeat=depth)))

    @cached_property
    def context_set(self) -> FrozenSet[Context]:
        return frozenset(self.contexts)

    @cached_property
    def internal_nodes(self) -> FrozenSet[Context]:
        """Non-root inner nodes: every proper, non-empty prefix of a context."""
        return frozenset(c[:j] for c in self.contexts for j in range(1, len(c)))

    @property
    def depth(self) -> int:
        return max(len(c) for c in self.contexts)

    def __len__(self) -> int:
        return len(self.contexts)

    def __iter__(self) -> Iterator[Context]:
        return iter(self.contexts)

    def __contains__(self, context) -> bool:
        return tuple(context) in self.context_set

    def grown(self, node: Context) -> "ContextTree":
        """Replace the leaf ``node`` by its m children."""
        if node not in self.context_set:
            raise ContractViolation(f"{node} is not a context of the tree")
        contexts = [c for c in self.contexts if c != node]
        contexts.extend(node + (k,) for k in range(self.m))
        tree = ContextTree(self.m, tuple(sorted(contexts)))
        tree.__dict__["internal_nodes"] = self.internal_nodes | {node} if node else self.internal_nodes
        return tree

    def pruned(self, node: Context) -> "ContextTree":
        """Collapse the m leaf children of ``node`` into ``node``."""
        children = {node + (k,) for k in range(self.m)}
        if not node or not children <= self.context_set:
            raise ContractViolation(f"{node} is not a collapsible inner node")
        contexts = [c for c in self.contexts if c not in children]
        contexts.append(node)
        tree = ContextTree(self.m, tuple(sorted(contexts)))
        tree.__dict__["internal_nodes"] = self.internal_nodes - {node}
        return tree

    def collapsible_nodes(self) -> List[Context]:
        """Inner nodes whose children are all leaves, in canonical order."""
        return sorted(
            node for node in self.internal_nodes
            if all(node + (k,) in self.context_set for k in range(self.m))
        )

    def render(self, order: RenderOrder = RenderOrder.OLDEST_FIRST) -> List[str]:
        return [render_context(c, self.m, order) for c in self.contexts]

    def to_document(self, depth_bound: int) -> TreeDocument:
        return TreeDocument(L=depth_bound, m=self.m, contexts=self.render())

    def __str__(self) -> str:
        return "{" + ", ".join(self.render()) + "}"


def tree_violations(contexts: Iterable[Sequence[int]], m: int, L: int) -> List[str]:
    """Every reason ``contexts`` fails to be a valid context tree, or nothing."""
    contexts = [tuple(c) for c in contexts]
    if not contexts:
        return ["the context set is empty"]

    def label(node: Context) -> str:
        return render_context(node, m) if node else "the root"

    violations: List[str] = []
    seen = set()
    for context in contexts:
        if not context:
            violations.append("the empty context is not a valid context (a tree must have depth >= 1)")
            continue
        if context in seen:
            violations.append(f"context {label(context)} is listed twice")
        seen.add(context)
        if any(not 0 <= s < m for s in context):
            violations.append(f"context {label(context)} uses a symbol outside 0..{m - 1}")
        if len(context) > L:
            violations.append(f"context {label(context)} is longer than the depth bound L={L}")

    ordered = sorted(seen)
    for context in ordered:
        for j in range(1, len(context)):
            if context[:j] in seen:
                violations.append(
                    f"suffix property: {label(context[:j])} is a proper suffix of {label(context)}"
                )

    inner = {c[:j] for c in ordered for j in range(len(c))}
    for node in sorted(inner):
        for k in range(m):
            child = node + (k,)
            if child not in seen and child not in inner:
                violations.append(f"fullness: no context covers {label(child)} below {label(node)}")
    return violations


def validate_tree(contexts: Iterable[Sequence[int]], m: int, L: int) -> ContextTree:
    """Return the canonical tree for ``contexts`` or raise listing every violation."""
    if m < 2:
        raise InputError(f"an alphabet needs at least 2 symbols, got m={m}")
    contexts = [tuple(c) for c in contexts]
    violations = tree_violations(contexts, m, L)
    if violations:
        raise TreeValidationError(violations)
    return ContextTree.from_contexts(m, contexts)


def tree_from_document(document: TreeDocument) -> ContextTree:
    contexts = [parse_context(text, document.m) for text in document.contexts]
    return validate_tree(contexts, document.m, document.L)


def load_tree(path: Union[str, Path]) -> Tuple[ContextTree, int]:
    """Read a tree file; returns the tree and its depth bound."""
    document = read_document(path, TreeDocument)
    return tree_from_document(document), document.L


def save_tree(tree: ContextTree, depth_bound: int, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(tree.to_document(depth_bound).model_dump_json(indent=2), encoding="utf-8")
    return path


def suffix_map(tree: ContextTree, past: Sequence[int], end: Optional[int] = None) -> Context:
    """The unique context that is a suffix of ``past[:end]`` (``past`` oldest-first)."""
    end = len(past) if end is None else end
    contexts = tree.context_set
    node: Context = ()
    for j in range(1, min(end, tree.depth) + 1):
        node = node + (int(past[end - j]),)
        if node in contexts:
            return node
    raise ContractViolation(f"no context matches a past of length {end}; at least {tree.depth} symbols may be needed")


@dataclass(frozen=True)
class AllowedMatrix:
    """Allowed one-step transitions: ``rows[a][b]`` is True when a -> b may occur."""

    rows: Tuple[Tuple[bool, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(bool(x) for x in row) for row in self.rows)
        m = len(rows)
        if m < 2 or any(len(row) != m for row in rows):
            raise InputError("the allowed-transition matrix must be square with at least 2 symbols")
        for a, row in enumerate(rows):
            if not any(row):
                raise InputError(f"symbol {a} has no allowed successor")
        for b in range(m):
            if not any(row[b] for row in rows):
                raise InputError(f"symbol {b} has no allowed predecessor")
        object.__setattr__(self, "rows", rows)

    @property
    def m(self) -> int:
        return len(self.rows)

    @cached_property
    def matrix(self) -> np.ndarray:
        matrix = np.array(self.rows, dtype=bool)
        matrix.setflags(write=False)
        return matrix

    def is_allowed(self, source: int, target: int) -> bool:
        return self.rows[source][target]

    @classmethod
    def all_allowed(cls, m: int) -> "AllowedMatrix":
        return cls(tuple((True,) * m for _ in range(m)))

    @classmethod
    def from_document(cls, document: AllowedMatrixDocument) -> "AllowedMatrix":
        return cls(tuple(tuple(row) for row in document.allowed))

    def to_document(self) -> AllowedMatrixDocument:
        return AllowedMatrixDocument(m=self.m, allowed=[list(row) for row in self.rows])


def load_allowed_matrix(path: Union[str, Path]) -> AllowedMatrix:
    document = read_document(path, AllowedMatrixDocument)
    allowed = AllowedMatrix.from_document(document)
    prohibited = int((~allowed.matrix).sum())
    logger.info(f"Loaded allowed-transition matrix from {path}: m={allowed.m}, {prohibited} prohibited transitions")
    return allowed


def is_renewing(tree: ContextTree, state: int) -> bool:
    """True when no inner node of the tree ends in ``state``.

    Equivalently, ``state`` never appears in a context except possibly as its
    oldest symbol.
    """
    if not 0 <= state < tree.m:
        raise ContractViolation(f"state {state} is not a symbol of an alphabet of size {tree.m}")
    return all(node[-1] != state for node in tree.internal_nodes)


def has_prohibited_inner(tree: ContextTree, allowed: AllowedMatrix) -> bool:
    """True when some inner node spells a prohibited transition."""
    if allowed.m != tree.m:
        raise ContractViolation(f"allowed matrix is for m={allowed.m}, tree has m={tree.m}")
    # Each pair inside an inner node is checked on the node that ends with it.
    return any(
        len(node) >= 2 and not allowed.is_allowed(node[-1], node[-2])
        for node in tree.internal_nodes
    )


@dataclass(frozen=True)
class Renewing:
    state: int

    def admits(self, tree: ContextTree) -> bool:
        return is_renewing(tree, self.state)

    def describe(self) -> str:
        return f"RENEWING({self.state})"


@dataclass(frozen=True)
class NotRenewing:
    state: int

    def admits(self, tree: ContextTree) -> bool:
        return not is_renewing(tree, self.state)

    def describe(self) -> str:
        return f"NOT_RENEWING({self.state})"


@dataclass(frozen=True)
class NoProhibitedInner:
    allowed: AllowedMatrix

    def admits(self, tree: ContextTree) -> bool:
        return not has_prohibited_inner(tree, self.allowed)

    def describe(self) -> str:
        return "NO_PROHIBITED_INNER"


Constraint = Union[Renewing, NotRenewing, NoProhibitedInner]


@dataclass(frozen=True)
class TreePrior:
    """Prior over context trees of depth at most L.

    The weight is the indicator of the conjunction of ``constraints``,
    optionally multiplied by ``exp(log_weight(tree))``. Construction fails
    when no tree satisfies the constraints.
    """

    m: int
    depth_bound: int
    constraints: Tuple[Constraint, ...] = ()
    log_weight: Optional[Callable[[ContextTree], float]] = None
    name: str = "prior"

    def __post_init__(self):
        if self.m < 2:
            raise InputError(f"an alphabet needs at least 2 symbols, got m={self.m}")
        if self.depth_bound < 1:
            raise InputError(f"the depth bound must be positive, got L={self.depth_bound}")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        for constraint in self.constraints:
            state = getattr(constraint, "state", None)
            if state is not None and not 0 <= state < self.m:
                raise InputError(f"state {state} is not a symbol of an alphabet of size {self.m}")
            allowed = getattr(constraint, "allowed", None)
            if allowed is not None and allowed.m != self.m:
                raise InputError(f"allowed matrix is for m={allowed.m}, the prior has m={self.m}")
        self.initial_tree  # fails fast on an empty support

    @classmethod
    def uniform(cls, m: int, depth_bound: int, allowed: Optional[AllowedMatrix] = None) -> "TreePrior":
        constraints = (NoProhibitedInner(allowed),) if allowed is not None else ()
        return cls(m, depth_bound, constraints, name="uniform prior")

    @classmethod
    def for_hypothesis(
        cls, m: int, depth_bound: int, state: int, renewing: bool, allowed: Optional[AllowedMatrix] = None
    ) -> "TreePrior":
        """Uniform prior on the trees where ``state`` is (or is not) a renewal state."""
        constraints: List[Constraint] = [Renewing(state) if renewing else NotRenewing(state)]
        if allowed is not None:
            constraints.append(NoProhibitedInner(allowed))
        name = f"H_a ({state}-renewing)" if renewing else f"H_abar (not {state}-renewing)"
        return cls(m, depth_bound, tuple(constraints), name=name)

    def supports(self, tree: ContextTree) -> bool:
        if tree.m != self.m or tree.depth > self.depth_bound:
            return False
        return all(constraint.admits(tree) for constraint in self.constraints)

    def log_h(self, tree: ContextTree) -> float:
        """Log prior weight, ``-inf`` outside the support."""
        if not self.supports(tree):
            return -math.inf
        if self.log_weight is None:
            return 0.0
        value = float(self.log_weight(tree))
        if not math.isfinite(value):
            raise NonFiniteValueError(f"prior log-weight of {tree} is {value}")
        return value

    def describe(self) -> List[str]:
        return [constraint.describe() for constraint in self.constraints]

    @cached_property
    def initial_tree(self) -> ContextTree:
        return minimal_tree(self)


class Neighbourhood(NamedTuple):
    """Grow and prune moves out of one tree, as (node, resulting tree) pairs."""

    grows: List[Tuple[Context, ContextTree]]
    prunes: List[Tuple[Context, ContextTree]]


def neighbourhood(tree: ContextTree, prior: TreePrior) -> Neighbourhood:
    grows = []
    for node in tree.contexts:
        if len(node) < prior.depth_bound:
            candidate = tree.grown(node)
            if prior.supports(candidate):
                grows.append((node, candidate))
    prunes = []
    for node in tree.collapsible_nodes():
        candidate = tree.pruned(node)
        if prior.supports(candidate):
            prunes.append((node, candidate))
    return Neighbourhood(grows, prunes)


def grow_set(tree: ContextTree, prior: TreePrior) -> Tuple[ContextTree, ...]:
    """Supported trees obtained by splitting one leaf, in canonical order."""
    return tuple(candidate for _, candidate in neighbourhood(tree, prior).grows)


def prune_set(tree: ContextTree, prior: TreePrior) -> Tuple[ContextTree, ...]:
    """Supported trees obtained by collapsing one inner node, in canonical order."""
    return tuple(candidate for _, candidate in neighbourhood(tree, prior).prunes)


def minimal_tree(prior: TreePrior) -> ContextTree:
    """Smallest supported tree, ties broken by canonical order.

    Explores trees level by level from the depth-one tree using unrestricted
    grow moves, since a constraint may exclude every intermediate tree on the
    way to a supported one.
    """
    limit = settings.enumeration_limit
    frontier = {ContextTree.depth_one(prior.m)}
    seen = set(frontier)
    while frontier:
        supported = [tree for tree in frontier if prior.supports(tree)]
        if supported:
            return min(supported, key=lambda tree: tree.contexts)
        successors = set()
        for tree in frontier:
            for node in tree.contexts:
                if len(node) < prior.depth_bound:
                    candidate = tree.grown(node)
                    if candidate not in seen:
                        seen.add(candidate)
                        successors.add(candidate)
        if len(seen) > limit:
            raise EnumerationBoundError(f"trees while searching the support of {prior.name}", len(seen), limit)
        frontier = successors
    requirement = " and ".join(prior.describe()) or "the prior"
    raise EmptySupportError(prior.name, f"no context tree of depth <= {prior.depth_bound} satisfies {requirement}")


def _tree_space_log10(m: int, L: int) -> float:
    # log10 g(L) for g(0) = 1, g(l) = 1 + g(l-1)^m
    value = 0.0
    for _ in range(L):
        value = m * value + math.log10(1.0 + 10.0 ** (-m * value)) if m * value < 300 else m * value
    return value


def tree_space_size(m: int, L: int) -> int:
    """Number of context trees of depth 1..L over m symbols."""
    if _tree_space_log10(m, L) > 4000:
        raise EnumerationBoundError(f"context trees with m={m}, L={L}", describe_tree_space(m, L), settings.enumeration_limit)
    g = 1
    for _ in range(L):
        g = 1 + g ** m
    return g - 1


def describe_tree_space(m: int, L: int) -> str:
    """Human-readable size of the tree space, exact when small."""
    log10 = _tree_space_log10(m, L)
    if log10 < 15:
        return str(tree_space_size(m, L))
    return f"1e{log10:.1f}"


def enumerate_trees(L: int, m: int, prior: Optional[TreePrior] = None) -> Iterator[ContextTree]:
    """Every tree of depth <= L admitted by ``prior`` (all trees when None)."""
    limit = settings.enumeration_limit
    log10 = _tree_space_log10(m, L)
    if log10 > 15 or tree_space_size(m, L) > limit:
        logger.warning(f"Refusing to enumerate {describe_tree_space(m, L)} trees for m={m}, L={L} (limit {limit})")
        raise EnumerationBoundError(f"context trees with m={m}, L={L}", describe_tree_space(m, L), limit)
    return _generate_trees(L, m, prior)


def _generate_trees(L: int, m: int, prior: Optional[TreePrior]) -> Iterator[ContextTree]:
    def subtrees(node: Context, remaining: int) -> Iterator[Tuple[Context, ...]]:
        # Every way of completing the subtree under node, node itself a leaf included.
        yield (node,)
        if remaining == 0:
            return
        children = [list(subtrees(node + (k,), remaining - 1)) for k in range(m)]
        for combination in itertools.product(*children):
            yield tuple(itertools.chain.from_iterable(combination))

    children = [list(subtrees((k,), L - 1)) for k in range(m)]
    for combination in itertools.product(*children):
        tree = ContextTree.from_contexts(m, itertools.chain.from_iterable(combination))
        if prior is None or prior.supports(tree):
            yield tree
