"""Probabilistic context trees and sequence simulation."""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np
from loguru import logger

from renewal.core.errors import ContractViolation, InputError
from renewal.models.schemas import PctDocument, read_document
from renewal.services.context_tree import (
    AllowedMatrix,
    Context,
    ContextTree,
    parse_context,
    render_context,
    suffix_map,
    validate_tree,
)
from renewal.services.sequences import Alphabet, Dataset

PROBABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ProbabilisticContextTree:
    """A context tree with a next-symbol distribution on every context."""

    tree: ContextTree
    probabilities: Mapping[Context, np.ndarray]
    allowed: Optional[AllowedMatrix] = None

    def __post_init__(self):
        m = self.tree.m
        if set(self.probabilities) != self.tree.context_set:
            missing = self.tree.context_set - set(self.probabilities)
            extra = set(self.probabilities) - self.tree.context_set
            raise InputError(
                "distributions must be given for exactly the tree's contexts "
                f"(missing {sorted(render_context(c, m) for c in missing)}, "
                f"unexpected {sorted(render_context(c, m) for c in extra)})"
            )
        if self.allowed is not None and self.allowed.m != m:
            raise InputError(f"allowed matrix is for m={self.allowed.m}, the tree has m={m}")

        frozen: Dict[Context, np.ndarray] = {}
        for context in self.tree.contexts:
            label = render_context(context, m)
            vector = np.array(self.probabilities[context], dtype=np.float64)
            if vector.shape != (m,):
                raise InputError(f"context {label}: expected {m} probabilities, got {vector.size}")
            if np.any(vector < 0) or not np.all(np.isfinite(vector)):
                raise InputError(f"context {label}: probabilities must be finite and non-negative")
            if abs(vector.sum() - 1.0) > PROBABILITY_TOLERANCE:
                raise InputError(f"context {label}: probabilities sum to {vector.sum():.15g}, not 1")
            if self.allowed is not None:
                banned = ~self.allowed.matrix[context[0]]
                if np.any(vector[banned] > 0):
                    raise InputError(f"context {label}: positive probability on a prohibited transition")
            vector.setflags(write=False)
            frozen[context] = vector
        object.__setattr__(self, "probabilities", frozen)

    @property
    def m(self) -> int:
        return self.tree.m

    @property
    def depth(self) -> int:
        return self.tree.depth

    def distribution(self, context: Context) -> np.ndarray:
        return self.probabilities[context]

    def to_document(self, depth_bound: Optional[int] = None) -> PctDocument:
        return PctDocument(
            L=depth_bound or self.depth,
            m=self.m,
            contexts=self.tree.render(),
            p={render_context(c, self.m): self.probabilities[c].tolist() for c in self.tree.contexts},
            allowed=[list(row) for row in self.allowed.rows] if self.allowed is not None else None,
        )

    @classmethod
    def from_document(cls, document: PctDocument) -> "ProbabilisticContextTree":
        contexts = [parse_context(text, document.m) for text in document.contexts]
        tree = validate_tree(contexts, document.m, document.L)
        probabilities = {parse_context(text, document.m): p for text, p in document.p.items()}
        allowed = AllowedMatrix(tuple(tuple(row) for row in document.allowed)) if document.allowed else None
        return cls(tree, probabilities, allowed)

    @classmethod
    def from_strings(
        cls, m: int, table: Mapping[str, Sequence[float]], allowed: Optional[AllowedMatrix] = None
    ) -> "ProbabilisticContextTree":
        """Build from oldest-first context strings."""
        parsed = {parse_context(text, m): p for text, p in table.items()}
        depth = max(len(c) for c in parsed)
        return cls(validate_tree(parsed, m, depth), parsed, allowed)


def load_pct(path: Union[str, Path]) -> ProbabilisticContextTree:
    return ProbabilisticContextTree.from_document(read_document(path, PctDocument))


def save_pct(pct: ProbabilisticContextTree, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(pct.to_document().model_dump_json(indent=2), encoding="utf-8")
    return path


def _cumulative(vector: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(vector)
    # Symbols after the last positive one can never be drawn, even with rounding.
    last = int(np.flatnonzero(vector > 0)[-1])
    cdf[last:] = 1.0
    return cdf


def simulate(
    pct: ProbabilisticContextTree,
    n_sequences: int,
    length: int,
    seed: int,
    burn_in: Optional[int] = None,
    depth_bound: Optional[int] = None,
) -> Dataset:
    """Draw ``n_sequences`` sequences of ``length`` symbols from the chain defined by ``pct``.

    Each sequence starts from ``max(L, depth)`` uniform symbols, where ``L`` is
    ``depth_bound`` (the tree depth by default), runs ``burn_in`` steps (default
    ``max(1000, 10 * max(L, depth))``) and keeps the final ``length`` symbols.
    Sequence ``i`` uses its own generator derived from ``seed``.
    """
    depth = pct.depth
    depth_bound = depth if depth_bound is None else depth_bound
    # suffix_map needs at least ``depth`` past symbols
    start = max(depth, depth_bound)
    if n_sequences < 1:
        raise ContractViolation(f"n_sequences must be at least 1, got {n_sequences}")
    if length <= depth_bound:
        raise ContractViolation(f"length {length} must exceed the depth bound {depth_bound}")
    if burn_in is None:
        burn_in = max(1000, 10 * start)
    if burn_in < 0:
        raise ContractViolation(f"burn_in must be non-negative, got {burn_in}")

    cdfs = {context: _cumulative(vector) for context, vector in pct.probabilities.items()}
    total = start + burn_in + length
    sequences = []
    for index in range(n_sequences):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))
        symbols = rng.integers(0, pct.m, size=start).tolist()
        uniforms = rng.random(burn_in + length)
        for u in uniforms:
            context = suffix_map(pct.tree, symbols)
            symbols.append(int(np.searchsorted(cdfs[context], u, side="right")))
        sequences.append(np.array(symbols[total - length:], dtype=np.int64))

    logger.info(f"Simulated {n_sequences} sequences of length {length} (burn-in {burn_in}, seed {seed})")
    return Dataset(Alphabet(pct.m), tuple(sequences), depth_bound)


# Two binary models with depth-six contexts; 0 is a renewal state of the first only.
_RARE_ZERO = (1 / 6, 5 / 6)
_FAIR = (1 / 2, 1 / 2)


def model1() -> ProbabilisticContextTree:
    """Binary model in which 0 is a renewal state."""
    return ProbabilisticContextTree.from_strings(2, {
        "0": _RARE_ZERO,
        "01": _FAIR,
        "011": _RARE_ZERO,
        "0111": _FAIR,
        "01111": _RARE_ZERO,
        "011111": _FAIR,
        "111111": _RARE_ZERO,
    })


def model2() -> ProbabilisticContextTree:
    """Model 1 with the context 01111 split by the symbol before it, so 0 is not a renewal state."""
    return ProbabilisticContextTree.from_strings(2, {
        "0": _RARE_ZERO,
        "01": _FAIR,
        "011": _RARE_ZERO,
        "0111": _FAIR,
        "001111": _RARE_ZERO,
        "101111": (3 / 4, 1 / 4),
        "011111": _FAIR,
        "111111": _RARE_ZERO,
    })
