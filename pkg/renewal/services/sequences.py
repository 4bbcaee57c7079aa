"""Alphabets, symbol sequences, datasets and transition counts.

Counts are collected against the maximal depth-L trie. A trie node is a
string stored most-recent-first: the child of the root labelled ``k`` is the
symbol immediately preceding the predicted position. Every sequence
contributes the positions ``t = L+1 .. T_i`` (1-based), so the counts do not
depend on the context tree being scored.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from renewal.core.errors import (
    ContractViolation,
    DatasetParseError,
    DatasetValidationError,
    InputError,
    ProhibitedTransitionError,
)

if TYPE_CHECKING:
    from renewal.services.context_tree import AllowedMatrix

Node = Tuple[int, ...]


@dataclass(frozen=True)
class Alphabet:
    """The symbols ``0 .. m-1``."""

    m: int

    def __post_init__(self):
        if self.m < 2:
            raise InputError(f"an alphabet needs at least 2 symbols, got m={self.m}")


def as_sequence(symbols: Iterable[int], alphabet: Alphabet) -> np.ndarray:
    """Validate symbols against the alphabet and return a read-only int64 array."""
    array = np.array(list(symbols) if not isinstance(symbols, np.ndarray) else symbols, dtype=np.int64)
    if array.ndim != 1:
        raise InputError("a sequence must be one-dimensional")
    if array.size and (array.min() < 0 or array.max() >= alphabet.m):
        bad = int(np.flatnonzero((array < 0) | (array >= alphabet.m))[0])
        raise InputError(f"symbol {int(array[bad])} at position {bad + 1} is outside 0..{alphabet.m - 1}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """A set of independent sequences sharing an alphabet and a depth bound L."""

    alphabet: Alphabet
    sequences: Tuple[np.ndarray, ...]
    depth_bound: int

    def __post_init__(self):
        if self.depth_bound < 1:
            raise InputError(f"the depth bound must be positive, got L={self.depth_bound}")
        sequences = tuple(as_sequence(seq, self.alphabet) for seq in self.sequences)
        for index, seq in enumerate(sequences):
            if len(seq) <= self.depth_bound:
                raise DatasetValidationError(
                    f"sequence {index + 1} has length {len(seq)}; at least {self.depth_bound + 1} "
                    f"symbols are needed with L={self.depth_bound}"
                )
        object.__setattr__(self, "sequences", sequences)

    @property
    def m(self) -> int:
        return self.alphabet.m

    @property
    def n_sequences(self) -> int:
        return len(self.sequences)

    @property
    def lengths(self) -> List[int]:
        return [len(seq) for seq in self.sequences]

    @property
    def n_transitions(self) -> int:
        """Number of counted positions, sum of T_i - L."""
        return sum(len(seq) - self.depth_bound for seq in self.sequences)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        """The sequences at ``indices`` (0-based), in index order."""
        chosen = sorted(set(indices))
        for index in chosen:
            if not 0 <= index < self.n_sequences:
                raise ContractViolation(f"sequence index {index} outside 0..{self.n_sequences - 1}")
        return Dataset(self.alphabet, tuple(self.sequences[i] for i in chosen), self.depth_bound)

    def complement(self, indices: Iterable[int]) -> "Dataset":
        """Every sequence not listed in ``indices``."""
        excluded = set(indices)
        return self.subset(i for i in range(self.n_sequences) if i not in excluded)

    def check_transitions(self, allowed: "AllowedMatrix") -> None:
        """Raise if any adjacent pair of symbols is a prohibited transition."""
        if allowed.m != self.m:
            raise InputError(f"allowed-transition matrix is {allowed.m}x{allowed.m} but the alphabet has {self.m} symbols")
        matrix = allowed.matrix
        for index, seq in enumerate(self.sequences):
            if len(seq) < 2:
                continue
            ok = matrix[seq[:-1], seq[1:]]
            if not ok.all():
                position = int(np.flatnonzero(~ok)[0])
                raise ProhibitedTransitionError(
                    f"sequence {index + 1}, positions {position + 1}-{position + 2}: "
                    f"transition {int(seq[position])} -> {int(seq[position + 1])} is prohibited"
                )


def load_dataset(path: Union[str, Path], m: int, L: int) -> Dataset:
    """Read one whitespace-separated sequence per line; blank lines are skipped."""
    alphabet = Alphabet(m)
    path = str(path)
    sequences: List[np.ndarray] = []

    with open(path, "rb") as handle:
        for line_number, raw in enumerate(handle, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                before = raw[:e.start]
                position = len(before.split()) + (1 if not before or before[-1:].isspace() else 0)
                token = raw.split()[position - 1].decode("utf-8", errors="replace")
                raise DatasetParseError(path, line_number, position, token, "not valid UTF-8") from None
            tokens = line.split()
            if not tokens:
                continue
            symbols = []
            for position, token in enumerate(tokens, start=1):
                try:
                    value = int(token)
                except ValueError:
                    raise DatasetParseError(path, line_number, position, token, "not an integer") from None
                if not 0 <= value < m:
                    raise DatasetParseError(path, line_number, position, token, f"symbol outside 0..{m - 1}")
                symbols.append(value)
            if len(symbols) <= L:
                raise DatasetValidationError(
                    f"{path}:{line_number}: sequence of length {len(symbols)} needs more than L={L} symbols"
                )
            sequences.append(np.array(symbols, dtype=np.int64))

    if not sequences:
        raise DatasetValidationError(f"{path}: no sequences found")

    dataset = Dataset(alphabet, tuple(sequences), L)
    logger.info(f"Loaded {dataset.n_sequences} sequences from {path} (lengths {min(dataset.lengths)}..{max(dataset.lengths)})")
    return dataset


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    """Write a dataset in the format read by :func:`load_dataset`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for seq in dataset.sequences:
            handle.write(" ".join(map(str, seq.tolist())))
            handle.write("\n")
    return path


class CountTrie:
    """Per-node transition counts n_{s,k} over the maximal depth-L trie.

    Only observed nodes are stored; lookups of unobserved strings return the
    zero vector. Instances are immutable once built.
    """

    def __init__(self, m: int, depth: int, counts: Dict[Node, np.ndarray]):
        self._m = m
        self._depth = depth
        self._counts = counts
        for vector in counts.values():
            vector.setflags(write=False)
        self._zero = np.zeros(m, dtype=np.int64)
        self._zero.setflags(write=False)

    @property
    def m(self) -> int:
        return self._m

    @property
    def depth(self) -> int:
        return self._depth

    @property
    def total(self) -> int:
        """Total count at the root, sum of T_i - L."""
        return int(self.counts(()).sum())

    def counts(self, node: Sequence[int]) -> np.ndarray:
        node = tuple(node)
        if len(node) > self._depth:
            raise ContractViolation(f"string of length {len(node)} is deeper than the trie depth {self._depth}")
        return self._counts.get(node, self._zero)

    def __contains__(self, node) -> bool:
        return tuple(node) in self._counts

    def __len__(self) -> int:
        return len(self._counts)

    def nodes(self, depth: int = None) -> Iterator[Node]:
        """Observed nodes, optionally only those of one depth."""
        for node in sorted(self._counts):
            if depth is None or len(node) == depth:
                yield node

    def children(self, node: Sequence[int]) -> Iterator[Tuple[int, Node]]:
        """Observed children ``(k, node + (k,))`` of a node."""
        node = tuple(node)
        for k in range(self._m):
            child = node + (k,)
            if child in self._counts:
                yield k, child


def build_count_trie(dataset: Dataset) -> CountTrie:
    """Count every (string, next symbol) pair for string lengths 0..L."""
    m, L = dataset.m, dataset.depth_bound
    if m ** (L + 1) >= 2 ** 62:
        raise InputError(f"alphabet size {m} with depth {L} is too large to index the count trie")

    counts: Dict[Node, np.ndarray] = {(): np.zeros(m, dtype=np.int64)}
    for depth in range(L + 1):
        keys = []
        for seq in dataset.sequences:
            T = len(seq)
            # code = sum_j z[t-j] * m^(j-1): the most recent symbol is the lowest digit
            code = np.zeros(T - L, dtype=np.int64)
            for j in range(depth, 0, -1):
                code = code * m + seq[L - j:T - j]
            keys.append(code * m + seq[L:])
        if not keys:
            continue
        unique, frequency = np.unique(np.concatenate(keys), return_counts=True)
        for key, n in zip(unique.tolist(), frequency.tolist()):
            symbol, code = key % m, key // m
            node = []
            for _ in range(depth):
                node.append(code % m)
                code //= m
            vector = counts.setdefault(tuple(node), np.zeros(m, dtype=np.int64))
            vector[symbol] = n

    trie = CountTrie(m, L, counts)
    logger.debug(f"Built count trie: depth {L}, {len(trie)} observed nodes, {trie.total} transitions")
    return trie


def counts_for_tree(trie: CountTrie, tree) -> Dict[Node, np.ndarray]:
    """Count vector n_{s,.} for every context of ``tree``."""
    return {context: trie.counts(context) for context in tree.contexts}
