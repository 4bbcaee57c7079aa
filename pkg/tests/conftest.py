import numpy as np
import pytest

from renewal.models.schemas import RenderOrder
from renewal.services.context_tree import AllowedMatrix, parse_context, validate_tree
from renewal.services.sequences import Alphabet, Dataset
from renewal.services.simulation import ProbabilisticContextTree

# Allowed transitions between five symbols; rows are "from", columns "to".
FIVE_SYMBOL_ALLOWED = (
    (True, True, True, True, True),
    (True, False, True, True, True),
    (True, True, False, False, False),
    (True, False, True, True, True),
    (False, False, True, True, False),
)


def _make_tree(m, L, strings, order=RenderOrder.OLDEST_FIRST):
    return validate_tree([parse_context(s, m, order) for s in strings], m, L)


@pytest.fixture
def make_tree():
    """Build a validated tree from context strings (oldest-first by default)."""
    return _make_tree


@pytest.fixture
def tree_one():
    """Binary depth-5 tree in which 0 is a renewal state."""
    return _make_tree(2, 5, ["0", "01", "011", "0111", "01111", "11111"])


@pytest.fixture
def tree_two():
    """Binary depth-5 tree without renewal states."""
    return _make_tree(2, 5, ["0", "001", "101", "011", "00111", "10111", "01111", "11111"])


@pytest.fixture
def allowed5():
    return AllowedMatrix(FIVE_SYMBOL_ALLOWED)


@pytest.fixture
def allowed5_pct(allowed5):
    """Depth-one model moving uniformly to the allowed successors of each symbol."""
    table = {}
    for b in range(allowed5.m):
        row = allowed5.matrix[b].astype(float)
        table[str(b)] = tuple(row / row.sum())
    return ProbabilisticContextTree.from_strings(allowed5.m, table, allowed5)


@pytest.fixture
def alternating():
    """The single sequence 0 1 0 1 0 1 with L=2."""
    return Dataset(Alphabet(2), (np.array([0, 1, 0, 1, 0, 1]),), 2)


@pytest.fixture
def empty_binary():
    """No sequences at all: every count is zero."""
    return Dataset(Alphabet(2), (), 2)


@pytest.fixture
def random_binary():
    """Three short binary sequences with a fixed seed."""
    rng = np.random.Generator(np.random.Philox(12345))
    sequences = tuple(rng.integers(0, 2, size=40) for _ in range(3))
    return Dataset(Alphabet(2), sequences, 2)


@pytest.fixture
def write_file(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return write
