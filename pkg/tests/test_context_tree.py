import itertools
from collections import deque

import numpy as np
import pytest

from renewal.core.config import settings
from renewal.core.errors import (
    ContractViolation,
    DocumentError,
    EmptySupportError,
    EnumerationBoundError,
    InputError,
    TreeValidationError,
)
from renewal.models.schemas import RenderOrder
from renewal.services.context_tree import (
    AllowedMatrix,
    ContextTree,
    NoProhibitedInner,
    NotRenewing,
    Renewing,
    TreePrior,
    enumerate_trees,
    grow_set,
    has_prohibited_inner,
    is_renewing,
    load_allowed_matrix,
    load_tree,
    minimal_tree,
    parse_context,
    prune_set,
    render_context,
    save_tree,
    suffix_map,
    tree_space_size,
    tree_violations,
    validate_tree,
)


def parse_all(strings, m=2, order=RenderOrder.OLDEST_FIRST):
    return [parse_context(s, m, order) for s in strings]


class TestValidation:
    def test_suffix_property_violation(self):
        with pytest.raises(TreeValidationError) as excinfo:
            validate_tree(parse_all(["0", "1", "11"]), 2, 3)
        assert any("suffix property" in v and "11" in v for v in excinfo.value.violations)

    def test_fullness_violation(self):
        violations = tree_violations(parse_all(["0", "011", "111"]), 2, 3)
        assert any("fullness" in v and "01" in v for v in violations)

    def test_full_irreducible_tree_written_root_to_leaf(self):
        tree = validate_tree(parse_all(["0", "100", "101", "110", "111"], order=RenderOrder.RECENT_FIRST), 2, 3)
        assert len(tree) == 5
        assert tree.depth == 3

    def test_other_valid_trees(self, make_tree):
        assert len(make_tree(2, 2, ["01", "00", "10", "11"])) == 4
        assert len(make_tree(2, 4, ["0", "01", "011", "0111", "1111"])) == 5

    def test_empty_set(self):
        assert tree_violations([], 2, 2) == ["the context set is empty"]

    def test_depth_bound(self):
        violations = tree_violations(parse_all(["0", "01", "11"]), 2, 1)
        assert any("depth bound" in v for v in violations)

    def test_symbol_outside_alphabet(self):
        violations = tree_violations([(0,), (1,), (2,)], 2, 1)
        assert any("outside" in v for v in violations)

    def test_validation_is_idempotent(self, tree_two):
        again = validate_tree(tree_two.contexts, 2, 5)
        assert again == tree_two
        assert hash(again) == hash(tree_two)

    def test_canonical_order_independent_of_input_order(self, tree_one):
        shuffled = list(reversed(tree_one.contexts))
        assert validate_tree(shuffled, 2, 5) == tree_one


class TestRendering:
    def test_oldest_first_is_default(self):
        assert render_context((1, 0), 2) == "01"
        assert render_context((1, 0), 2, RenderOrder.RECENT_FIRST) == "10"

    def test_large_alphabet_uses_separator(self):
        assert render_context((11, 3), 12) == "3.11"
        assert parse_context("3.11", 12) == (11, 3)

    def test_parse_rejects_garbage(self):
        with pytest.raises(InputError):
            parse_context("0x", 2)

    def test_tree_file(self, tmp_path, tree_two):
        path = save_tree(tree_two, 5, tmp_path / "tree.json")
        loaded, depth_bound = load_tree(path)
        assert loaded == tree_two
        assert depth_bound == 5

    def test_malformed_tree_file(self, write_file):
        with pytest.raises(DocumentError):
            load_tree(write_file("tree.json", "{\"L\": 2,"))
        with pytest.raises(DocumentError):
            load_tree(write_file("tree.json", '{"L": 2, "m": 2, "contexts": []}'))


class TestSuffixMap:
    def test_depth_one_match(self, make_tree):
        tree = make_tree(2, 2, ["0", "01", "11"])
        assert suffix_map(tree, [1, 1, 0]) == (0,)

    def test_deeper_match(self, make_tree):
        tree = make_tree(2, 2, ["0", "01", "11"])
        context = suffix_map(tree, [1, 0, 1])
        assert context == (1, 0)
        assert render_context(context, 2) == "01"

    def test_maximal_tree_returns_last_symbols(self):
        tree = ContextTree.maximal(3, 3)
        past = [2, 0, 1, 2, 2, 1]
        assert suffix_map(tree, past) == (1, 2, 2)

    def test_end_limits_the_past(self, make_tree):
        tree = make_tree(2, 2, ["0", "01", "11"])
        assert suffix_map(tree, [0, 1, 0, 1], end=3) == (0,)

    def test_short_past(self, make_tree):
        tree = make_tree(2, 2, ["0", "01", "11"])
        with pytest.raises(ContractViolation):
            suffix_map(tree, [1])


class TestRenewal:
    def test_tree_one_is_zero_renewing(self, tree_one):
        assert is_renewing(tree_one, 0)
        assert not is_renewing(tree_one, 1)

    def test_tree_two_has_no_renewal_states(self, tree_two):
        assert not is_renewing(tree_two, 0)
        assert not is_renewing(tree_two, 1)

    def test_depth_one_tree_renews_every_state(self):
        tree = ContextTree.depth_one(4)
        assert all(is_renewing(tree, a) for a in range(4))

    def test_state_outside_alphabet(self, tree_one):
        with pytest.raises(ContractViolation):
            is_renewing(tree_one, 2)

    def test_renewing_split_partitions_tree_space(self):
        trees = list(enumerate_trees(3, 2))
        renewing = [t for t in trees if Renewing(0).admits(t)]
        not_renewing = [t for t in trees if NotRenewing(0).admits(t)]
        assert len(renewing) + len(not_renewing) == len(trees) == 25
        assert not set(renewing) & set(not_renewing)


class TestProhibitedInner:
    def test_prohibited_pair_at_leaf_is_tolerated(self, allowed5):
        tree = ContextTree.depth_one(5).grown((4,))
        assert (4, 4) in tree
        assert not has_prohibited_inner(tree, allowed5)

    def test_prohibited_pair_in_inner_node(self, allowed5):
        tree = ContextTree.depth_one(5).grown((4,)).grown((4, 4))
        assert render_context((4, 4, 0), 5) in tree.render()
        assert has_prohibited_inner(tree, allowed5)

    def test_allowed_inner_pair(self, allowed5):
        # 0 -> 4 is allowed, 2 -> 4 is not
        assert not has_prohibited_inner(ContextTree.depth_one(5).grown((4,)).grown((4, 0)), allowed5)
        assert has_prohibited_inner(ContextTree.depth_one(5).grown((4,)).grown((4, 2)), allowed5)

    def test_all_allowed_matrix(self):
        assert not has_prohibited_inner(ContextTree.maximal(2, 4), AllowedMatrix.all_allowed(2))

    def test_matrix_needs_successors(self):
        with pytest.raises(InputError):
            AllowedMatrix(((True, True), (False, False)))

    def test_matrix_file_that_is_not_an_object(self, write_file):
        with pytest.raises(DocumentError, match="allowed.json"):
            load_allowed_matrix(write_file("allowed.json", "[[true]]"))

    def test_matrix_file(self, write_file):
        path = write_file("allowed.json", '{"m": 2, "allowed": [[true, true], [true, false]]}')
        allowed = load_allowed_matrix(path)
        assert allowed.is_allowed(1, 0)
        assert not allowed.is_allowed(1, 1)


class TestMoves:
    def test_grow_set_of_depth_one_tree(self, make_tree):
        prior = TreePrior.uniform(2, 2)
        grown = grow_set(ContextTree.depth_one(2), prior)
        assert set(grown) == {make_tree(2, 2, ["00", "10", "1"]), make_tree(2, 2, ["0", "01", "11"])}
        assert len(grown) == 2

    def test_grow_set_is_canonically_ordered(self):
        prior = TreePrior.uniform(3, 3)
        grown = grow_set(ContextTree.depth_one(3), prior)
        assert list(grown) == [ContextTree.depth_one(3).grown((k,)) for k in range(3)]

    def test_maximal_tree_cannot_grow(self):
        assert grow_set(ContextTree.maximal(2, 3), TreePrior.uniform(2, 3)) == ()

    def test_grow_respects_renewal_constraint(self, make_tree):
        prior = TreePrior(2, 2, (Renewing(0),))
        assert grow_set(ContextTree.depth_one(2), prior) == (make_tree(2, 2, ["0", "01", "11"]),)

    def test_prune_set(self, make_tree):
        prior = TreePrior.uniform(2, 2)
        assert prune_set(make_tree(2, 2, ["00", "10", "1"]), prior) == (ContextTree.depth_one(2),)
        assert prune_set(ContextTree.depth_one(2), prior) == ()

    def test_grow_and_prune_are_inverse(self):
        prior = TreePrior.uniform(2, 3)
        for tree in enumerate_trees(3, 2):
            for grown in grow_set(tree, prior):
                assert tree in prune_set(grown, prior)
            for pruned in prune_set(tree, prior):
                assert tree in grow_set(pruned, prior)

    def test_grown_tree_keeps_inner_nodes_consistent(self, tree_two):
        grown = tree_two.grown((0,))
        rebuilt = ContextTree.from_contexts(2, grown.contexts)
        assert grown.internal_nodes == rebuilt.internal_nodes

    @pytest.mark.parametrize("constraint", [Renewing(0), NotRenewing(0), Renewing(1), NotRenewing(1)])
    def test_constrained_support_is_connected(self, constraint):
        prior = TreePrior(2, 3, (constraint,))
        support = {tree for tree in enumerate_trees(3, 2, prior)}
        reached = {prior.initial_tree}
        queue = deque(reached)
        while queue:
            tree = queue.popleft()
            for neighbour in itertools.chain(grow_set(tree, prior), prune_set(tree, prior)):
                if neighbour not in reached:
                    reached.add(neighbour)
                    queue.append(neighbour)
        assert reached == support


class TestPrior:
    def test_minimal_tree_uniform(self):
        assert minimal_tree(TreePrior.uniform(3, 2)) == ContextTree.depth_one(3)

    def test_minimal_tree_not_renewing(self, make_tree):
        prior = TreePrior(2, 2, (NotRenewing(1),))
        assert prior.initial_tree == make_tree(2, 2, ["0", "01", "11"])

    def test_minimal_tree_renewing(self):
        assert TreePrior(2, 4, (Renewing(0),)).initial_tree == ContextTree.depth_one(2)

    def test_empty_support_names_hypothesis(self):
        with pytest.raises(EmptySupportError, match="H_abar"):
            TreePrior.for_hypothesis(2, 1, 0, renewing=False)

    def test_log_h_outside_support(self, tree_two):
        prior = TreePrior.for_hypothesis(2, 5, 0, renewing=True)
        assert prior.log_h(tree_two) == float("-inf")
        assert prior.log_h(ContextTree.depth_one(2)) == 0.0

    def test_log_weight(self, tree_one):
        prior = TreePrior(2, 5, log_weight=lambda tree: -float(len(tree)))
        assert prior.log_h(tree_one) == -6.0

    def test_depth_bound_excludes_deep_trees(self, tree_one):
        assert not TreePrior.uniform(2, 4).supports(tree_one)

    def test_state_must_be_a_symbol(self):
        with pytest.raises(InputError):
            TreePrior(2, 2, (Renewing(3),))


class TestEnumeration:
    @pytest.mark.parametrize("L, expected", [(1, 1), (2, 4), (3, 25), (4, 676)])
    def test_tree_space_size(self, L, expected):
        assert tree_space_size(2, L) == expected

    @pytest.mark.parametrize("L", [2, 3])
    def test_enumeration_matches_size(self, L):
        trees = list(enumerate_trees(L, 2))
        assert len(trees) == len(set(trees)) == tree_space_size(2, L)
        for tree in trees:
            assert not tree_violations(tree.contexts, 2, L)

    def test_ternary_depth_two(self):
        # g(1) = 2, g(2) = 1 + 2**3 = 9
        assert len(list(enumerate_trees(2, 3))) == 8

    def test_prior_filters_enumeration(self, allowed5):
        prior = TreePrior.uniform(5, 2, allowed5)
        trees = list(enumerate_trees(2, 5, prior))
        assert len(trees) == tree_space_size(5, 2)
        assert all(prior.supports(tree) for tree in trees)

    def test_refuses_beyond_limit(self, monkeypatch):
        monkeypatch.setattr(settings, "enumeration_limit", 10)
        with pytest.raises(EnumerationBoundError, match="25"):
            enumerate_trees(3, 2)

    def test_refuses_huge_space(self):
        with pytest.raises(EnumerationBoundError):
            enumerate_trees(6, 4)


def random_allowed_matrices(m, count, seed):
    """Valid allowed-transition matrices drawn with a fixed seed."""
    rng = np.random.Generator(np.random.Philox(seed))
    matrices = []
    while len(matrices) < count:
        try:
            matrices.append(AllowedMatrix(tuple(map(tuple, rng.random((m, m)) < 0.6))))
        except InputError:
            continue
    return matrices


def constrained_priors(m, L, matrices):
    """Uniform, per-hypothesis and prohibited-inner priors, skipping empty supports."""
    priors = [TreePrior.uniform(m, L)]
    for allowed in [None, *matrices]:
        if allowed is not None:
            priors.append(TreePrior(m, L, (NoProhibitedInner(allowed),), name="prohibited inner only"))
        for state in range(m):
            for renewing in (True, False):
                try:
                    priors.append(TreePrior.for_hypothesis(m, L, state, renewing, allowed))
                except EmptySupportError:
                    continue
    return priors


PRIOR_SPACES = [
    (2, 3, random_allowed_matrices(2, 3, seed=1)),
    (3, 2, random_allowed_matrices(3, 4, seed=2)),
]


class TestKernelProperties:
    @pytest.mark.parametrize("m, L, matrices", PRIOR_SPACES)
    def test_moves_are_reversible_under_constraints(self, m, L, matrices):
        pairs = 0
        for prior in constrained_priors(m, L, matrices):
            for tree in enumerate_trees(L, m, prior):
                for grown in grow_set(tree, prior):
                    assert prior.supports(grown)
                    assert tree in prune_set(grown, prior)
                    pairs += 1
                for pruned in prune_set(tree, prior):
                    assert prior.supports(pruned)
                    assert tree in grow_set(pruned, prior)
                    pairs += 1
        assert pairs > 0

    @pytest.mark.parametrize("m, L", [(2, 3), (3, 2)])
    def test_grow_set_matches_edge_definition(self, m, L):
        prior = TreePrior.uniform(m, L)
        trees = list(enumerate_trees(L, m))
        for tree in trees:
            grown = set(grow_set(tree, prior))
            for other in trees:
                adjacent = len(tree.context_set ^ other.context_set) == m + 1 and len(other) > len(tree)
                assert (other in grown) == adjacent

    @pytest.mark.parametrize("seed", range(5))
    def test_random_walk_can_be_retraced(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        matrices = random_allowed_matrices(2, 1, seed=seed)
        priors = constrained_priors(2, 4, matrices)
        prior = priors[2 * seed % len(priors)]
        path = [prior.initial_tree]
        for _ in range(200):
            neighbours = grow_set(path[-1], prior) + prune_set(path[-1], prior)
            path.append(neighbours[int(rng.integers(len(neighbours)))])
        for later, earlier in zip(reversed(path[1:]), reversed(path[:-1])):
            assert earlier in grow_set(later, prior) + prune_set(later, prior)
