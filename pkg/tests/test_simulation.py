import numpy as np
import pytest

from renewal.core.errors import ContractViolation, DocumentError, InputError
from renewal.services.context_tree import AllowedMatrix, is_renewing
from renewal.services.simulation import ProbabilisticContextTree, load_pct, model1, model2, save_pct, simulate


class TestModels:
    def test_model1_is_zero_renewing(self):
        pct = model1()
        assert len(pct.tree) == 7
        assert pct.depth == 6
        assert is_renewing(pct.tree, 0)
        assert not is_renewing(pct.tree, 1)

    def test_model2_is_not_zero_renewing(self):
        pct = model2()
        assert len(pct.tree) == 8
        assert pct.depth == 6
        assert not is_renewing(pct.tree, 0)

    def test_distributions_sum_to_one(self):
        for pct in (model1(), model2()):
            for context in pct.tree.contexts:
                assert pct.distribution(context).sum() == pytest.approx(1.0)


class TestValidation:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(InputError):
            ProbabilisticContextTree.from_strings(2, {"0": (0.5, 0.4), "1": (0.5, 0.5)})

    def test_positive_probability_on_prohibited_transition(self):
        allowed = AllowedMatrix(((False, True), (True, True)))
        with pytest.raises(InputError):
            ProbabilisticContextTree.from_strings(2, {"0": (0.5, 0.5), "1": (0.5, 0.5)}, allowed)

    def test_contexts_must_form_a_tree(self):
        with pytest.raises(InputError):
            ProbabilisticContextTree.from_strings(2, {"0": (0.5, 0.5), "011": (0.5, 0.5), "111": (0.5, 0.5)})


class TestSimulate:
    def test_same_seed_same_sequences(self):
        first = simulate(model1(), 2, 200, seed=42)
        second = simulate(model1(), 2, 200, seed=42)
        assert [s.tolist() for s in first.sequences] == [s.tolist() for s in second.sequences]

    def test_different_seeds_differ(self):
        first = simulate(model1(), 1, 200, seed=1)
        second = simulate(model1(), 1, 200, seed=2)
        assert first.sequences[0].tolist() != second.sequences[0].tolist()

    def test_shape_and_depth_bound(self):
        dataset = simulate(model2(), 3, 100, seed=5, depth_bound=8)
        assert dataset.lengths == [100, 100, 100]
        assert dataset.depth_bound == 8
        assert dataset.m == 2

    def test_point_mass(self):
        pct = ProbabilisticContextTree.from_strings(2, {"0": (1.0, 0.0), "1": (1.0, 0.0)})
        dataset = simulate(pct, 2, 50, seed=0)
        assert all(not s.any() for s in dataset.sequences)

    def test_transition_frequencies(self):
        pct = ProbabilisticContextTree.from_strings(2, {"0": (0.2, 0.8), "1": (0.7, 0.3)})
        sequence = simulate(pct, 1, 20000, seed=3).sequences[0]
        after_zero = sequence[1:][sequence[:-1] == 0]
        assert after_zero.mean() == pytest.approx(0.8, abs=0.02)

    def test_respects_allowed_transitions(self, allowed5, allowed5_pct):
        dataset = simulate(allowed5_pct, 2, 500, seed=9)
        dataset.check_transitions(allowed5)
        assert set(np.concatenate(dataset.sequences).tolist()) == set(range(5))

    def test_length_must_exceed_depth(self):
        with pytest.raises(ContractViolation):
            simulate(model1(), 1, 6, seed=0)

    def test_starts_from_depth_bound_symbols(self):
        pct = ProbabilisticContextTree.from_strings(2, {"0": (0.3, 0.7), "1": (0.6, 0.4)})
        dataset = simulate(pct, 1, 40, seed=8, burn_in=0, depth_bound=5)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(8, spawn_key=(0,))))
        symbols = rng.integers(0, 2, size=5).tolist()
        for u in rng.random(40):
            symbols.append(int(np.searchsorted(np.cumsum(pct.distribution((symbols[-1],))), u, side="right")))
        assert dataset.sequences[0].tolist() == symbols[5:]

    @pytest.mark.slow
    def test_no_prohibited_pair_in_a_million_symbols(self, allowed5, allowed5_pct):
        dataset = simulate(allowed5_pct, 4, 250_000, seed=31)
        dataset.check_transitions(allowed5)
        assert sum(dataset.lengths) == 1_000_000


class TestPctFile:
    def test_saved_model_loads_back(self, tmp_path):
        path = save_pct(model2(), tmp_path / "pct.json")
        loaded = load_pct(path)
        assert loaded.tree == model2().tree
        for context in loaded.tree.contexts:
            assert loaded.distribution(context).tolist() == model2().distribution(context).tolist()

    def test_malformed_file(self, write_file):
        with pytest.raises(DocumentError):
            load_pct(write_file("pct.json", "{not json"))
        with pytest.raises(DocumentError, match="pct.json"):
            load_pct(write_file("pct.json", "[1, 2]"))

    def test_allowed_matrix_is_kept(self, tmp_path, allowed5_pct):
        loaded = load_pct(save_pct(allowed5_pct, tmp_path / "pct.json"))
        assert loaded.allowed is not None
        assert not loaded.allowed.is_allowed(4, 4)
