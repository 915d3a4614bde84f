import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_transfer.core import (
    Constant,
    Dataset,
    DecisionTreeFunction,
    DecisionTreePartition,
    Origin,
    ParameterVector,
    SourceCalibrated,
    SplitStep,
    TargetKnn,
    eval_tree,
    leaf_of,
    manifest_path,
)
from adaptive_transfer.neighbours import classify


def replay_cells(partition, X):
    """Independent oracle: explicit cell membership masks built by replaying the steps."""
    cells = [np.ones(len(X), dtype=bool)]
    for s in partition.steps:
        cell = cells[s.leaf - 1]
        upper = X[:, s.axis - 1] >= s.threshold
        cells[s.leaf - 1] = cell & upper
        cells.append(cell & ~upper)
    return np.stack(cells)


@st.composite
def partitions(draw, d=2, max_steps=5):
    steps = []
    for t in range(draw(st.integers(0, max_steps))):
        steps.append(SplitStep(draw(st.integers(1, t + 1)), draw(st.integers(1, d)),
                               draw(st.floats(-0.2, 1.2, allow_nan=False))))
    return DecisionTreePartition(d, tuple(steps))


class TestDataset:
    def test_ordering_and_views(self):
        D = Dataset(np.arange(10.0).reshape(5, 2), [0, 1, 1, 0, 1])
        assert D.n == 5 and D.d == 2
        assert D.head(2).n == 2 and D.tail(2).n == 3
        np.testing.assert_array_equal(D.head(2).concat(D.tail(2)).X, D.X)
        assert D[3].label == 0

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 1)), [0, 2])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 1)), [0, 1])

    def test_immutable(self):
        D = Dataset(np.zeros((2, 1)), [0, 1])
        with pytest.raises(ValueError):
            D.X[0, 0] = 1.0

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        D = Dataset(rng.random((7, 3)), rng.integers(0, 2, 7), Origin.SOURCE)
        p = D.to_csv(tmp_path / "d.csv")
        assert p.read_text().splitlines()[0] == "x1,x2,x3,label"
        meta = json.loads(manifest_path(p).read_text())
        assert meta == {"origin": "P", "d": 3, "n": 7}
        E = Dataset.from_csv(p)
        np.testing.assert_array_equal(E.X, D.X)
        np.testing.assert_array_equal(E.y, D.y)
        assert E.origin is Origin.SOURCE

    def test_manifest_mismatch_is_rejected(self, tmp_path):
        D = Dataset(np.zeros((2, 1)), [0, 1])
        p = D.to_csv(tmp_path / "d.csv")
        manifest_path(p).write_text(json.dumps({"origin": "Q", "d": 1, "n": 5}))
        with pytest.raises(ValueError):
            Dataset.from_csv(p)


class TestLeafOf:
    def test_empty_partition(self):
        assert leaf_of(DecisionTreePartition(2), (0.3, 0.9)) == 1

    def test_single_split_keeps_upper_side(self):
        part = DecisionTreePartition(2).refine(1, 1, 0.5)
        assert leaf_of(part, (0.7, 0.1)) == 1
        assert leaf_of(part, (0.2, 0.1)) == 2

    def test_two_steps_trace(self):
        # step 1: cell 1 = {x1 >= .5}, cell 2 = {x1 < .5}
        # step 2 splits cell 2: {x1 < .5, x2 >= .5} stays 2, {x1 < .5, x2 < .5} becomes 3
        part = DecisionTreePartition(2).refine(1, 1, 0.5).refine(2, 2, 0.5)
        assert leaf_of(part, (0.2, 0.8)) == 2
        assert leaf_of(part, (0.2, 0.1)) == 3
        assert leaf_of(part, (0.9, 0.1)) == 1
        cells = replay_cells(part, np.array([[0.2, 0.8]]))
        assert cells[:, 0].tolist() == [False, True, False]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            leaf_of(DecisionTreePartition(2), (0.1, 0.2, 0.3))

    def test_invalid_step_rejected(self):
        with pytest.raises(ValueError):
            DecisionTreePartition(2, (SplitStep(2, 1, 0.5),))
        with pytest.raises(ValueError):
            DecisionTreePartition(2, (SplitStep(1, 3, 0.5),))

    @settings(max_examples=60, deadline=None)
    @given(partitions(), st.integers(0, 2**32 - 1))
    def test_exactly_one_cell_matches_leaf_of(self, part, seed):
        X = np.random.default_rng(seed).uniform(-0.5, 1.5, size=(10_000, 2))
        cells = replay_cells(part, X)
        assert np.all(cells.sum(axis=0) == 1)
        np.testing.assert_array_equal(np.argmax(cells, axis=0) + 1, part.leaves(X))


class TestTreeFunction:
    def test_h0_is_half_everywhere(self):
        h = DecisionTreeFunction.constant_half(2)
        assert h.is_h0
        assert eval_tree(h, (123.0, -4.0)) == 0.5

    def test_one_split_values(self):
        h = DecisionTreeFunction(DecisionTreePartition(2).refine(1, 1, 0.5), (0.25, 0.75))
        assert eval_tree(h, (0.9, 0.0)) == 0.25
        assert eval_tree(h, (0.1, 0.0)) == 0.75

    def test_tau_count_and_range(self):
        with pytest.raises(ValueError):
            DecisionTreeFunction(DecisionTreePartition(1), (0.2, 0.3))
        with pytest.raises(ValueError):
            DecisionTreeFunction(DecisionTreePartition(1), (1.5,))

    def test_grid_membership_enforced(self):
        DecisionTreeFunction(DecisionTreePartition(1), (0.25,), grid_n=4)
        with pytest.raises(ValueError):
            DecisionTreeFunction(DecisionTreePartition(1), (0.3,), grid_n=4)

    @given(st.integers(1, 50), st.lists(st.integers(0, 50), min_size=2, max_size=2))
    def test_on_grid_values_on_grid(self, g, nums):
        nums = [min(v, g) for v in nums]
        h = DecisionTreeFunction.on_grid(DecisionTreePartition(1).refine(1, 1, 0.0), nums, g)
        for t in h.taus:
            assert abs(t * g - round(t * g)) < 1e-12

    def test_dict_round_trip(self):
        h = DecisionTreeFunction.on_grid(DecisionTreePartition(2).refine(1, 2, 0.3), [1, 3], 4)
        assert DecisionTreeFunction.from_dict(json.loads(json.dumps(h.to_dict()))) == h


class TestClassify:
    def test_constant(self):
        assert classify(Constant(1), (0.3, 0.3)) == 1

    def test_source_all_ones_with_h0(self):
        ref = Dataset(np.random.default_rng(1).random((9, 2)), np.ones(9, dtype=int), Origin.SOURCE)
        c = SourceCalibrated(0.5, DecisionTreeFunction.constant_half(2), ref)
        assert classify(c, (0.5, 0.5)) == 1

    def test_target_all_zeros(self):
        ref = Dataset(np.random.default_rng(2).random((9, 2)), np.zeros(9, dtype=int))
        assert classify(TargetKnn(3.0, ref), (0.5, 0.5)) == 0

    def test_handle_validation(self):
        ref = Dataset(np.zeros((1, 1)), [1])
        with pytest.raises(ValueError):
            TargetKnn(0.0, ref)
        with pytest.raises(ValueError):
            TargetKnn(1.0, Dataset.empty(1))
        with pytest.raises(ValueError):
            Constant(3)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        ref = Dataset(rng.random((30, 2)), rng.integers(0, 2, 30))
        c = TargetKnn(0.7, ref)
        x = rng.random(2)
        assert len({classify(c, x) for _ in range(5)}) == 1

    def test_dimension_mismatch(self):
        ref = Dataset(np.zeros((3, 2)), [0, 1, 0])
        with pytest.raises(ValueError):
            classify(TargetKnn(1.0, ref), (0.1,))


class TestParameterVector:
    BASE = dict(Delta=0.0, phi=1.0, Lstar=1, d_Q=2, gamma_Q=1, d_P=2, gamma_P=1, C_PQ=2,
                alpha=1, C_M=1, beta=1, C_S=1)

    def test_valid(self):
        assert ParameterVector(**self.BASE).ambient_d == 2

    @pytest.mark.parametrize("key,value", [("Delta", 1.0), ("phi", 0.0), ("Lstar", 0), ("d_Q", 0.5),
                                           ("gamma_Q", 0), ("d_P", 1), ("C_PQ", 1.0), ("alpha", 0),
                                           ("C_M", 0.5), ("beta", 1.5), ("C_S", 0.9)])
    def test_ranges_enforced(self, key, value):
        with pytest.raises(ValueError):
            ParameterVector(**{**self.BASE, key: value})

    def test_infinite_gamma_round_trip(self):
        theta = ParameterVector.from_dict({**self.BASE, "gamma_P": "inf"})
        assert theta.to_dict()["gamma_P"] == "inf"
        assert ParameterVector.from_dict(theta.to_dict()) == theta
