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
    PlugIn,
    TargetKnn,
)
from adaptive_transfer.trees import (
    TreeObjective,
    TreeSearchStrategy,
    counting_bound,
    dedupe_partitions,
    enumerate_restricted_trees,
    erm_select_classifier,
    erm_select_tree,
    gap_thresholds,
    greedy_trees,
    holdout_errors,
    random_partitions,
    restricted_partitions,
    restriction,
    search_trees,
    tree_objective,
)


def brute_restrictions_1d(S, L, grid_n, fine=np.linspace(-0.5, 1.5, 401)):
    """Restrictions reachable with thresholds on a fine grid (L <= 2, 1-d)."""
    out = set()
    taus = [j / grid_n for j in range(grid_n + 1)]
    parts = [DecisionTreePartition(1)]
    if L == 2:
        parts = [DecisionTreePartition(1).refine(1, 1, s) for s in fine]
    for p in parts:
        leaves = p.leaves(S) - 1
        for a in taus:
            for b in (taus if L == 2 else [None]):
                vals = np.array([a, b] if L == 2 else [a])
                out.add(tuple(vals[leaves]))
    return out


@pytest.fixture(scope="module")
def small_problem():
    rng = np.random.default_rng(11)
    X = rng.random((40, 2))
    yP = (rng.random(40) < 0.3 + 0.4 * (X[:, 0] > 0.5)).astype(int)
    XQ = rng.random((30, 2))
    yQ = (XQ[:, 0] > 0.5).astype(int)
    return Dataset(X, yP, Origin.SOURCE), Dataset(XQ, yQ)


class TestEnumeration:
    def test_two_points_two_leaves(self):
        S = np.array([[0.2], [0.8]])
        trees = enumerate_restricted_trees(S, 2, 2)
        got = {restriction(h, S) for h in trees}
        assert len(got) == len(trees)
        assert got == brute_restrictions_1d(S, 2, 2)
        assert len(trees) <= counting_bound(2, 1, 2) == 1296

    def test_single_leaf(self):
        trees = enumerate_restricted_trees(np.array([[0.3]]), 1, 4)
        assert [h.taus for h in trees] == [(0.0,), (0.25,), (0.5,), (0.75,), (1.0,)]

    def test_zero_leaves_rejected(self):
        with pytest.raises(ValueError):
            enumerate_restricted_trees(np.array([[0.3]]), 0, 4)
        with pytest.raises(ValueError):
            restricted_partitions(np.array([[0.3]]), 0)

    def test_gap_thresholds(self):
        t = gap_thresholds(np.array([0.8, 0.2, 0.2]))
        assert t.tolist() == [-0.8, 0.5, 1.8]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 2), st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_counting_bound(self, n, d, L, seed):
        S = np.random.default_rng(seed).random((n, d))
        trees = enumerate_restricted_trees(S, L, n)
        restr = {restriction(h, S) for h in trees}
        assert len(restr) == len(trees)
        assert len(restr) <= counting_bound(L, d, n)

    def test_exhaustive_covers_random_splits(self):
        rng = np.random.default_rng(3)
        S = rng.random((5, 2))
        exhaustive = {tuple(p.leaves(S)) for p in restricted_partitions(S, 3)}
        for p in random_partitions(S, 3, 300, rng):
            assert tuple(p.leaves(S)) in exhaustive

    def test_monte_carlo_reproducible(self):
        S = np.random.default_rng(0).random((20, 2))
        a = random_partitions(S, 3, 50, np.random.default_rng(42))
        b = random_partitions(S, 3, 50, np.random.default_rng(42))
        assert a == b
        assert all(p.n_leaves == 3 for p in a)

    def test_dedupe_keeps_first(self):
        S = np.array([[0.2], [0.8]])
        p1 = DecisionTreePartition(1).refine(1, 1, 0.5)
        p2 = DecisionTreePartition(1).refine(1, 1, 0.6)
        p3 = DecisionTreePartition(1).refine(1, 1, 0.9)
        assert dedupe_partitions([p1, p2, p3], S) == [p1, p3]


class TestTreeErm:
    def test_single_candidate(self, small_problem):
        P, Q = small_problem
        h = DecisionTreeFunction.constant_half(2)
        assert erm_select_tree([h], 1.0, P, Q) is h

    def test_empty_candidates(self, small_problem):
        P, Q = small_problem
        with pytest.raises(ValueError):
            erm_select_tree([], 1.0, P, Q)

    def test_strict_minimum_and_ties(self, small_problem):
        P, Q = small_problem
        cands = enumerate_restricted_trees(P.X[:3], 2, 4)[:40]
        errs = [tree_objective(h, 0.7, P, Q) for h in cands]
        chosen = erm_select_tree(cands, 0.7, P, Q)
        assert cands.index(chosen) == errs.index(min(errs))
        doubled = [chosen, chosen] + cands
        assert erm_select_tree(doubled, 0.7, P, Q) is doubled[0]

    def test_objective_matches_kernel(self, small_problem):
        P, Q = small_problem
        sig = np.geomspace(0.05, 40, 9)
        obj = TreeObjective(P, Q, sig)
        part = DecisionTreePartition(2).refine(1, 1, 0.5)
        _, ordered = obj.ordered_leaves(part)
        nums = np.array([[10, 30], [20, 20], [0, 40]])
        E = obj.errors(ordered, nums)
        for b, row in enumerate(nums):
            h = DecisionTreeFunction.on_grid(part, row.tolist(), 40)
            assert E[b].tolist() == [tree_objective(h, s, P, Q) for s in sig]
            np.testing.assert_array_equal(obj.tree_errors(h), E[b])

    def test_grid_tau_search_is_optimal(self, small_problem):
        P, Q = small_problem
        P8 = Dataset(P.X[:8], P.y[:8], Origin.SOURCE)
        sig = np.array([0.3, 1.0, 3.0])
        obj = TreeObjective(P8, Q, sig)
        part = DecisionTreePartition(2).refine(1, 2, 0.4)
        nums, errs = obj.search_taus(part, TreeSearchStrategy(tau_mode="grid"))
        for j, s in enumerate(sig):
            brute = min(tree_objective(DecisionTreeFunction.on_grid(part, [a, b], 8), s, P8, Q)
                        for a in range(9) for b in range(9))
            assert errs[j] == brute
            assert tree_objective(DecisionTreeFunction.on_grid(part, nums[j].tolist(), 8), s, P8, Q) == brute
        local_nums, local_errs = obj.search_taus(part, TreeSearchStrategy())
        assert np.all(local_errs >= errs)

    def test_search_trees_reports_true_errors(self, small_problem):
        P, Q = small_problem
        sig = np.geomspace(0.1, 10, 5)
        obj = TreeObjective(P, Q, sig)
        trees, errs = search_trees(obj, 2, TreeSearchStrategy.monte_carlo(20), np.random.default_rng(0))
        for h, e, s in zip(trees, errs, sig):
            assert h.grid_n == P.n and h.n_leaves == 2
            assert tree_objective(h, s, P, Q) == e

    def test_exhaustive_beats_monte_carlo(self, small_problem):
        P, Q = small_problem
        P6 = Dataset(P.X[:6], P.y[:6], Origin.SOURCE)
        obj = TreeObjective(P6, Q, np.array([0.5, 2.0]))
        grid = dict(tau_mode="grid")
        _, ex = search_trees(obj, 2, TreeSearchStrategy.exhaustive(**grid), np.random.default_rng(0))
        _, mc = search_trees(obj, 2, TreeSearchStrategy.monte_carlo(10, **grid), np.random.default_rng(0))
        assert np.all(ex <= mc)

    def test_greedy_monotone(self, small_problem):
        P, Q = small_problem
        obj = TreeObjective(P, Q, np.array([0.5, 2.0]))
        path, trace = greedy_trees(obj, 1, 4, TreeSearchStrategy.greedy(4), np.random.default_rng(0))
        assert [h.n_leaves for h in path] == [1, 2, 3, 4]
        assert all(b <= a for a, b in zip(trace, trace[1:]))
        for h, e in zip(path, trace):
            assert tree_objective(h, 2.0, P, Q) == e

    def test_strategy_validation(self):
        with pytest.raises(ValueError):
            TreeSearchStrategy(mode="nope")
        with pytest.raises(ValueError):
            TreeSearchStrategy.monte_carlo(0)
        with pytest.raises(ValueError):
            TreeSearchStrategy(tau_mode="nope")


class TestClassifierErm:
    def test_constants(self):
        hold = Dataset(np.zeros((4, 1)), [1, 1, 1, 1])
        fam = [Constant(0), Constant(1)]
        assert erm_select_classifier(fam, hold) is fam[1]

    def test_bayes_on_separable(self):
        rng = np.random.default_rng(0)
        X = rng.random((40, 2))
        hold = Dataset(X, (X[:, 0] > 0.5).astype(int))
        bayes = PlugIn(lambda Z: (Z[:, 0] > 0.5).astype(int), "bayes")
        fam = [Constant(0), TargetKnn(1.0, Dataset(rng.random((10, 2)), rng.integers(0, 2, 10))), bayes]
        assert erm_select_classifier(fam, hold) is bayes
        assert holdout_errors([bayes], hold)[0] == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            erm_select_classifier([], Dataset(np.zeros((1, 1)), [0]))

    def test_brute_force_scan(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            X = rng.random((40, 2))
            hold = Dataset(X, rng.integers(0, 2, 40))
            fam = []
            for _ in range(rng.integers(1, 6)):
                kind = rng.integers(3)
                if kind == 0:
                    fam.append(Constant(int(rng.integers(2))))
                elif kind == 1:
                    ref = Dataset(rng.random((12, 2)), rng.integers(0, 2, 12))
                    fam.append(TargetKnn(float(rng.uniform(0.1, 3)), ref))
                else:
                    a, t = int(rng.integers(2)), float(rng.random())
                    fam.append(PlugIn(lambda Z, a=a, t=t: (Z[:, a] > t).astype(int)))
            errs = [sum(int(c_ != y) for c_, y in zip(_labels(c, X), hold.y)) for c in fam]
            chosen = erm_select_classifier(fam, hold)
            idx = next(i for i, c in enumerate(fam) if c is chosen)
            assert errs[idx] == min(errs)
            assert idx == errs.index(min(errs))


def _labels(c, X):
    from adaptive_transfer.neighbours import classify

    return [classify(c, x) for x in X]
