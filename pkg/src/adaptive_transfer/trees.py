"""Candidate decision-tree generation and empirical risk minimisation.

Three ways of producing candidate partitions are provided: exhaustive
enumeration of every partition that is distinguishable on a finite point
set, random refinement sequences, and greedy one-split-at-a-time growth.
Calibration values are searched either over the full grid (small problems
only) or by coordinate descent over a local grid around the within-leaf
source label means.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    ClassifierHandle,
    Dataset,
    DecisionTreeFunction,
    DecisionTreePartition,
)
from ._kernels import tree_errors
from .neighbours import NeighbourTable, predict


@dataclass(frozen=True)
class TreeSearchStrategy:
    """How candidate partitions and their calibration values are searched.

    Parameters
    ----------
    mode : {"exhaustive", "monte_carlo", "greedy"}
    num_splits : int
        Number of random refinement sequences (``monte_carlo``).
    max_leaves : int
        Largest tree grown (``greedy``).
    max_thresholds : int or None
        Random subset of split points per axis tried at each greedy stage.
    tau_mode : {"local", "grid"}
        ``local``: coordinate descent over ``grid_size`` values spanning
        ``+-radius`` around the leaf means.  ``grid``: joint search over the
        whole ``{0, 1/n, ..., 1}^L`` grid.
    """

    mode: str = "monte_carlo"
    num_splits: int = 100
    max_leaves: int = 2
    max_thresholds: int | None = None
    tau_mode: str = "local"
    radius: float = 0.15
    grid_size: int = 7
    max_sweeps: int = 4

    def __post_init__(self):
        if self.mode not in ("exhaustive", "monte_carlo", "greedy"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tau_mode not in ("local", "grid"):
            raise ValueError(f"unknown tau_mode {self.tau_mode!r}")
        if self.num_splits < 1 or self.max_leaves < 1 or self.grid_size < 1:
            raise ValueError("num_splits, max_leaves and grid_size must be >= 1")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")

    @classmethod
    def exhaustive(cls, **kw) -> "TreeSearchStrategy":
        return cls(mode="exhaustive", **kw)

    @classmethod
    def monte_carlo(cls, num_splits: int = 100, **kw) -> "TreeSearchStrategy":
        return cls(mode="monte_carlo", num_splits=num_splits, **kw)

    @classmethod
    def greedy(cls, max_leaves: int = 2, **kw) -> "TreeSearchStrategy":
        return cls(mode="greedy", max_leaves=max_leaves, **kw)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def counting_bound(L: int, d: int, n: int) -> int:
    """Upper bound ``(L d (n + 1))^(2L)`` on distinct tree restrictions to ``n`` points."""
    return (L * d * (n + 1)) ** (2 * L)


# ---------------------------------------------------------------------------
# Candidate partitions
# ---------------------------------------------------------------------------


def gap_thresholds(values: np.ndarray) -> np.ndarray:
    """One threshold per gap of the sorted distinct ``values`` (at most n + 1)."""
    v = np.unique(np.asarray(values, dtype=float))
    if v.size == 0:
        return np.array([0.0])
    inner = (v[:-1] + v[1:]) / 2
    return np.concatenate([[v[0] - 1.0], inner, [v[-1] + 1.0]])


def restricted_partitions(S: np.ndarray, L: int) -> list[DecisionTreePartition]:
    """Partitions with ``L`` leaves covering every distinct labelled restriction to ``S``."""
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S.reshape(-1, 1)
    if L < 1:
        raise ValueError("L must be >= 1 (L = 0 is the constant 1/2 function)")
    if S.shape[0] == 0:
        raise ValueError("point set must be nonempty")
    d = S.shape[1]
    thresholds = [gap_thresholds(S[:, j]) for j in range(d)]
    level = {(1,) * S.shape[0]: DecisionTreePartition(d)}
    for _ in range(L - 1):
        nxt: dict[tuple, DecisionTreePartition] = {}
        for part in level.values():
            for leaf in range(1, part.n_leaves + 1):
                for axis in range(1, d + 1):
                    for s in thresholds[axis - 1]:
                        child = part.refine(leaf, axis, float(s))
                        key = tuple(child.leaves(S))
                        nxt.setdefault(key, child)
        level = nxt
    return list(level.values())


def random_partitions(S: np.ndarray, L: int, num_splits: int, rng: np.random.Generator) -> list[DecisionTreePartition]:
    """``num_splits`` random refinement sequences of ``L - 1`` splits each.

    Each split picks an existing leaf and an axis uniformly at random and
    splits at the coordinate of a uniformly chosen point of ``S``.
    """
    S = np.asarray(S, dtype=float)
    if L < 1:
        raise ValueError("L must be >= 1")
    d = S.shape[1]
    if L == 1:
        return [DecisionTreePartition(d)]
    if S.shape[0] == 0:
        raise ValueError("point set must be nonempty")
    out = []
    for _ in range(num_splits):
        part = DecisionTreePartition(d)
        for _ in range(L - 1):
            leaf = int(rng.integers(1, part.n_leaves + 1))
            axis = int(rng.integers(1, d + 1))
            s = float(S[rng.integers(S.shape[0]), axis - 1])
            part = part.refine(leaf, axis, s)
        out.append(part)
    return out


def dedupe_partitions(parts: Sequence[DecisionTreePartition], S: np.ndarray) -> list[DecisionTreePartition]:
    """Keep the first partition of each distinct labelled restriction to ``S``."""
    seen, out = set(), []
    for p in parts:
        key = p.leaves(S).tobytes()
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


def enumerate_restricted_trees(
    S: np.ndarray,
    L: int,
    grid_n: int,
    strategy: TreeSearchStrategy | None = None,
    rng: np.random.Generator | None = None,
) -> list[DecisionTreeFunction]:
    """Tree functions with ``L`` leaves and every calibration vector on the ``1/grid_n`` grid.

    With the exhaustive strategy the result holds one tree per distinct
    restriction ``h|S``; with ``monte_carlo`` the partitions are random.
    """
    strategy = strategy or TreeSearchStrategy.exhaustive()
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S.reshape(-1, 1)
    if L < 1:
        raise ValueError("L must be >= 1 (L = 0 is the constant 1/2 function)")
    if strategy.mode == "exhaustive":
        parts = restricted_partitions(S, L)
    elif strategy.mode == "monte_carlo":
        parts = random_partitions(S, L, strategy.num_splits, rng or np.random.default_rng())
    else:
        raise ValueError("greedy search needs an objective; use greedy_trees")
    seen, out = set(), []
    for p in parts:
        leaves = p.leaves(S) - 1
        for nums in itertools.product(range(grid_n + 1), repeat=L):
            key = tuple(np.asarray(nums)[leaves])
            if key in seen:
                continue
            seen.add(key)
            out.append(DecisionTreeFunction.on_grid(p, nums, grid_n))
    return out


def restriction(h: DecisionTreeFunction, S: np.ndarray) -> tuple[float, ...]:
    return tuple(h.values(S))


# ---------------------------------------------------------------------------
# ERM over tree functions
# ---------------------------------------------------------------------------


class TreeObjective:
    """Calibration-sample error of source-calibrated classifiers, for many sigmas at once.

    Parameters
    ----------
    source : Dataset
        Source sample (must be nonempty).
    calib : Dataset
        Calibration sample whose empirical error is minimised.
    sigmas : array-like
        Ascending robustness levels.
    grid_n : int, optional
        Calibration grid resolution; defaults to ``source.n``.
    """

    def __init__(self, source: Dataset, calib: Dataset, sigmas, grid_n: int | None = None):
        if source.n == 0:
            raise ValueError("source sample is empty")
        self.source = source
        self.calib = calib
        self.sigmas = np.asarray(sigmas, dtype=float)
        self.grid_n = int(grid_n or source.n)
        self.table = NeighbourTable(source, calib.X)
        self.y = calib.y.astype(np.int64)
        self._ordered_y = np.ascontiguousarray(source.y.astype(np.int64)[self.table.perm])
        self._thr = self.sigmas * self.sigmas
        self.n_evals = 0

    def ordered_leaves(self, partition: DecisionTreePartition) -> tuple[np.ndarray, np.ndarray]:
        """Source leaves (1-based) and their 0-based values along every neighbour order."""
        leaves = partition.leaves(self.source.X)
        return leaves, np.ascontiguousarray(leaves[self.table.perm] - 1)

    def errors(self, ordered_leaf: np.ndarray, tau_nums: np.ndarray) -> np.ndarray:
        """Error counts, shape (B, S), for integer tau vectors ``tau_nums`` (B, L)."""
        tau_nums = np.ascontiguousarray(np.asarray(tau_nums, dtype=np.int64).reshape(len(tau_nums), -1))
        self.n_evals += tau_nums.shape[0]
        return tree_errors(self._ordered_y, ordered_leaf, tau_nums, self.grid_n, self._thr, self.y)

    def tree_errors(self, h: DecisionTreeFunction) -> np.ndarray:
        """Error counts for a single tree function at every sigma, shape (S,)."""
        _, lab = self.table.tree_decide(h, self.sigmas)
        return (lab != self.y).sum(axis=-1)

    def leaf_means(self, leaves: np.ndarray, n_leaves: int) -> np.ndarray:
        """Within-leaf source label means snapped to the grid (grid midpoint for empty leaves)."""
        y = self.source.y.astype(float)
        seeds = np.empty(n_leaves, dtype=np.int64)
        for l in range(n_leaves):
            mask = leaves == l + 1
            mean = y[mask].mean() if mask.any() else 0.5
            seeds[l] = int(np.floor(mean * self.grid_n + 0.5))
        return seeds

    def search_taus(self, partition: DecisionTreePartition, strategy: TreeSearchStrategy,
                    extra_starts: Sequence[Sequence[int]] = ()) -> tuple[np.ndarray, np.ndarray]:
        """Best integer tau vector per sigma for ``partition``.

        Returns ``(nums, errs)`` with shapes (S, L) and (S,).
        """
        leaves, ordered = self.ordered_leaves(partition)
        L = partition.n_leaves
        g = self.grid_n
        if strategy.tau_mode == "grid":
            combos = np.array(list(itertools.product(range(g + 1), repeat=L)), dtype=np.int64)
            errs = self.errors(ordered, combos)
            best = np.argmin(errs, axis=0)
            return combos[best], errs[best, np.arange(errs.shape[1])]
        return self._descent(ordered, L, self.leaf_means(leaves, L), strategy, extra_starts)

    def _descent(self, ordered, L, seed, strategy, extra_starts):
        g, S = self.grid_n, len(self.sigmas)
        half = strategy.radius * g
        raw = np.rint(np.linspace(-half, half, strategy.grid_size)).astype(np.int64)
        offsets = sorted(set(raw.tolist()) | {0}, key=lambda o: (abs(o), o))
        local = [list(dict.fromkeys(min(max(int(c) + o, 0), g) for o in offsets)) for c in seed]
        cache: dict[tuple, np.ndarray] = {}

        def evaluate(keys):
            missing = [k for k in dict.fromkeys(keys) if k not in cache]
            if missing:
                for k, e in zip(missing, self.errors(ordered, np.array(missing))):
                    cache[k] = e

        starts = [tuple(int(v) for v in seed)] + [tuple(int(v) for v in s) for s in extra_starts]
        evaluate(starts)
        cur = [min(starts, key=lambda c: cache[c][j]) for j in range(S)]
        for _ in range(strategy.max_sweeps):
            changed = False
            for l in range(L):
                proposals = {}
                for j in range(S):
                    base = cur[j]
                    proposals[j] = [base[:l] + (v,) + base[l + 1:] for v in local[l]]
                evaluate([c for cands in proposals.values() for c in cands])
                for j in range(S):
                    best = min(proposals[j], key=lambda c: cache[c][j])
                    if cache[best][j] < cache[cur[j]][j]:
                        cur[j] = best
                        changed = True
            if not changed:
                break
        nums = np.array(cur, dtype=np.int64).reshape(S, L)
        errs = np.array([cache[c][j] for j, c in enumerate(cur)])
        return nums, errs


def tree_objective(h: DecisionTreeFunction, sigma: float, source: Dataset, calib: Dataset) -> int:
    """Empirical calibration error of the source-calibrated classifier built from ``h``."""
    table = NeighbourTable(source, calib.X)
    _, lab = table.tree_decide(h, [sigma])
    return int((lab[0] != calib.y).sum())


def erm_select_tree(candidates: Sequence[DecisionTreeFunction], sigma: float,
                    source: Dataset, calib: Dataset) -> DecisionTreeFunction:
    """Candidate with the fewest calibration errors (lowest index on ties)."""
    if not candidates:
        raise ValueError("empty candidate list")
    table = NeighbourTable(source, calib.X)
    errs = []
    for h in candidates:
        _, lab = table.tree_decide(h, [sigma])
        errs.append(int((lab[0] != calib.y).sum()))
    return candidates[int(np.argmin(errs))]


def search_trees(objective: TreeObjective, L: int, strategy: TreeSearchStrategy,
                 rng: np.random.Generator) -> tuple[list[DecisionTreeFunction], np.ndarray]:
    """Tree with ``L`` leaves chosen by ERM for every sigma of ``objective``.

    Returns the per-sigma trees and their calibration error counts.
    """
    S = len(objective.sigmas)
    g = objective.grid_n
    X = objective.source.X
    if L < 1:
        raise ValueError("L must be >= 1")
    if strategy.mode == "greedy":
        trees, errs = [], []
        for j, sigma in enumerate(objective.sigmas):
            path, trace = greedy_trees(objective, j, L, strategy, rng)
            trees.append(path[-1])
            errs.append(trace[-1])
        return trees, np.array(errs)
    if strategy.mode == "exhaustive":
        parts = restricted_partitions(X, L)
    else:
        parts = dedupe_partitions(random_partitions(X, L, strategy.num_splits, rng), X)
    best_err = np.full(S, np.iinfo(np.int64).max)
    best_nums = [None] * S
    best_part = [None] * S
    for p in parts:
        nums, errs = objective.search_taus(p, strategy)
        better = errs < best_err
        for j in np.flatnonzero(better):
            best_err[j] = errs[j]
            best_nums[j] = nums[j]
            best_part[j] = p
    trees = [DecisionTreeFunction.on_grid(best_part[j], best_nums[j].tolist(), g) for j in range(S)]
    return trees, best_err


def greedy_trees(objective: TreeObjective, sigma_index: int, max_leaves: int,
                 strategy: TreeSearchStrategy, rng: np.random.Generator):
    """Grow a tree one split at a time, each split minimising the calibration error.

    Returns the sequence of trees with ``1..max_leaves`` leaves and their
    objective values; the objective never increases along the sequence.
    """
    j = sigma_index
    X = objective.source.X
    d = X.shape[1]
    g = objective.grid_n
    single = TreeSearchStrategy(**{**strategy.__dict__, "mode": "monte_carlo"})
    part = DecisionTreePartition(d)
    nums, errs = objective.search_taus(part, single)
    cur_nums, cur_err = tuple(int(v) for v in nums[j]), int(errs[j])
    path = [DecisionTreeFunction.on_grid(part, cur_nums, g)]
    trace = [cur_err]
    for _ in range(max_leaves - 1):
        best = None
        for leaf in range(1, part.n_leaves + 1):
            for axis in range(1, d + 1):
                cand = np.unique(X[:, axis - 1])
                if strategy.max_thresholds is not None and cand.size > strategy.max_thresholds:
                    cand = np.sort(rng.choice(cand, strategy.max_thresholds, replace=False))
                for s in cand:
                    child = part.refine(leaf, axis, float(s))
                    inherit = cur_nums + (cur_nums[leaf - 1],)
                    n_, e_ = objective.search_taus(child, single, extra_starts=[inherit])
                    if best is None or e_[j] < best[0]:
                        best = (int(e_[j]), child, tuple(int(v) for v in n_[j]))
        cur_err, part, cur_nums = best
        path.append(DecisionTreeFunction.on_grid(part, cur_nums, g))
        trace.append(cur_err)
    return path, trace


# ---------------------------------------------------------------------------
# Final ERM over classifiers
# ---------------------------------------------------------------------------


def holdout_errors(family: Sequence[ClassifierHandle], holdout: Dataset) -> np.ndarray:
    return np.array([int((predict(c, holdout.X) != holdout.y).sum()) for c in family], dtype=np.int64)


def erm_select_classifier(family: Sequence[ClassifierHandle], holdout: Dataset) -> ClassifierHandle:
    """Member of ``family`` with the fewest holdout mistakes (lowest index on ties)."""
    if not family:
        raise ValueError("empty family")
    return family[int(np.argmin(holdout_errors(family, holdout)))]
