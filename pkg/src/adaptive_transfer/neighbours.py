"""Tie-stable neighbour ordering, empirical margins and Lepski-type choice of k.

Scalar functions (``source_margin``, ``lepski_k_source`` ...) follow the
definitions literally and use exact rational arithmetic for the sums.  The
:class:`NeighbourTable` path evaluates the same quantities for many query
points, calibration functions and robustness levels at once; it works with
integer numerators whenever the calibration values lie on a ``1/grid_n``
grid, so both paths produce bit-identical margins and decisions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._kernels import first_exit
from .core import (
    ClassifierHandle,
    Constant,
    Dataset,
    DecisionTreeFunction,
    PlugIn,
    SourceCalibrated,
)

_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class NeighbourOrder:
    """Reference indices sorted by distance to ``query`` (ties keep index order)."""

    query: np.ndarray
    perm: np.ndarray
    dist: np.ndarray
    points: np.ndarray

    @property
    def n(self) -> int:
        return len(self.perm)


@dataclass(frozen=True)
class RobustnessGrid:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("robustness grid must be nonempty")
        if any(v <= 0 for v in vals):
            raise ValueError("robustness values must be positive")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("robustness grid must be strictly ascending")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values)

    @classmethod
    def geometric(cls, n: int, size: int = 32) -> "RobustnessGrid":
        """``size`` log-spaced values spanning ``[1/n, n]`` (a single value when n == 1)."""
        n = max(int(n), 1)
        if n == 1:
            return cls((1.0,))
        return cls(tuple(np.unique(np.geomspace(1.0 / n, float(n), size))))

    @classmethod
    def exact(cls, n: int) -> "RobustnessGrid":
        """The full grid ``{1/n, 2/n, ..., n}``."""
        n = max(int(n), 1)
        return cls(tuple(j / n for j in range(1, n * n + 1)))


def _as_points(ref) -> np.ndarray:
    X = ref.X if isinstance(ref, Dataset) else np.asarray(ref, dtype=float)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def pairwise_distances(ref_X: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Exact Euclidean distances, shape (len(Q), len(ref_X))."""
    diff = Q[:, None, :] - ref_X[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def neighbour_perms(ref, queries) -> np.ndarray:
    """Stable distance orderings for each query row, shape (m, n)."""
    X = _as_points(ref)
    Q = np.asarray(queries, dtype=float).reshape(-1, X.shape[1])
    if X.shape[0] == 0:
        raise ValueError("empty reference set")
    rows = max(1, _CHUNK // max(1, X.shape[0] * X.shape[1]))
    out = np.empty((Q.shape[0], X.shape[0]), dtype=np.int64)
    for a in range(0, Q.shape[0], rows):
        out[a:a + rows] = np.argsort(pairwise_distances(X, Q[a:a + rows]), axis=1, kind="stable")
    return out


def neighbour_order(ref, x) -> NeighbourOrder:
    X = _as_points(ref)
    if X.shape[0] == 0:
        raise ValueError("empty reference set")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != X.shape[1]:
        raise ValueError(f"dimension mismatch: expected {X.shape[1]}, got {x.shape[0]}")
    dist = pairwise_distances(X, x.reshape(1, -1))[0]
    perm = np.argsort(dist, kind="stable")
    return NeighbourOrder(x, perm, dist[perm], X)


# ---------------------------------------------------------------------------
# Scalar definitions
# ---------------------------------------------------------------------------


def _exact_terms(order: NeighbourOrder, labels, h: DecisionTreeFunction | None, k: int) -> list[Fraction]:
    if not 1 <= k <= order.n:
        raise ValueError(f"k={k} outside [1, {order.n}]")
    labels = np.asarray(labels)
    idx = order.perm[:k]
    if h is None or h.is_h0:
        taus = [Fraction(1, 2)] * k
    else:
        exact = h.exact_taus()
        taus = [exact[leaf - 1] for leaf in h.partition.leaves(order.points[idx])]
    return [Fraction(int(labels[i])) - t for i, t in zip(idx, taus)]


def source_margin(order: NeighbourOrder, labels, h: DecisionTreeFunction, k: int) -> float:
    """Mean of ``Y - h(X)`` over the ``k`` nearest reference points."""
    return float(sum(_exact_terms(order, labels, h, k)) / k)


def target_margin(order: NeighbourOrder, labels, k: int) -> float:
    """Mean of ``Y - 1/2`` over the ``k`` nearest reference points."""
    return float(sum(_exact_terms(order, labels, None, k)) / k)


def _passes(total: Fraction, r: int, sigma: float) -> bool:
    # |m_r| <= sigma / sqrt(r)  <=>  total_r^2 / r <= sigma^2, with one rounding
    return float(total * total / r) <= sigma * sigma


def _lepski(order, labels, h, sigma: float, n: int) -> int:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if n < 1 or n > order.n:
        raise ValueError(f"n={n} outside [1, {order.n}]")
    terms = _exact_terms(order, labels, h, n)
    total = Fraction(0)
    k = 0
    for r in range(1, n):
        total += terms[r - 1]
        if not _passes(total, r, sigma):
            break
        k = r
    return k + 1


def lepski_k_source(order: NeighbourOrder, labels, h: DecisionTreeFunction, sigma: float, n: int | None = None) -> int:
    """Largest prefix length whose partial margins all stay within ``sigma/sqrt(r)``, plus one.

    Only ``r`` up to ``n - 1`` are examined, so the result lies in ``[1, n]``;
    an immediate violation at ``r = 1`` gives 1.
    """
    return _lepski(order, labels, h, sigma, order.n if n is None else n)


def lepski_k_target(order: NeighbourOrder, labels, sigma: float, m: int | None = None) -> int:
    return _lepski(order, labels, None, sigma, order.n if m is None else m)


# ---------------------------------------------------------------------------
# Vectorised path
# ---------------------------------------------------------------------------


def _counts_from_stat(stat: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """``1 + #{r : max_{s<=r} stat_s <= t}`` per row of ``stat`` and threshold ``t``."""
    lead, width = stat.shape[:-1], stat.shape[-1]
    S = len(thresholds)
    rows = int(np.prod(lead)) if lead else 1
    stat = stat.reshape(rows, width)
    np.maximum.accumulate(stat, axis=1, out=stat)
    j = np.searchsorted(thresholds, stat, side="left")  # first threshold >= stat
    j += (S + 1) * np.arange(rows)[:, None]
    hist = np.bincount(j.ravel(), minlength=rows * (S + 1)).reshape(rows, S + 1)
    return (np.cumsum(hist[:, :S], axis=1) + 1).reshape(lead + (S,))


def lepski_counts(m_path: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Lepski ``k`` for every row of ``m_path`` and every sigma.

    Parameters
    ----------
    m_path : array (..., n)
        Partial margins ``m_1, ..., m_n`` along the neighbour order.
    sigmas : array (S,), ascending

    Returns
    -------
    int array (..., S) with entries in ``[1, n]``.
    """
    m_path = np.asarray(m_path, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    n = m_path.shape[-1]
    if n <= 1:
        return np.ones(m_path.shape[:-1] + (len(sigmas),), dtype=np.int64)
    m = m_path[..., : n - 1]
    stat = m * m * np.arange(1, n, dtype=float)
    return _counts_from_stat(stat, sigmas * sigmas)


class NeighbourTable:
    """Neighbour orders of fixed query points inside a fixed reference sample.

    Margins are carried as integer numerators ``N_r = grid_n * sum(Y) - sum(J)``
    where ``J`` are the calibration values scaled by ``grid_n``, so that
    ``m_r = N_r / (grid_n * r)``.
    """

    def __init__(self, ref: Dataset, queries: np.ndarray):
        if ref.n == 0:
            raise ValueError("empty reference set")
        self.ref = ref
        self.queries = np.asarray(queries, dtype=float).reshape(-1, ref.d)
        self.perm = neighbour_perms(ref, self.queries)
        self.cum_y = np.cumsum(ref.y.astype(np.int64)[self.perm], axis=1)
        self.r = np.arange(1, ref.n + 1, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.ref.n

    @property
    def m(self) -> int:
        return self.queries.shape[0]

    def leaf_counts(self, ref_leaves: np.ndarray, n_leaves: int) -> np.ndarray:
        """Cumulative leaf counts along each order, shape (n_leaves, m, n)."""
        along = ref_leaves[self.perm]
        return np.stack([np.cumsum(along == l + 1, axis=1) for l in range(n_leaves)])

    def numerators(self, counts: np.ndarray, tau_num: np.ndarray, grid_n: int) -> np.ndarray:
        """Numerators for a batch of integer tau vectors ``tau_num`` (B, L) -> (B, m, n)."""
        tau_num = np.asarray(tau_num, dtype=np.int64).reshape(-1, counts.shape[0])
        out = np.broadcast_to(grid_n * self.cum_y, (tau_num.shape[0],) + self.cum_y.shape).copy()
        for l in range(counts.shape[0]):
            out -= tau_num[:, l, None, None] * counts[l][None]
        return out

    def half_numerators(self) -> np.ndarray:
        """Numerators for the constant 1/2 calibration (grid_n = 2), shape (m, n)."""
        return 2 * self.cum_y - self.r

    def decide(self, N: np.ndarray, grid_n: int, sigmas) -> tuple[np.ndarray, np.ndarray]:
        """Lepski ``k`` and the resulting labels for integer numerators ``N`` (..., m, n).

        Returns ``(khat, labels)`` each of shape (..., S, m).
        """
        sigmas = np.asarray(sigmas, dtype=float)
        N = np.asarray(N, dtype=np.int64)
        lead = N.shape[:-1]
        khat, lab = first_exit(np.ascontiguousarray(N.reshape(-1, N.shape[-1])), int(grid_n), sigmas * sigmas)
        khat = np.moveaxis(khat.reshape(lead + (len(sigmas),)), -1, -2)
        lab = np.moveaxis(lab.reshape(lead + (len(sigmas),)), -1, -2)
        return khat, lab

    def decide_numpy(self, N: np.ndarray, grid_n: int, sigmas) -> tuple[np.ndarray, np.ndarray]:
        """Pure numpy equivalent of :meth:`decide` (running maximum plus sorted search)."""
        sigmas = np.asarray(sigmas, dtype=float)
        n = self.n
        if n > 1:
            Nf = N[..., : n - 1].astype(float)
            stat = Nf * Nf / (float(grid_n) ** 2 * self.r[: n - 1])
            khat = _counts_from_stat(stat, sigmas * sigmas)
        else:
            khat = np.ones(N.shape[:-1] + (len(sigmas),), dtype=np.int64)
        khat = np.moveaxis(khat, -1, -2)
        Nk = np.take_along_axis(N[..., None, :, :], (khat - 1)[..., None], axis=-1)[..., 0]
        return khat, (Nk >= 0).astype(np.int8)

    def decide_float(self, values: np.ndarray, sigmas) -> tuple[np.ndarray, np.ndarray]:
        """Same as :meth:`decide` for arbitrary real calibration values at the reference points."""
        terms = self.ref.y.astype(float)[self.perm] - np.asarray(values, dtype=float)[self.perm]
        m_path = np.cumsum(terms, axis=1) / self.r
        khat = np.moveaxis(lepski_counts(m_path, sigmas), -1, -2)
        mk = np.take_along_axis(m_path[None], (khat - 1)[..., None], axis=-1)[..., 0]
        return khat, (mk >= 0).astype(np.int8)

    def tree_decide(self, h: DecisionTreeFunction, sigmas) -> tuple[np.ndarray, np.ndarray]:
        if h.grid_n is not None or h.is_h0:
            g = h.grid_n if h.grid_n is not None else 2
            counts = self.leaf_counts(h.partition.leaves(self.ref.X), h.n_leaves)
            nums = np.array([round(t * g) for t in h.taus])
            N = self.numerators(counts, nums[None], g)[0]
            return self.decide(N, g, sigmas)
        return self.decide_float(h.values(self.ref.X), sigmas)


def predict(c: ClassifierHandle, X) -> np.ndarray:
    """Vectorised labels of handle ``c`` at the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if isinstance(c, Constant):
        return np.full(X.shape[0], c.label, dtype=np.int8)
    if isinstance(c, PlugIn):
        return np.asarray(c.fn(X), dtype=np.int8).reshape(X.shape[0])
    if X.shape[1] != c.ref.d:
        raise ValueError(f"dimension mismatch: expected {c.ref.d}, got {X.shape[1]}")
    out = np.empty(X.shape[0], dtype=np.int8)
    step = max(1, _CHUNK // max(1, c.ref.n * 4))
    for a in range(0, X.shape[0], step):
        table = NeighbourTable(c.ref, X[a:a + step])
        if isinstance(c, SourceCalibrated):
            _, lab = table.tree_decide(c.h, [c.sigma])
        else:
            _, lab = table.decide(table.half_numerators(), 2, [c.sigma])
        out[a:a + step] = lab[0]
    return out


def classify(c: ClassifierHandle, x) -> int:
    """Label in {0, 1} assigned by handle ``c`` at the single point ``x``."""
    if isinstance(c, Constant):
        return c.label
    if isinstance(c, PlugIn):
        return int(predict(c, x)[0])
    order = neighbour_order(c.ref, x)
    if isinstance(c, SourceCalibrated):
        k = lepski_k_source(order, c.ref.y, c.h, c.sigma)
        return int(source_margin(order, c.ref.y, c.h, k) >= 0)
    k = lepski_k_target(order, c.ref.y, c.sigma)
    return int(target_margin(order, c.ref.y, k) >= 0)


def classify_many(c: ClassifierHandle, X: Sequence) -> list[int]:
    return [classify(c, x) for x in np.asarray(X, dtype=float)]
