"""Analytic source/target pair specifications with exact samplers.

A :class:`PairSpec` fixes the two marginals, the target regression function
and a partition with one transfer map per cell; the source regression
function is the cell-wise composition ``g_l(eta_Q(x))`` unless given
explicitly.  Every sampler consumes a fixed number of uniforms per point, so
the first ``n`` points of a draw of size ``N >= n`` coincide with a draw of
size ``n`` from the same stream.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np
from scipy import special

from .core import Dataset, DecisionTreePartition, Origin

_ATOM_TOL = 1e-9


# ---------------------------------------------------------------------------
# Marginals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformCube:
    """Uniform distribution on ``[0, 1]^d``."""

    d: int = 2

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @property
    def dim(self) -> int:
        return self.d

    @property
    def width(self) -> int:
        return self.d

    def from_uniforms(self, U: np.ndarray) -> np.ndarray:
        return np.array(U[:, : self.d], dtype=float)

    def on_support(self, X: np.ndarray) -> np.ndarray:
        return np.all((X >= 0) & (X <= 1), axis=1)

    def ball_mass(self, X: np.ndarray, r: np.ndarray) -> np.ndarray:
        """``mu(B_r(x))`` for rows of ``X`` (m, d) and radii ``r`` (R,), shape (m, R)."""
        return ball_box_volume(X, r, np.zeros(self.d), np.ones(self.d))


@dataclass(frozen=True)
class LatticeMixture:
    """Cube-plus-lattice mixture used in the minimax lower-bound construction.

    Mass ``1 - w`` is spread uniformly on the cube
    ``[-kQ(1 + r), -r kQ]^dQ x {0}^(d - dQ)`` and mass ``w`` uniformly over the
    admissible lattice atoms ``(r/q) kP xt``, ``xt in {0..q-1}^d0 x {0}``, whose
    coordinates ``dQ+1..dP`` lie in ``[0, 1)``.  Here ``kP = 1/(2 sqrt(dP))``
    and ``kQ = 1/(2 sqrt(dQ))``.
    """

    q: int
    r: float
    w: float
    d0: int
    dQ: int
    dP: int
    d: int

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not 0 <= self.w <= 0.5:
            raise ValueError("w must lie in [0, 1/2]")
        if not 1 <= self.dQ <= self.dP <= self.d:
            raise ValueError("need 1 <= dQ <= dP <= d")
        if self.d0 not in (self.dP, self.dQ):
            raise ValueError("d0 must equal dP or dQ")

    @property
    def dim(self) -> int:
        return self.d

    @property
    def kappa_P(self) -> float:
        return 1.0 / (2.0 * math.sqrt(self.dP))

    @property
    def kappa_Q(self) -> float:
        return 1.0 / (2.0 * math.sqrt(self.dQ))

    @property
    def spacing(self) -> float:
        return self.r / self.q * self.kappa_P

    @property
    def tail_levels(self) -> int:
        """Admissible index count along each coordinate beyond ``dQ``."""
        return min(math.ceil(self.q / (self.r * self.kappa_P)), self.q)

    @property
    def n_atoms(self) -> int:
        return self.q ** self.dQ * self.tail_levels ** (self.d0 - self.dQ)

    @property
    def cube_bounds(self) -> tuple[float, float]:
        return -self.kappa_Q * (1 + self.r), -self.r * self.kappa_Q

    @property
    def z_r(self) -> np.ndarray:
        z = np.zeros(self.d)
        z[: self.dQ] = -self.r * self.kappa_Q
        return z

    def atom_indices(self) -> np.ndarray:
        """Integer lattice coordinates of the admissible atoms in enumeration order.

        The ``q^dQ`` atoms with zero tail come first (row-major over the
        leading block), followed by the remaining atoms.
        """
        head = np.array(list(itertools.product(range(self.q), repeat=self.dQ)), dtype=np.int64)
        tail_list = list(itertools.product(range(self.tail_levels), repeat=self.d0 - self.dQ))
        tails = np.array(tail_list, dtype=np.int64).reshape(len(tail_list), self.d0 - self.dQ)
        blocks = [np.hstack([head, np.broadcast_to(t, (len(head), len(t)))]) for t in tails]
        idx = np.vstack(blocks)
        return np.hstack([idx, np.zeros((len(idx), self.d - self.d0), dtype=np.int64)])

    def atoms(self) -> np.ndarray:
        return self.spacing * self.atom_indices().astype(float)

    @property
    def width(self) -> int:
        return 2 + self.dQ

    def from_uniforms(self, U: np.ndarray) -> np.ndarray:
        n = U.shape[0]
        lo, hi = self.cube_bounds
        X = np.zeros((n, self.d))
        X[:, : self.dQ] = lo + (hi - lo) * U[:, 2: 2 + self.dQ]
        is_atom = U[:, 0] < self.w
        if is_atom.any():
            atoms = self.atoms()
            pick = np.minimum((U[is_atom, 1] * len(atoms)).astype(np.int64), len(atoms) - 1)
            X[is_atom] = atoms[pick]
        return X

    def locate(self, X: np.ndarray) -> np.ndarray:
        """Atom number ``t`` (1-based) for lattice points, 0 on the cube, -1 off support."""
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        lo, hi = self.cube_bounds
        out = np.full(X.shape[0], -1, dtype=np.int64)
        tail_zero = np.all(np.abs(X[:, self.dQ:]) <= _ATOM_TOL, axis=1)
        in_cube = tail_zero & np.all((X[:, : self.dQ] >= lo - _ATOM_TOL) & (X[:, : self.dQ] <= hi + _ATOM_TOL), axis=1)
        out[in_cube] = 0
        k = np.rint(X / self.spacing)
        exact = np.all(np.abs(X - k * self.spacing) <= _ATOM_TOL, axis=1)
        lead_ok = np.all((k[:, : self.dQ] >= 0) & (k[:, : self.dQ] < self.q), axis=1)
        tail_ok = np.all((k[:, self.dQ: self.d0] >= 0) & (k[:, self.dQ: self.d0] < self.tail_levels), axis=1)
        rest_ok = np.all(k[:, self.d0:] == 0, axis=1)
        is_atom = exact & lead_ok & tail_ok & rest_ok & ~in_cube
        if is_atom.any():
            kk = k[is_atom].astype(np.int64)
            head = np.zeros(len(kk), dtype=np.int64)
            for j in range(self.dQ):
                head = head * self.q + kk[:, j]
            tail = np.zeros(len(kk), dtype=np.int64)
            for j in range(self.dQ, self.d0):
                tail = tail * self.tail_levels + kk[:, j]
            out[is_atom] = tail * self.q ** self.dQ + head + 1
        return out

    def on_support(self, X: np.ndarray) -> np.ndarray:
        return self.locate(X) >= 0

    def ball_mass(self, X: np.ndarray, r: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        r = np.asarray(r, dtype=float).reshape(-1)
        lo, hi = self.cube_bounds
        rest2 = np.sum(X[:, self.dQ:] ** 2, axis=1)
        # the ball meets the cube slice in a dQ-ball of reduced radius
        red = np.sqrt(np.maximum(r[None, :] ** 2 - rest2[:, None], 0.0))
        side = hi - lo
        cube = np.zeros((X.shape[0], len(r)))
        if self.w < 1:
            for i in range(X.shape[0]):
                vol = ball_box_volume(X[i: i + 1, : self.dQ], red[i], np.full(self.dQ, lo), np.full(self.dQ, hi))[0]
                cube[i] = (1 - self.w) * vol / side ** self.dQ
        atoms = self.atoms()
        dist = np.sqrt(((X[:, None, :] - atoms[None, :, :]) ** 2).sum(-1))
        sd = np.sort(dist, axis=1)
        counts = np.stack([np.searchsorted(sd[i], r, side="left") for i in range(X.shape[0])])
        return cube + self.w / len(atoms) * counts


@dataclass(frozen=True)
class GammaFamily:
    """Univariate density with polynomial (or exponential) tail, indexed by ``gamma > 0``."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def dim(self) -> int:
        return 1

    @property
    def width(self) -> int:
        return 1

    def survival(self, x: np.ndarray) -> np.ndarray:
        g = self.gamma
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        if g < 1:
            return (1 + (1 - g) * x) ** (-g / (1 - g))
        if g == 1:
            return np.exp(-x)
        return np.maximum(1 - (g - 1) * x, 0.0) ** (g / (g - 1))

    def density(self, x: np.ndarray) -> np.ndarray:
        g = self.gamma
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if g < 1:
                f = g * (1 + (1 - g) * np.maximum(x, 0)) ** (-1 / (1 - g))
            elif g == 1:
                f = np.exp(-np.maximum(x, 0))
            else:
                f = g * np.maximum(1 - (g - 1) * x, 0.0) ** (1 / (g - 1))
        return np.where(x >= 0, f, 0.0)

    def from_uniforms(self, U: np.ndarray) -> np.ndarray:
        g = self.gamma
        v = 1 - U[:, 0]  # in (0, 1]
        if g < 1:
            x = (v ** (-(1 - g) / g) - 1) / (1 - g)
        elif g == 1:
            x = -np.log(v)
        else:
            x = (1 - v ** ((g - 1) / g)) / (g - 1)
        return x.reshape(-1, 1)

    def on_support(self, X: np.ndarray) -> np.ndarray:
        x = np.asarray(X, dtype=float).reshape(-1)
        ok = x >= 0
        if self.gamma > 1:
            ok &= x <= 1 / (self.gamma - 1)
        return ok

    def ball_mass(self, X: np.ndarray, r: np.ndarray) -> np.ndarray:
        x = np.asarray(X, dtype=float).reshape(-1, 1)
        r = np.asarray(r, dtype=float).reshape(1, -1)
        return self.survival(x - r) - self.survival(x + r)


@dataclass(frozen=True)
class GaussianScale:
    """Centred normal distribution on the real line with standard deviation ``sigma``."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def dim(self) -> int:
        return 1

    @property
    def width(self) -> int:
        return 1

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x / self.sigma) ** 2) / (self.sigma * math.sqrt(2 * math.pi))

    def from_uniforms(self, U: np.ndarray) -> np.ndarray:
        return (self.sigma * special.ndtri(U[:, 0])).reshape(-1, 1)

    def on_support(self, X: np.ndarray) -> np.ndarray:
        return np.ones(np.asarray(X).reshape(-1).shape[0], dtype=bool)

    def ball_mass(self, X: np.ndarray, r: np.ndarray) -> np.ndarray:
        # fold to x >= 0 and use upper tails to keep relative precision far out
        x = np.abs(np.asarray(X, dtype=float).reshape(-1, 1)) / self.sigma
        s = np.asarray(r, dtype=float).reshape(1, -1) / self.sigma
        return special.ndtr(-(x - s)) - special.ndtr(-(x + s))


MarginalSpec = Union[UniformCube, LatticeMixture, GammaFamily, GaussianScale]


def sample_marginal(marginal: MarginalSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    return marginal.from_uniforms(rng.random((n, marginal.width)))


# ---------------------------------------------------------------------------
# Ball / box volumes
# ---------------------------------------------------------------------------


def _disc_quadrant(u: np.ndarray, v: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Area of ``{x^2 + y^2 < r^2, x < u, y < v}`` (coordinates relative to the centre)."""
    u, v, r = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float), np.asarray(r, float))
    rs = np.where(r > 0, r, 1.0)

    def H(x):  # antiderivative of sqrt(r^2 - x^2)
        x = np.clip(x, -rs, rs)
        return 0.5 * (x * np.sqrt(np.maximum(rs * rs - x * x, 0.0)) + rs * rs * np.arcsin(x / rs))

    U = np.clip(u, -rs, rs)
    vc = np.clip(v, -rs, rs)
    w = np.sqrt(np.maximum(rs * rs - vc * vc, 0.0))

    def seg(a, b, f_const, f_s):
        hi = np.minimum(b, U)
        ok = hi > a
        hi = np.where(ok, hi, a)
        return np.where(ok, f_const * (hi - a) + f_s * (H(hi) - H(a)), 0.0)

    outer = np.where(v >= 0, 2.0, 0.0)
    area = seg(-rs, -w, 0.0, outer) + seg(-w, w, vc, 1.0) + seg(w, rs, 0.0, outer)
    area = np.where(v >= rs, 2 * (H(U) - H(-rs)), area)
    area = np.where(v <= -rs, 0.0, area)
    return np.where(r > 0, area, 0.0)


def _interval(x, r, lo, hi):
    return np.maximum(np.minimum(x + r, hi) - np.maximum(x - r, lo), 0.0)


def ball_box_volume(X: np.ndarray, r: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Lebesgue measure of ``B_r(x) & [lo, hi]`` for rows of ``X`` and radii ``r``.

    Exact in one and two dimensions; higher dimensions integrate the
    cross-sectional volume along the first axis numerically.

    Returns an array of shape (len(X), len(r)).
    """
    X = np.asarray(X, dtype=float)
    X = X.reshape(-1, 1) if X.ndim == 1 else X
    r = np.asarray(r, dtype=float).reshape(1, -1)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    k = X.shape[1]
    if k == 1:
        return _interval(X[:, :1], r, lo[0], hi[0])
    if k == 2:
        cx, cy = X[:, :1], X[:, 1:2]
        a, b = lo[0] - cx, hi[0] - cx
        c, d = lo[1] - cy, hi[1] - cy
        return (_disc_quadrant(b, d, r) - _disc_quadrant(a, d, r)
                - _disc_quadrant(b, c, r) + _disc_quadrant(a, c, r))
    from scipy import integrate

    out = np.zeros((X.shape[0], r.shape[1]))
    for i, x in enumerate(X):
        for j, s in enumerate(r[0]):
            a, b = max(lo[0], x[0] - s), min(hi[0], x[0] + s)
            if b <= a:
                continue

            def slab(t, x=x, s=s):
                rad = math.sqrt(max(s * s - (t - x[0]) ** 2, 0.0))
                return float(ball_box_volume(x[None, 1:], np.array([rad]), lo[1:], hi[1:])[0, 0])

            out[i, j] = integrate.quad(slab, a, b, points=[x[0]], limit=200)[0]
    return out


# ---------------------------------------------------------------------------
# Regression functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sinusoid:
    """``eta(x) = {1 + sin(4 pi x_1)} / 2``."""

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return 0.5 * (1 + np.sin(4 * np.pi * X[:, 0]))


@dataclass(frozen=True)
class ConstantEta:
    v: float

    def __post_init__(self):
        if not 0 <= self.v <= 1:
            raise ValueError("constant regression value must lie in [0, 1]")

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], float(self.v))


@dataclass(frozen=True)
class LatticeEta:
    """Regression function of the lower-bound construction, defined on the mixture support only.

    Cube points get ``1/2 - 2 eps - |x - z_r|^beta / 4``; the first ``q^dQ``
    atoms get ``1/2 + sigma_t eps`` and the remaining atoms ``1/2 - 2 eps``.
    """

    eps: float
    geometry: LatticeMixture
    signs: tuple[int, ...]
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if not 0 <= self.eps <= 0.125:
            raise ValueError("eps must lie in [0, 1/8]")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        m = self.geometry.q ** self.geometry.dQ
        if len(self.signs) != m:
            raise ValueError(f"need {m} signs, got {len(self.signs)}")
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be -1 or +1")

    @property
    def holder_admissible(self) -> bool:
        g = self.geometry
        return self.eps <= min(0.125, (g.r * g.kappa_P / g.q) ** self.beta / 6)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.geometry.d)
        t = self.geometry.locate(X)
        if np.any(t < 0):
            raise ValueError("regression function queried off the support of the mixture")
        m = self.geometry.q ** self.geometry.dQ
        out = np.full(len(X), 0.5 - 2 * self.eps)
        cube = t == 0
        dist = np.linalg.norm(X[cube] - self.geometry.z_r, axis=1)
        out[cube] = 0.5 - 2 * self.eps - 0.25 * dist ** self.beta
        head = (t >= 1) & (t <= m)
        out[head] = 0.5 + np.asarray(self.signs)[t[head] - 1] * self.eps
        return out


RegressionSpec = Union[Sinusoid, LatticeEta, ConstantEta]


# ---------------------------------------------------------------------------
# Transfer maps
# ---------------------------------------------------------------------------


def _check_unit(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any((z < 0) | (z > 1)):
        raise ValueError("transfer maps are defined on [0, 1]")
    return z


@dataclass(frozen=True)
class Identity:
    def __call__(self, z):
        return _check_unit(z) * 1.0


@dataclass(frozen=True)
class Affine:
    """``z -> a + b z``; must map [0, 1] into [0, 1]."""

    a: float
    b: float

    def __post_init__(self):
        ends = (self.a, self.a + self.b)
        if min(ends) < 0 or max(ends) > 1:
            raise ValueError("affine map does not send [0, 1] into [0, 1]")

    def __call__(self, z):
        return self.a + self.b * _check_unit(z)


@dataclass(frozen=True)
class ShiftDown:
    """``z -> max(0, z - 1/4)``."""

    def __call__(self, z):
        return np.maximum(0.0, _check_unit(z) - 0.25)


@dataclass(frozen=True)
class ShiftUp:
    """``z -> min(z + 1/4, 1)``."""

    def __call__(self, z):
        return np.minimum(_check_unit(z) + 0.25, 1.0)


@dataclass(frozen=True)
class LowerBoundH:
    """Three-piece map pushing ``1/2 - eps`` to ``1/2 + eps``.

    Chords through ``(1/2, h(1/2))`` have slope at least ``(1 - 2 eps)/(1 + 2 eps)``.
    Chords through ``(1/2, 1/2)`` do not: ``h > 1/2`` just left of ``1/2``.
    """

    eps: float

    def __post_init__(self):
        if not 0 <= self.eps <= 0.125:
            raise ValueError("eps must lie in [0, 1/8]")

    def __call__(self, z):
        z = _check_unit(z)
        e = self.eps
        out = np.where(z <= 0.5 - 2 * e, z,
                       np.where(z <= 0.5 - e, 3 * z + 4 * e - 1, ((1 - 2 * e) * z + 4 * e) / (1 + 2 * e)))
        return np.clip(out, 0.0, 1.0)  # h(1) = 1 exactly; division can overshoot by an ulp


@dataclass(frozen=True)
class PlateauH:
    """Slope-``phi`` map through ``(1/2, 1/2)`` with a flat plateau of half-width ``delta/phi``."""

    phi: float
    delta: float

    def __post_init__(self):
        if not 0 < self.phi <= 1:
            raise ValueError("phi must lie in (0, 1]")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")

    def __call__(self, z):
        z = _check_unit(z)
        p, dl = self.phi, self.delta
        if dl > p / 2:
            return np.full(z.shape, 0.5) if z.ndim else np.float64(0.5)
        lower = p * (z - 0.5) + 0.5 + dl
        upper = p * (z - 0.5) + 0.5 - dl
        return np.where(z <= 0.5 - dl / p, lower, np.where(z >= 0.5 + dl / p, upper, 0.5))


TransferMapSpec = Union[Identity, Affine, ShiftDown, ShiftUp, LowerBoundH, PlateauH]


def transfer_value(g: TransferMapSpec, z):
    """Evaluate transfer map ``g`` at ``z`` in [0, 1] (scalar in, scalar out)."""
    out = g(z)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Pair specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairSpec:
    """Source/target pair.

    ``eta_P`` defaults to ``transfers[l](eta_Q(x))`` on cell ``l`` of
    ``partition``; an explicit source regression function overrides this.
    """

    marginal_P: MarginalSpec
    marginal_Q: MarginalSpec
    eta_Q: RegressionSpec
    partition: DecisionTreePartition
    transfers: tuple = (Identity(),)
    eta_P_override: RegressionSpec | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "transfers", tuple(self.transfers))
        if len(self.transfers) != self.partition.n_leaves:
            raise ValueError(f"need {self.partition.n_leaves} transfer maps, got {len(self.transfers)}")
        if self.marginal_P.dim != self.marginal_Q.dim or self.partition.d != self.marginal_Q.dim:
            raise ValueError("dimension mismatch between marginals and partition")

    @property
    def d(self) -> int:
        return self.marginal_Q.dim

    def marginal(self, which) -> MarginalSpec:
        return self.marginal_P if Origin(which) is Origin.SOURCE else self.marginal_Q

    def eta_P(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        if self.eta_P_override is not None:
            return self.eta_P_override(X)
        base = self.eta_Q(X)
        leaves = self.partition.leaves(X)
        out = np.empty(len(X))
        for l, g in enumerate(self.transfers):
            mask = leaves == l + 1
            if mask.any():
                out[mask] = g(base[mask])
        return out

    def eta(self, which, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        return self.eta_P(X) if Origin(which) is Origin.SOURCE else self.eta_Q(X)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample(spec: PairSpec, which, n: int, seed) -> Dataset:
    """Draw ``n`` labelled pairs from the source (``"P"``) or target (``"Q"``) distribution.

    Each point consumes ``marginal.width + 1`` uniforms (features then
    label), so draws are prefix-consistent in ``n``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    origin = Origin(which)
    marginal = spec.marginal(origin)
    U = _rng(seed).random((n, marginal.width + 1))
    X = marginal.from_uniforms(U[:, :-1])
    y = (U[:, -1] < spec.eta(origin, X)).astype(np.int8) if n else np.zeros(0, np.int8)
    return Dataset(X.reshape(n, spec.d), y, origin)


def eta(spec: PairSpec, which, x) -> float | np.ndarray:
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1
    out = spec.eta(which, X.reshape(-1, spec.d))
    return float(out[0]) if single else out


def bayes_labels(spec: PairSpec, X: np.ndarray) -> np.ndarray:
    return (spec.eta_Q(np.asarray(X, dtype=float).reshape(-1, spec.d)) >= 0.5).astype(np.int8)


def bayes_classifier(spec: PairSpec, x) -> int | np.ndarray:
    """``1[eta_Q(x) >= 1/2]``."""
    X = np.asarray(x, dtype=float)
    out = bayes_labels(spec, X)
    return int(out[0]) if X.ndim <= 1 else out


# ---------------------------------------------------------------------------
# Named settings and lower-bound families
# ---------------------------------------------------------------------------


def setting1() -> PairSpec:
    """Single cell, ``g(z) = (1 + 4z)/5``, uniform marginals on the unit square."""
    return PairSpec(UniformCube(2), UniformCube(2), Sinusoid(), DecisionTreePartition(2),
                    (Affine(0.2, 0.8),), name="setting1")


def setting2() -> PairSpec:
    """Two cells split at ``x_2 = 1/2``: shift up on the upper half, down on the lower half."""
    part = DecisionTreePartition(2).refine(1, 2, 0.5)
    # leaf 1 keeps {x_2 >= 1/2}, leaf 2 is {x_2 < 1/2}
    return PairSpec(UniformCube(2), UniformCube(2), Sinusoid(), part, (ShiftUp(), ShiftDown()), name="setting2")


SETTINGS = {"setting1": setting1, "setting2": setting2}


def assouad_constraints(q, r, w_P, w_Q, eps_P, eps_Q, d_Q, d_P, d, beta: float = 1.0) -> dict:
    """Parameter checks for the hypercube family; raises on invalid combinations."""
    if q < 1 or not r > 0:
        raise ValueError("need q >= 1 and r > 0")
    if not (0 <= w_P <= 0.5 and 0 <= w_Q <= 0.5):
        raise ValueError("masses must lie in [0, 1/2]")
    if not (0 <= eps_P <= 0.125 and 0 <= eps_Q <= 0.125):
        raise ValueError("perturbations must lie in [0, 1/8]")
    if not 1 <= d_Q <= d_P <= d:
        raise ValueError("need 1 <= d_Q <= d_P <= d")
    kP = 1 / (2 * math.sqrt(d_P))
    cap = min(0.125, (r * kP / q) ** beta / 6)
    return {
        "m": q ** d_Q,
        "holder_cap": cap,
        "eps_P_admissible": eps_P <= cap,
        "eps_Q_admissible": eps_Q <= cap,
    }


def assouad_family(q, r, w_P, w_Q, eps_P, eps_Q, d_Q, d_P, d, beta: float = 1.0,
                   signs: Sequence[Sequence[int]] | None = None) -> Iterator[tuple[tuple[int, ...], PairSpec]]:
    """Yield ``(sigma, PairSpec)`` over the sign hypercube ``{-1, 1}^(q^dQ)``.

    Marginals are identical for every vertex; only the regression values at
    the first ``q^dQ`` lattice atoms depend on ``sigma``.
    """
    info = assouad_constraints(q, r, w_P, w_Q, eps_P, eps_Q, d_Q, d_P, d, beta)
    mu_P = LatticeMixture(q, r, w_P, d_P, d_Q, d_P, d)
    mu_Q = LatticeMixture(q, r, w_Q, d_Q, d_Q, d_P, d)
    vertices = signs if signs is not None else itertools.product((-1, 1), repeat=info["m"])
    for s in vertices:
        s = tuple(int(v) for v in s)
        spec = PairSpec(mu_P, mu_Q, LatticeEta(eps_Q, mu_Q, s, beta), DecisionTreePartition(d),
                        (Identity(),), eta_P_override=LatticeEta(eps_P, mu_P, s, beta), name="assouad")
        yield s, spec


# ---------------------------------------------------------------------------
# JSON spec files
# ---------------------------------------------------------------------------

_MARGINALS = {"UniformCube": UniformCube, "LatticeMixture": LatticeMixture,
              "GammaFamily": GammaFamily, "GaussianScale": GaussianScale}
_TRANSFERS = {"Identity": Identity, "Affine": Affine, "ShiftDown": ShiftDown, "ShiftUp": ShiftUp,
              "LowerBoundH": LowerBoundH, "PlateauH": PlateauH}


def _variant(obj) -> dict:
    return {"variant": type(obj).__name__, **{k: v for k, v in obj.__dict__.items()}}


def _regression_to_dict(eta_) -> dict:
    if isinstance(eta_, LatticeEta):
        return {"variant": "LatticeEta", "eps": eta_.eps, "beta": eta_.beta, "signs": list(eta_.signs),
                "geometry": _variant(eta_.geometry)}
    if isinstance(eta_, ConstantEta):
        return {"variant": "Constant", "v": eta_.v}
    return {"variant": "Sinusoid"}


def _regression_from_dict(obj: dict) -> RegressionSpec:
    kind = obj["variant"]
    if kind == "Sinusoid":
        return Sinusoid()
    if kind == "Constant":
        return ConstantEta(float(obj["v"]))
    if kind == "LatticeEta":
        geo = dict(obj["geometry"])
        geo.pop("variant", None)
        return LatticeEta(float(obj["eps"]), LatticeMixture(**geo), tuple(obj["signs"]), float(obj.get("beta", 1.0)))
    raise ValueError(f"unknown regression variant {kind!r}")


def _build(table: dict, obj: dict):
    obj = dict(obj)
    kind = obj.pop("variant")
    if kind not in table:
        raise ValueError(f"unknown variant {kind!r}")
    return table[kind](**obj)


def spec_to_dict(spec: PairSpec) -> dict:
    out = {
        "name": spec.name,
        "marginal_P": _variant(spec.marginal_P),
        "marginal_Q": _variant(spec.marginal_Q),
        "eta_Q": _regression_to_dict(spec.eta_Q),
        "partition": spec.partition.to_dict(),
        "transfers": [_variant(g) for g in spec.transfers],
    }
    if spec.eta_P_override is not None:
        out["eta_P"] = _regression_to_dict(spec.eta_P_override)
    return out


def spec_from_dict(obj: dict) -> PairSpec:
    if "setting" in obj and len(obj) == 1:
        return SETTINGS[obj["setting"]]()
    return PairSpec(
        _build(_MARGINALS, obj["marginal_P"]),
        _build(_MARGINALS, obj["marginal_Q"]),
        _regression_from_dict(obj["eta_Q"]),
        DecisionTreePartition.from_dict(obj["partition"]),
        tuple(_build(_TRANSFERS, g) for g in obj["transfers"]),
        _regression_from_dict(obj["eta_P"]) if "eta_P" in obj else None,
        obj.get("name", ""),
    )


def load_spec(path: str | Path) -> PairSpec:
    """Read a spec file; the names ``setting1``/``setting2`` are accepted in place of a path."""
    if str(path) in SETTINGS:
        return SETTINGS[str(path)]()
    return spec_from_dict(json.loads(Path(path).read_text()))


def save_spec(spec: PairSpec, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(spec_to_dict(spec), indent=2))
    return path
