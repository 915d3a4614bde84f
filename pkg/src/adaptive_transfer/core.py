"""Shared domain types: datasets, decision-tree partitions and functions,
classifier handles and the assumption parameter vector."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterator, NamedTuple, Sequence, Union

import numpy as np


class Origin(str, enum.Enum):
    SOURCE = "P"
    TARGET = "Q"


class LabeledSample(NamedTuple):
    features: np.ndarray
    label: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered labelled sample. Row ``i`` is sample ``i``; order is identity.

    Parameters
    ----------
    X : array of shape (n, d)
    y : array of shape (n,) with entries in {0, 1}
    origin : Origin
    """

    X: np.ndarray
    y: np.ndarray
    origin: Origin = Origin.TARGET

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 1)
        if X.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if y.shape != (X.shape[0],):
            raise ValueError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y.astype(np.int8)))
        object.__setattr__(self, "origin", Origin(self.origin))

    @classmethod
    def empty(cls, d: int, origin: Origin = Origin.SOURCE) -> "Dataset":
        return cls(np.zeros((0, d)), np.zeros(0, dtype=np.int8), origin)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[LabeledSample]:
        for x, y in zip(self.X, self.y):
            yield LabeledSample(x, int(y))

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(self.X[i], int(self.y[i]))

    def head(self, m: int) -> "Dataset":
        return Dataset(self.X[:m], self.y[:m], self.origin)

    def tail(self, start: int) -> "Dataset":
        return Dataset(self.X[start:], self.y[start:], self.origin)

    def relabel(self, origin: Origin) -> "Dataset":
        return Dataset(self.X, self.y, origin)

    def concat(self, other: "Dataset", origin: Origin | None = None) -> "Dataset":
        if other.d != self.d:
            raise ValueError("dimension mismatch")
        return Dataset(
            np.vstack([self.X, other.X]),
            np.concatenate([self.y, other.y]),
            self.origin if origin is None else origin,
        )

    def to_csv(self, path: str | Path) -> Path:
        """Write ``x1,...,xd,label`` CSV plus a ``.json`` manifest sidecar."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.d)] + ["label"])
            for x, y in zip(self.X, self.y):
                w.writerow([repr(float(v)) for v in x] + [int(y)])
        manifest = {"origin": self.origin.value, "d": self.d, "n": self.n}
        manifest_path(path).write_text(json.dumps(manifest))
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        path = Path(path)
        mpath = manifest_path(path)
        meta = json.loads(mpath.read_text()) if mpath.exists() else {}
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[-1] != "label":
            raise ValueError(f"{path}: last column must be 'label'")
        d = len(header) - 1
        if "d" in meta and meta["d"] != d:
            raise ValueError(f"{path}: manifest says d={meta['d']}, CSV has {d}")
        X = np.array([[float(v) for v in r[:-1]] for r in body]).reshape(len(body), d)
        y = np.array([int(r[-1]) for r in body], dtype=np.int8)
        if "n" in meta and meta["n"] != len(body):
            raise ValueError(f"{path}: manifest says n={meta['n']}, CSV has {len(body)}")
        return cls(X, y, Origin(meta.get("origin", "Q")))


def manifest_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_suffix(p.suffix + ".json") if p.suffix != ".json" else p


# ---------------------------------------------------------------------------
# Decision tree partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitStep:
    """Split cell ``leaf`` (1-based) along ``axis`` (1-based) at ``threshold``."""

    leaf: int
    axis: int
    threshold: float


@dataclass(frozen=True)
class DecisionTreePartition:
    """Partition of R^d obtained by replaying ``steps`` in order.

    Applying a step to cell ``leaf`` keeps ``cell & {x_axis >= threshold}``
    under the same index and appends ``cell & {x_axis < threshold}`` as the
    new last cell.
    """

    d: int
    steps: tuple[SplitStep, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        for t, s in enumerate(self.steps):
            if not 1 <= s.leaf <= t + 1:
                raise ValueError(f"step {t}: leaf {s.leaf} not in [1, {t + 1}]")
            if not 1 <= s.axis <= self.d:
                raise ValueError(f"step {t}: axis {s.axis} not in [1, {self.d}]")

    @property
    def n_leaves(self) -> int:
        return len(self.steps) + 1

    def refine(self, leaf: int, axis: int, threshold: float) -> "DecisionTreePartition":
        return DecisionTreePartition(self.d, self.steps + (SplitStep(leaf, axis, threshold),))

    def leaves(self, X: np.ndarray) -> np.ndarray:
        """Vectorised leaf index (1-based) for each row of ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.d:
            raise ValueError(f"dimension mismatch: expected {self.d}, got {X.shape[1]}")
        out = np.ones(X.shape[0], dtype=np.int64)
        for t, s in enumerate(self.steps):
            moved = (out == s.leaf) & (X[:, s.axis - 1] < s.threshold)
            out[moved] = t + 2
        return out

    def leaf_of(self, x) -> int:
        return int(self.leaves(np.asarray(x, dtype=float).reshape(1, -1))[0])

    def to_dict(self) -> dict:
        return {"d": self.d, "steps": [[s.leaf, s.axis, s.threshold] for s in self.steps]}

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionTreePartition":
        return cls(int(obj["d"]), tuple(SplitStep(int(a), int(b), float(c)) for a, b, c in obj["steps"]))


def leaf_of(partition: DecisionTreePartition, x) -> int:
    return partition.leaf_of(x)


@dataclass(frozen=True)
class DecisionTreeFunction:
    """Piecewise-constant calibration ``x -> taus[leaf(x) - 1]``.

    When ``grid_n`` is set every tau lies on ``{0, 1/grid_n, ..., 1}``.
    """

    partition: DecisionTreePartition
    taus: tuple[float, ...]
    grid_n: int | None = None

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        object.__setattr__(self, "taus", taus)
        if len(taus) != self.partition.n_leaves:
            raise ValueError(f"need {self.partition.n_leaves} taus, got {len(taus)}")
        if any(not 0.0 <= t <= 1.0 for t in taus):
            raise ValueError("taus must lie in [0, 1]")
        if self.grid_n is not None:
            if self.grid_n < 1:
                raise ValueError("grid_n must be positive")
            for t in taus:
                if abs(t * self.grid_n - round(t * self.grid_n)) > 1e-9:
                    raise ValueError(f"tau {t} is not on the 1/{self.grid_n} grid")

    @classmethod
    def constant_half(cls, d: int) -> "DecisionTreeFunction":
        return cls(DecisionTreePartition(d), (0.5,))

    @classmethod
    def on_grid(cls, partition: DecisionTreePartition, numerators: Sequence[int], grid_n: int):
        return cls(partition, tuple(j / grid_n for j in numerators), grid_n)

    @property
    def n_leaves(self) -> int:
        return self.partition.n_leaves

    @property
    def is_h0(self) -> bool:
        return not self.partition.steps and self.taus == (0.5,)

    def values(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.taus)[self.partition.leaves(X) - 1]

    def __call__(self, x) -> float:
        return self.taus[self.partition.leaf_of(x) - 1]

    def exact_taus(self) -> tuple[Fraction, ...]:
        if self.grid_n is not None:
            return tuple(Fraction(round(t * self.grid_n), self.grid_n) for t in self.taus)
        return tuple(Fraction(t) for t in self.taus)

    def to_dict(self) -> dict:
        return {"partition": self.partition.to_dict(), "taus": list(self.taus), "grid_n": self.grid_n}

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionTreeFunction":
        return cls(DecisionTreePartition.from_dict(obj["partition"]), tuple(obj["taus"]), obj.get("grid_n"))


def eval_tree(h: DecisionTreeFunction, x) -> float:
    return h(x)


# ---------------------------------------------------------------------------
# Classifier handles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SourceCalibrated:
    """Predict 1 iff the Lepski-stopped source margin calibrated by ``h`` is >= 0."""

    sigma: float
    h: DecisionTreeFunction
    ref: Dataset
    L: int | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.ref.n == 0:
            raise ValueError("reference data must be nonempty")


@dataclass(frozen=True, eq=False)
class TargetKnn:
    """Predict 1 iff the Lepski-stopped target k-NN margin is >= 0."""

    sigma: float
    ref: Dataset

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.ref.n == 0:
            raise ValueError("reference data must be nonempty")


@dataclass(frozen=True)
class Constant:
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass(frozen=True, eq=False)
class PlugIn:
    """Arbitrary vectorised rule ``fn(X) -> labels``, e.g. a known Bayes classifier."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "plug-in"


ClassifierHandle = Union[SourceCalibrated, TargetKnn, Constant, PlugIn]


def describe_handle(c: ClassifierHandle) -> str:
    if isinstance(c, SourceCalibrated):
        return f"P(sigma={c.sigma:.4g}, L={c.L if c.L is not None else c.h.n_leaves})"
    if isinstance(c, TargetKnn):
        return f"Q(sigma={c.sigma:.4g})"
    if isinstance(c, PlugIn):
        return c.name
    return f"Const({c.label})"


# ---------------------------------------------------------------------------
# Parameter vector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterVector:
    """Transfer, tail, margin and smoothness parameters.

    ``gamma_Q``/``gamma_P`` may be ``math.inf``.
    """

    Delta: float
    phi: float
    Lstar: int
    d_Q: float
    gamma_Q: float
    d_P: float
    gamma_P: float
    C_PQ: float
    alpha: float
    C_M: float
    beta: float
    C_S: float
    d: float | None = None

    def __post_init__(self):
        checks = [
            (0 <= self.Delta < 1, "Delta must lie in [0, 1)"),
            (0 < self.phi <= 1, "phi must lie in (0, 1]"),
            (isinstance(self.Lstar, (int, np.integer)) and self.Lstar >= 1, "Lstar must be a positive integer"),
            (self.d_Q >= 1, "d_Q must be >= 1"),
            (self.gamma_Q > 0, "gamma_Q must be positive"),
            (self.d_P >= self.d_Q, "d_P must be >= d_Q"),
            (self.gamma_P > 0, "gamma_P must be positive"),
            (self.C_PQ > 1, "C_PQ must exceed 1"),
            (self.alpha > 0, "alpha must be positive"),
            (self.C_M >= 1, "C_M must be >= 1"),
            (0 < self.beta <= 1, "beta must lie in (0, 1]"),
            (self.C_S >= 1, "C_S must be >= 1"),
        ]
        if self.d is not None:
            checks.append((self.d_P <= self.d, "d_P must be <= d"))
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def ambient_d(self) -> float:
        return self.d if self.d is not None else self.d_P

    @classmethod
    def from_dict(cls, obj: dict) -> "ParameterVector":
        def num(v):
            if isinstance(v, str) and v.lower() in ("inf", "infinity"):
                return math.inf
            return v

        return cls(**{k: num(v) for k, v in obj.items()})

    def to_dict(self) -> dict:
        return {k: (str(v) if isinstance(v, float) and math.isinf(v) else v)
                for k, v in self.__dict__.items()}
