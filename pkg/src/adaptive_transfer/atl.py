"""The adaptive transfer learning (ATL) pipeline and the pooled-data baseline.

The target sample is split in half.  The first half calibrates a family of
source-based classifiers (one per robustness level and tree size) and a
family of target-only k-NN classifiers; the second half picks the final
classifier from the union by empirical risk minimisation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    ClassifierHandle,
    Dataset,
    DecisionTreeFunction,
    Origin,
    PlugIn,
    SourceCalibrated,
    TargetKnn,
    describe_handle,
)
from .neighbours import NeighbourTable, RobustnessGrid, predict
from .trees import TreeObjective, TreeSearchStrategy, search_trees

MAX_FAMILY = 100_000


def split_target(D_Q: Dataset) -> tuple[Dataset, Dataset]:
    """First ``floor(n/2)`` pairs and the remainder, in the original order."""
    if D_Q.n < 2:
        raise ValueError(f"need at least 2 target pairs, got {D_Q.n}")
    half = D_Q.n // 2
    return D_Q.head(half), D_Q.tail(half)


@dataclass(frozen=True)
class AtlConfig:
    """Index sets and search settings for the ATL families.

    ``None`` grids default to 32 log-spaced values on ``[1/n, n]`` with
    ``n = n_P`` (source side) or ``n = n_Q`` (target side).  ``L = 0``
    stands for the constant 1/2 calibration.
    """

    sigma_grid_P: RobustnessGrid | None = None
    sigma_grid_Q: RobustnessGrid | None = None
    L_values: tuple[int, ...] = (0, 1, 2)
    tree_strategy: TreeSearchStrategy = field(default_factory=TreeSearchStrategy)
    seed: int = 0
    grid_size: int = 32
    max_family: int = MAX_FAMILY

    def __post_init__(self):
        object.__setattr__(self, "L_values", tuple(int(L) for L in self.L_values))
        if not self.L_values:
            raise ValueError("L_values must be nonempty")
        if any(L < 0 for L in self.L_values):
            raise ValueError("L_values must be >= 0")
        if len(set(self.L_values)) != len(self.L_values):
            raise ValueError("L_values must be distinct")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def grid_P(self, n_P: int) -> RobustnessGrid:
        return self.sigma_grid_P or RobustnessGrid.geometric(n_P, self.grid_size)

    def grid_Q(self, n_Q: int) -> RobustnessGrid:
        return self.sigma_grid_Q or RobustnessGrid.geometric(n_Q, self.grid_size)

    def to_dict(self) -> dict:
        return {
            "sigma_grid_P": None if self.sigma_grid_P is None else list(self.sigma_grid_P.values),
            "sigma_grid_Q": None if self.sigma_grid_Q is None else list(self.sigma_grid_Q.values),
            "L_values": list(self.L_values),
            "tree_strategy": self.tree_strategy.to_dict(),
            "seed": self.seed,
            "grid_size": self.grid_size,
            "max_family": self.max_family,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AtlConfig":
        obj = dict(obj)
        for key in ("sigma_grid_P", "sigma_grid_Q"):
            if obj.get(key) is not None:
                obj[key] = RobustnessGrid(tuple(obj[key]))
        if "tree_strategy" in obj:
            obj["tree_strategy"] = TreeSearchStrategy(**obj["tree_strategy"])
        if "L_values" in obj:
            obj["L_values"] = tuple(obj["L_values"])
        return cls(**obj)


@dataclass(eq=False)
class AtlModel:
    """Fitted ATL families and the selected classifier.

    ``holdout_errors[i]`` is the number of mistakes of ``family[i]`` on the
    selection half, where ``family = family_P + family_Q``.
    """

    chosen: ClassifierHandle
    family_P: list[ClassifierHandle]
    family_Q: list[ClassifierHandle]
    split_index: int
    holdout_errors: np.ndarray
    calibration_errors: dict = field(default_factory=dict)

    @property
    def family(self) -> list[ClassifierHandle]:
        return self.family_P + self.family_Q

    @property
    def chosen_index(self) -> int:
        return next(i for i, c in enumerate(self.family) if c is self.chosen)

    def predict(self, X) -> np.ndarray:
        return predict(self.chosen, X)

    def describe(self) -> str:
        return describe_handle(self.chosen)

    def to_dict(self) -> dict:
        return {
            "chosen": handle_to_dict(self.chosen),
            "chosen_index": self.chosen_index,
            "split_index": self.split_index,
            "n_family_P": len(self.family_P),
            "n_family_Q": len(self.family_Q),
            "holdout_errors": [int(e) for e in self.holdout_errors],
        }


def data_digest(D: Dataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(D.X, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(D.y, dtype="i1").tobytes())
    return h.hexdigest()


def handle_to_dict(c: ClassifierHandle) -> dict:
    """JSON-ready description of a handle, with a digest of its reference sample."""
    if isinstance(c, SourceCalibrated):
        return {"variant": "source", "sigma": c.sigma, "L": c.L, "tree": c.h.to_dict(),
                "reference": {"role": "source", "n": c.ref.n, "sha256": data_digest(c.ref)}}
    if isinstance(c, TargetKnn):
        return {"variant": "target", "sigma": c.sigma,
                "reference": {"role": "target_first_half", "n": c.ref.n, "sha256": data_digest(c.ref)}}
    if isinstance(c, PlugIn):
        raise ValueError("plug-in handles cannot be exported")
    return {"variant": "constant", "label": c.label}


def handle_from_dict(obj: dict, D_P: Dataset | None, D_Q: Dataset | None) -> ClassifierHandle:
    """Rebuild a handle from :func:`handle_to_dict` output and the original samples."""
    from .core import Constant

    variant = obj["variant"]
    if variant == "constant":
        return Constant(int(obj["label"]))
    if variant == "source":
        ref = D_P
    elif variant == "target":
        ref = split_target(D_Q)[0] if D_Q is not None else None
    else:
        raise ValueError(f"unknown handle variant {variant!r}")
    if ref is None:
        raise ValueError(f"{variant} handle needs its reference sample")
    meta = obj["reference"]
    if ref.n != meta["n"] or data_digest(ref) != meta["sha256"]:
        raise ValueError("reference sample does not match the exported model")
    if variant == "source":
        return SourceCalibrated(float(obj["sigma"]), DecisionTreeFunction.from_dict(obj["tree"]),
                                ref.relabel(Origin.SOURCE), obj.get("L"))
    return TargetKnn(float(obj["sigma"]), ref)


def save_model(model: AtlModel, path: str | Path, **extra) -> Path:
    path = Path(path)
    path.write_text(json.dumps({**model.to_dict(), **extra}, indent=2))
    return path


def _tree_rng(seed: int, L: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x7265, L)))


def _check_family_size(cfg: AtlConfig, n_P: int, n_Q: int) -> None:
    size = (len(cfg.grid_P(n_P)) * len(cfg.L_values) if n_P else 0) + len(cfg.grid_Q(n_Q))
    if size > cfg.max_family:
        raise ValueError(f"family of {size} classifiers exceeds the limit of {cfg.max_family}")


def fit_atl(D_P: Dataset, D_Q: Dataset, cfg: AtlConfig | None = None,
            extra_candidates: Sequence[ClassifierHandle] = ()) -> AtlModel:
    """Fit the ATL classifier.

    Parameters
    ----------
    D_P : Dataset
        Source sample, possibly empty.
    D_Q : Dataset
        Target sample with at least two pairs.
    cfg : AtlConfig
    extra_candidates : sequence of handles
        Appended to the target family before the final selection (used to
        inject known classifiers in tests).

    Returns
    -------
    AtlModel
    """
    cfg = cfg or AtlConfig()
    D0, D1 = split_target(D_Q)
    if D_P.n and D_P.d != D_Q.d:
        raise ValueError("source and target dimensions differ")
    n_P = D_P.n
    _check_family_size(cfg, n_P, D_Q.n)
    D_P = D_P.relabel(Origin.SOURCE)

    family_P: list[ClassifierHandle] = []
    calib: dict = {}
    if n_P:
        sig_P = cfg.grid_P(n_P).as_array()
        objective = TreeObjective(D_P, D0, sig_P)
        trees_by_L = {}
        for L in cfg.L_values:
            if L == 0:
                h0 = DecisionTreeFunction.constant_half(D_P.d)
                trees_by_L[0] = [h0] * len(sig_P)
                calib[0] = objective.tree_errors(h0)
            else:
                trees, errs = search_trees(objective, L, cfg.tree_strategy, _tree_rng(cfg.seed, L))
                trees_by_L[L] = trees
                calib[L] = errs
        for j, sigma in enumerate(sig_P):
            for L in cfg.L_values:
                family_P.append(SourceCalibrated(float(sigma), trees_by_L[L][j], D_P, L))

    sig_Q = cfg.grid_Q(D_Q.n).as_array()
    family_Q: list[ClassifierHandle] = [TargetKnn(float(s), D0) for s in sig_Q]
    family_Q += list(extra_candidates)

    errors = np.concatenate([
        _source_holdout_errors(family_P, D_P, D1) if family_P else np.zeros(0, np.int64),
        _target_holdout_errors(sig_Q, D0, D1),
        np.array([int((predict(c, D1.X) != D1.y).sum()) for c in extra_candidates], dtype=np.int64),
    ])
    family = family_P + family_Q
    chosen = family[int(np.argmin(errors))]
    return AtlModel(chosen, family_P, family_Q, D0.n, errors, calib)


def _source_holdout_errors(family_P, D_P: Dataset, D1: Dataset) -> np.ndarray:
    table = NeighbourTable(D_P, D1.X)
    # handles sharing a tree are decided together, once for all their sigmas
    groups: dict[int, list[int]] = {}
    for i, c in enumerate(family_P):
        groups.setdefault(id(c.h), []).append(i)
    out = np.empty(len(family_P), dtype=np.int64)
    for idx in groups.values():
        idx = sorted(idx, key=lambda i: family_P[i].sigma)
        sigmas = np.array([family_P[i].sigma for i in idx])
        _, lab = table.tree_decide(family_P[idx[0]].h, sigmas)
        out[idx] = (lab != D1.y).sum(axis=-1)
    return out


def _target_holdout_errors(sigmas: np.ndarray, D0: Dataset, D1: Dataset) -> np.ndarray:
    table = NeighbourTable(D0, D1.X)
    _, lab = table.decide(table.half_numerators(), 2, sigmas)
    return (lab != D1.y).sum(axis=-1).astype(np.int64)


def pooled_sample(D_P: Dataset, D_Q: Dataset) -> Dataset:
    """Source and target pairs merged so that each half of the prefix split mixes both.

    The layout is ``[P0, Q0 | P1, Q1]`` where ``Q0`` is the usual first half
    of the target sample and ``P0`` takes up the rest of the first half, so
    the source precedes the target inside each half and the split point
    ``floor((n_P + n_Q)/2)`` falls exactly at the bar.
    """
    if D_P.n == 0:
        return D_Q
    if D_P.d != D_Q.d:
        raise ValueError("source and target dimensions differ")
    n = D_P.n + D_Q.n
    q0 = D_Q.n // 2
    p0 = n // 2 - q0
    P = D_P.relabel(Origin.TARGET)
    return P.head(p0).concat(D_Q.head(q0)).concat(P.tail(p0)).concat(D_Q.tail(q0))


def fit_pooled(D_P: Dataset, D_Q: Dataset, cfg: AtlConfig | None = None) -> AtlModel:
    """Treat the source sample as extra target data and fit without a source sample."""
    pooled = pooled_sample(D_P, D_Q)
    if pooled.n < 2:
        raise ValueError(f"need at least 2 pooled pairs, got {pooled.n}")
    return fit_atl(Dataset.empty(D_Q.d), pooled, cfg)
