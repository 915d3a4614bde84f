"""Repeated-draw simulation experiments and the two-setting benchmark table.

Every repetition derives its own random streams from ``(master_seed,
setting, repetition, purpose)``, so results do not depend on the number of
worker processes or on how many repetitions are run.  Within a repetition
all source sizes share one nested source draw.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .atl import AtlConfig, fit_atl, fit_pooled
from .core import Dataset, Origin, PlugIn
from .distributions import PairSpec, bayes_labels, sample, setting1, setting2
from .neighbours import predict
from .trees import TreeSearchStrategy

METHODS = ("atl", "pooled", "target_only", "oracle")

# published benchmark values: (mean %, standard error %)
REFERENCE_TABLE = {
    ("setting1", "atl"): {0: (30.0, 0.6), 100: (27.4, 0.5), 200: (25.6, 0.4), 500: (23.4, 0.5), 1000: (22.4, 0.4)},
    ("setting1", "pooled"): {100: (29.1, 0.4), 200: (27.5, 0.5), 500: (25.8, 0.4), 1000: (24.0, 0.3)},
    ("setting2", "atl"): {0: (30.3, 0.5), 100: (28.5, 0.5), 200: (26.7, 0.5), 500: (24.7, 0.4), 1000: (24.2, 0.4)},
    ("setting2", "pooled"): {100: (29.4, 0.5), 200: (29.0, 0.5), 500: (29.0, 0.5), 1000: (27.6, 0.4)},
}
TABLE_N_P = (0, 100, 200, 500, 1000)

_PURPOSE = {"target": 0, "source": 1, "test": 2, "fit": 3}


def default_atl_config() -> AtlConfig:
    return AtlConfig(L_values=(0, 1, 2), tree_strategy=TreeSearchStrategy.monte_carlo(100))


def setting_key(name: str) -> int:
    return zlib.crc32(name.encode())


def stream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)))


def derived_seed(master_seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)).generate_state(1, np.uint64)[0])


def worker_count(requested: int | None = None) -> int:
    """Worker processes: explicit request, else ``ATL_THREADS``, else all cores."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("ATL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"ATL_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    spec: PairSpec
    n_P_list: tuple[int, ...] = TABLE_N_P
    n_Q: int = 100
    n_test: int = 1000
    repetitions: int = 50
    atl: AtlConfig = field(default_factory=default_atl_config)
    methods: tuple[str, ...] = ("atl", "pooled")
    master_seed: int = 0
    setting: str = ""

    def __post_init__(self):
        object.__setattr__(self, "n_P_list", tuple(int(n) for n in self.n_P_list))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.n_test < 1:
            raise ValueError("n_test must be >= 1")
        if self.n_Q < 2:
            raise ValueError("n_Q must be >= 2")
        if not self.n_P_list or any(n < 0 for n in self.n_P_list):
            raise ValueError("n_P_list must be nonempty and non-negative")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    @property
    def name(self) -> str:
        return self.setting or self.spec.name or "custom"


@dataclass
class CellResult:
    setting: str
    method: str
    n_P: int
    errors: list[float]
    flagged: str = ""

    @property
    def available(self) -> bool:
        return bool(self.errors)

    @property
    def mean_error_pct(self) -> float:
        return 100 * float(np.mean(self.errors)) if self.errors else math.nan

    @property
    def std_error_pct(self) -> float:
        if len(self.errors) < 2:
            return math.nan
        return 100 * float(np.std(self.errors, ddof=1)) / math.sqrt(len(self.errors))


@dataclass
class ExperimentResult:
    cells: list[CellResult]
    runtime_s: float
    seeds: dict

    def cell(self, setting: str, method: str, n_P: int) -> CellResult:
        for c in self.cells:
            if (c.setting, c.method, c.n_P) == (setting, method, n_P):
                return c
        raise KeyError((setting, method, n_P))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting", "method", "n_P", "mean_error_pct", "std_error_pct"])
        for c in self.cells:
            if c.available:
                w.writerow([c.setting, c.method, c.n_P, f"{c.mean_error_pct:.4f}", f"{c.std_error_pct:.4f}"])
            else:
                w.writerow([c.setting, c.method, c.n_P, "NA", "NA"])
        return buf.getvalue()

    def per_rep(self) -> dict:
        return {f"{c.setting}/{c.method}/{c.n_P}": c.errors for c in self.cells}


def _run_repetition(args) -> dict[tuple[str, int], float]:
    cfg, rep = args
    skey = setting_key(cfg.name)
    seed = cfg.master_seed
    spec = cfg.spec
    D_Q = sample(spec, Origin.TARGET, cfg.n_Q, stream(seed, skey, rep, _PURPOSE["target"]))
    D_P_full = sample(spec, Origin.SOURCE, max(cfg.n_P_list), stream(seed, skey, rep, _PURPOSE["source"]))
    test = sample(spec, Origin.TARGET, cfg.n_test, stream(seed, skey, rep, _PURPOSE["test"]))
    out: dict[tuple[str, int], float] = {}
    for n_P in cfg.n_P_list:
        D_P = D_P_full.head(n_P)
        for m_id, method in enumerate(cfg.methods):
            if method == "pooled" and n_P == 0:
                continue
            fit_seed = derived_seed(seed, skey, rep, _PURPOSE["fit"], n_P, m_id)
            atl_cfg = AtlConfig(**{**cfg.atl.__dict__, "seed": fit_seed})
            if method == "atl":
                pred = fit_atl(D_P, D_Q, atl_cfg).predict(test.X)
            elif method == "pooled":
                pred = fit_pooled(D_P, D_Q, atl_cfg).predict(test.X)
            elif method == "target_only":
                pred = fit_atl(Dataset.empty(spec.d), D_Q, atl_cfg).predict(test.X)
            else:
                pred = predict(PlugIn(lambda X: bayes_labels(spec, X), "bayes"), test.X)
            out[(method, n_P)] = float(np.mean(pred != test.y))
    return out


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, progress=None) -> ExperimentResult:
    """Run every repetition and aggregate per (method, n_P) cell.

    The pooled method is skipped (reported as unavailable) when ``n_P = 0``,
    where it would coincide with the target-only fit.
    """
    t0 = time.perf_counter()
    tasks = [(cfg, rep) for rep in range(cfg.repetitions)]
    n_workers = min(worker_count(workers), len(tasks))
    if n_workers <= 1:
        reps = []
        for t in tasks:
            reps.append(_run_repetition(t))
            if progress:
                progress(len(reps), len(tasks))
    else:
        with ProcessPoolExecutor(n_workers) as pool:
            reps = list(pool.map(_run_repetition, tasks))
    cells = []
    for n_P in cfg.n_P_list:
        for method in cfg.methods:
            errs = [r[(method, n_P)] for r in reps if (method, n_P) in r]
            flag = "pooled with no source data equals the target-only fit" if method == "pooled" and n_P == 0 else ""
            cells.append(CellResult(cfg.name, method, n_P, errs, flag))
    seeds = {"master_seed": cfg.master_seed, "setting_key": setting_key(cfg.name),
             "streams": "SeedSequence(master_seed, spawn_key=(setting_key, repetition, purpose, ...))"}
    return ExperimentResult(cells, time.perf_counter() - t0, seeds)


def table1_configs(master_seed: int = 0, repetitions: int = 50, atl: AtlConfig | None = None) -> list[ExperimentConfig]:
    atl = atl or default_atl_config()
    return [ExperimentConfig(setting1(), TABLE_N_P, 100, 1000, repetitions, atl, ("atl", "pooled"), master_seed, "setting1"),
            ExperimentConfig(setting2(), TABLE_N_P, 100, 1000, repetitions, atl, ("atl", "pooled"), master_seed, "setting2")]


def _cell_order(cells: Sequence[CellResult]) -> list[CellResult]:
    rank = {"atl": 0, "pooled": 1}
    return sorted(cells, key=lambda c: (c.setting, rank.get(c.method, 9), c.n_P))


def format_table(result: ExperimentResult) -> str:
    lines = [f"{'setting':<9} {'n_P':>5} | {'ATL':>14} {'reference':>12} | {'pooled':>14} {'reference':>12}",
             "-" * 76]

    def fmt(c):
        return "NA (NA)" if c is None or not c.available else f"{c.mean_error_pct:.1f} ({c.std_error_pct:.1f})"

    def ref(setting, method, n_P):
        v = REFERENCE_TABLE.get((setting, method), {}).get(n_P)
        return "NA (NA)" if v is None else f"{v[0]:.1f} ({v[1]:.1f})"

    for setting in sorted({c.setting for c in result.cells}):
        for n_P in sorted({c.n_P for c in result.cells if c.setting == setting}):
            def get(method):
                try:
                    return result.cell(setting, method, n_P)
                except KeyError:
                    return None
            lines.append(f"{setting:<9} {n_P:>5} | {fmt(get('atl')):>14} {ref(setting, 'atl', n_P):>12} | "
                         f"{fmt(get('pooled')):>14} {ref(setting, 'pooled', n_P):>12}")
    return "\n".join(lines) + "\n"


def reproduce_table1(out_path: str | Path, master_seed: int = 0, repetitions: int = 50,
                     workers: int | None = None, atl: AtlConfig | None = None, progress=None) -> dict:
    """Run both settings and write ``table1.csv``, ``table1.txt`` and ``table1_reps.json``.

    Returns the written paths and the combined :class:`ExperimentResult`.
    """
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    cells, runtime = [], 0.0
    for cfg in table1_configs(master_seed, repetitions, atl):
        res = run_experiment(cfg, workers, progress)
        cells += res.cells
        runtime += res.runtime_s
    result = ExperimentResult(_cell_order(cells), runtime, {"master_seed": master_seed})
    paths = {"csv": out / "table1.csv", "text": out / "table1.txt", "reps": out / "table1_reps.json"}
    paths["csv"].write_text(result.to_csv())
    paths["text"].write_text(format_table(result))
    paths["reps"].write_text(json.dumps(result.per_rep(), indent=1, sort_keys=True))
    return {"paths": paths, "result": result}
