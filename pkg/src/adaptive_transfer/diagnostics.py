"""Numerical checks of the distributional assumptions, risk evaluation and rate formulas."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ClassifierHandle, Dataset, Origin, ParameterVector
from .distributions import (
    MarginalSpec,
    PairSpec,
    UniformCube,
    bayes_labels,
    sample,
    sample_marginal,
)
from .neighbours import predict

DEFAULT_RADII = 512
R_MIN = 1e-6
R_MAX = 1 - 1e-9


# ---------------------------------------------------------------------------
# Lower density
# ---------------------------------------------------------------------------


def radius_grid(size: int = DEFAULT_RADII, r_min: float = R_MIN, r_max: float = R_MAX) -> np.ndarray:
    """Geometric grid of radii in (0, 1)."""
    if size < 2:
        raise ValueError("need at least two radii")
    return np.exp(np.linspace(math.log(r_min), math.log(r_max), size))


def refine_grid(grid: np.ndarray) -> np.ndarray:
    """Insert the geometric midpoint between neighbours, keeping every original radius."""
    grid = np.asarray(grid, dtype=float)
    mids = np.sqrt(grid[:-1] * grid[1:])
    out = np.empty(2 * len(grid) - 1)
    out[0::2] = grid
    out[1::2] = mids
    return out


def density_ratios(marginal: MarginalSpec, X, d0: float, radii=None) -> np.ndarray:
    """``mu(B_r(x)) / r^d0`` for every row of ``X`` and every radius, shape (m, R)."""
    radii = radius_grid() if radii is None else np.asarray(radii, dtype=float)
    if not hasattr(marginal, "ball_mass"):
        raise TypeError(f"no ball-mass formula for {type(marginal).__name__}")
    X = np.asarray(X, dtype=float).reshape(-1, marginal.dim)
    return marginal.ball_mass(X, radii) / radii[None, :] ** d0


def lower_density(marginal: MarginalSpec, x, d0: float, r_grid=DEFAULT_RADII):
    """Grid estimate of ``inf_{0<r<1} mu(B_r(x)) / r^d0``.

    Parameters
    ----------
    marginal : MarginalSpec
    x : array-like
        One point (returns a float) or a 2-d array of points.
    d0 : float
    r_grid : int or array
        Number of geometric radii or the radii themselves.

    Notes
    -----
    A minimum over finitely many radii can only overestimate the infimum, so
    the value is an upper bound that decreases under refinement.
    """
    if not hasattr(marginal, "ball_mass"):
        raise TypeError(f"no ball-mass formula for {type(marginal).__name__}")
    radii = radius_grid(r_grid) if np.isscalar(r_grid) else np.asarray(r_grid, dtype=float)
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1 and (marginal.dim > 1 or arr.ndim == 0)
    X = arr.reshape(-1, marginal.dim)
    out = np.empty(X.shape[0])
    step = max(1, (1 << 21) // len(radii))
    for a in range(0, X.shape[0], step):
        out[a:a + step] = density_ratios(marginal, X[a:a + step], d0, radii).min(axis=1)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Assumption checkers
# ---------------------------------------------------------------------------


@dataclass
class GridCheck:
    level: float
    estimate: float
    standard_error: float
    bound: float
    passed: bool


@dataclass
class AssumptionReport:
    name: str
    parameters: dict
    checks: list[GridCheck] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"name": self.name, "parameters": self.parameters, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks], **self.extra}


def _power(xi: float, gamma: float) -> float:
    if math.isinf(gamma):
        return 0.0 if xi < 1 else (1.0 if xi == 1 else math.inf)
    return xi ** gamma


def _mc_checks(flags: np.ndarray, levels, bounds) -> list[GridCheck]:
    n = flags.shape[1]
    out = []
    for lvl, row, bound in zip(levels, flags, bounds):
        p = float(row.mean())
        se = math.sqrt(max(p * (1 - p), 0.0) / n)
        out.append(GridCheck(float(lvl), p, se, float(bound), bool(p <= bound + 3 * se)))
    return out


def check_tail_assumption(marginal_P: MarginalSpec, marginal_Q: MarginalSpec, d_P: float, d_Q: float,
                          gamma_P: float, gamma_Q: float, C_PQ: float, xi_grid, mc_n: int = 20_000,
                          seed=0, r_grid=DEFAULT_RADII) -> dict[str, AssumptionReport]:
    """Monte Carlo estimates of the target mass where either lower density falls below ``xi``.

    Returns reports ``"target"`` (``omega_{mu_Q, d_Q} < xi`` against
    ``C_PQ xi^gamma_Q``) and ``"source"`` (``omega_{mu_P, d_P} < xi`` against
    ``C_PQ xi^gamma_P``).  A level passes when the estimate is within three
    standard errors of the bound.
    """
    rng = np.random.default_rng(seed)
    X = sample_marginal(marginal_Q, mc_n, rng)
    xi = np.asarray(xi_grid, dtype=float)
    params = {"d_P": d_P, "d_Q": d_Q, "gamma_P": gamma_P, "gamma_Q": gamma_Q, "C_PQ": C_PQ, "mc_n": mc_n}
    out = {}
    for key, marginal, dd, gamma in (("target", marginal_Q, d_Q, gamma_Q), ("source", marginal_P, d_P, gamma_P)):
        omega = lower_density(marginal, X, dd, r_grid)
        omega = np.atleast_1d(omega)
        flags = omega[None, :] < xi[:, None]
        bounds = [C_PQ * _power(v, gamma) for v in xi]
        out[key] = AssumptionReport(f"tail-{key}", params, _mc_checks(flags, xi, bounds),
                                    {"omega_min": float(omega.min())})
    return out


def check_margin_assumption(spec: PairSpec, alpha: float, C_M: float, zeta_grid, mc_n: int = 20_000,
                            seed=0) -> AssumptionReport:
    """Estimate ``mu_Q(|eta_Q - 1/2| < zeta)`` against ``C_M zeta^alpha``."""
    X = sample_marginal(spec.marginal_Q, mc_n, np.random.default_rng(seed))
    gap = np.abs(spec.eta_Q(X) - 0.5)
    z = np.asarray(zeta_grid, dtype=float)
    flags = gap[None, :] < z[:, None]
    return AssumptionReport("margin", {"alpha": alpha, "C_M": C_M, "mc_n": mc_n},
                            _mc_checks(flags, z, C_M * z ** alpha))


def check_smoothness(spec: PairSpec, which, beta: float, C_S: float, n_pairs: int = 10_000, seed=0,
                     all_pairs: bool = False) -> AssumptionReport:
    """Largest ``|eta(x) - eta(x')| / |x - x'|^beta`` over sampled support pairs.

    With ``all_pairs`` the ratio is taken over every pair of ``n_pairs``
    sampled points instead of ``n_pairs`` independent pairs.
    """
    origin = Origin(which)
    marginal = spec.marginal(origin)
    rng = np.random.default_rng(seed)
    if all_pairs:
        X = sample_marginal(marginal, n_pairs, rng)
        e = spec.eta(origin, X)
        i, j = np.triu_indices(len(X), k=1)
        A, B, ea, eb = X[i], X[j], e[i], e[j]
    else:
        A = sample_marginal(marginal, n_pairs, rng)
        B = sample_marginal(marginal, n_pairs, rng)
        ea, eb = spec.eta(origin, A), spec.eta(origin, B)
    dist = np.linalg.norm(A - B, axis=1)
    keep = dist > 0
    if np.any(~keep & (ea != eb)):
        ratio = math.inf
    else:
        ratio = float(np.max(np.abs(ea - eb)[keep] / dist[keep] ** beta)) if keep.any() else 0.0
    return AssumptionReport("smoothness", {"which": origin.value, "beta": beta, "C_S": C_S},
                            [GridCheck(beta, ratio, 0.0, C_S, bool(ratio <= C_S))], {"max_ratio": ratio})


# ---------------------------------------------------------------------------
# Risk
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarlo:
    n: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class Quadrature:
    resolution: int = 4096


@dataclass
class RiskReport:
    test_error: float
    excess_error: float
    mode: str
    n_test: int | None = None
    resolution: int | None = None
    standard_error: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def risk(classifier: ClassifierHandle, spec: PairSpec, mode=None) -> RiskReport:
    """Test error and excess test error of ``classifier`` under the target distribution.

    ``MonteCarlo`` draws a fresh test sample; ``Quadrature`` integrates on a
    midpoint tensor grid and needs a uniform-cube target marginal.
    """
    mode = mode or Quadrature()
    if isinstance(mode, MonteCarlo):
        test = sample(spec, Origin.TARGET, mode.n, mode.seed)
        pred = predict(classifier, test.X)
        wrong = pred != test.y
        eta_q = spec.eta_Q(test.X)
        excess = np.abs(2 * eta_q - 1) * (pred != bayes_labels(spec, test.X))
        p = float(wrong.mean())
        return RiskReport(p, float(excess.mean()), "mc", n_test=mode.n,
                          standard_error=math.sqrt(p * (1 - p) / mode.n))
    if isinstance(mode, Quadrature):
        if not isinstance(spec.marginal_Q, UniformCube):
            raise ValueError("quadrature needs a uniform-cube target marginal")
        d = spec.d
        res = mode.resolution
        if res ** d > 1 << 26:
            raise ValueError("quadrature grid too large")
        axis = (np.arange(res) + 0.5) / res
        total_err = total_exc = 0.0
        rows = max(1, (1 << 20) // res ** (d - 1))
        tail = np.stack(np.meshgrid(*([axis] * (d - 1)), indexing="ij"), -1).reshape(-1, d - 1) if d > 1 else None
        for a in range(0, res, rows):
            head = axis[a:a + rows]
            if tail is None:
                X = head.reshape(-1, 1)
            else:
                X = np.hstack([np.repeat(head, len(tail))[:, None], np.tile(tail, (len(head), 1))])
            e = spec.eta_Q(X)
            pred = predict(classifier, X)
            total_err += float(np.sum(np.where(pred == 1, 1 - e, e)))
            total_exc += float(np.sum(np.abs(2 * e - 1) * (pred != (e >= 0.5))))
        cells = float(res) ** d
        return RiskReport(total_err / cells, total_exc / cells, "quad", resolution=res)
    raise ValueError(f"unsupported risk mode {mode!r}")


def empirical_error(classifier: ClassifierHandle, data: Dataset) -> float:
    return float(np.mean(predict(classifier, data.X) != data.y))


# ---------------------------------------------------------------------------
# Rates
# ---------------------------------------------------------------------------


def log_plus(x: float) -> float:
    """``log x`` for ``x >= e`` and 1 otherwise."""
    return math.log(x) if x >= math.e else 1.0


def rate_exponent(beta: float, gamma: float, alpha: float, dim: float) -> float:
    """``beta gamma (1 + alpha) / (gamma (2 beta + dim) + alpha beta)``; ``gamma = inf`` is the limit."""
    if math.isinf(gamma):
        return beta * (1 + alpha) / (2 * beta + dim)
    return beta * gamma * (1 + alpha) / (gamma * (2 * beta + dim) + alpha * beta)


def _pow(base: float, e: float) -> float:
    if math.isinf(base):
        return math.inf
    return base ** e


@dataclass(frozen=True)
class RateTerms:
    source: float
    tree: float
    approximation: float

    @property
    def total(self) -> float:
        return self.source + self.tree + self.approximation


@dataclass(frozen=True)
class RateBounds:
    """Bracketed rate expressions; ``*_delta`` and ``D_term`` are set only when a confidence level is given."""

    A_upper: float
    B_upper: float
    A_lower: float
    B_lower: float
    D_term: float | None = None
    A_delta: float | None = None
    B_delta: float | None = None
    terms: dict = field(default_factory=dict)

    @property
    def lower(self) -> float:
        return min(self.A_lower, self.B_lower, 1.0)

    @property
    def upper(self) -> float:
        return min(self.A_upper, self.B_upper, 1.0)

    def to_dict(self) -> dict:
        def enc(v):
            return "inf" if isinstance(v, float) and math.isinf(v) else v

        out = {k: enc(v) for k, v in asdict(self).items() if k != "terms"}
        out["terms"] = {k: {kk: enc(vv) for kk, vv in v.items()} for k, v in self.terms.items()}
        out["lower"], out["upper"] = enc(self.lower), enc(self.upper)
        return out


def transfer_terms(theta: ParameterVector, n_P: int, n_Q: int, a0: float, a1: float) -> RateTerms:
    eP = rate_exponent(theta.beta, theta.gamma_P, theta.alpha, theta.d_P)
    denom = theta.phi ** 2 * n_P
    first = math.inf if denom == 0 else _pow(a0 / denom, eP)
    tree_rate = math.inf if n_Q == 0 else (theta.Lstar * a1 / n_Q) ** ((1 + theta.alpha) / (2 + theta.alpha))
    second = min(tree_rate, (1 - theta.phi) ** (1 + theta.alpha))
    third = (theta.Delta / theta.phi) ** (1 + theta.alpha)
    return RateTerms(first, second, third)


def target_term(theta: ParameterVector, n_Q: int, b: float) -> float:
    eQ = rate_exponent(theta.beta, theta.gamma_Q, theta.alpha, theta.d_Q)
    return math.inf if n_Q == 0 else (b / n_Q) ** eQ


def rate_bounds(theta: ParameterVector, n_P: int, n_Q: int, delta: float | None = None) -> RateBounds:
    """Evaluate the minimax rate expressions (and the high-probability version when ``delta`` is given).

    A zero source sample makes the source term infinite, so the transfer
    expression never wins the minimum with the target-only rate and 1.
    """
    if n_P < 0 or n_Q < 0:
        raise ValueError("sample sizes must be non-negative")
    d = theta.ambient_d
    low = transfer_terms(theta, n_P, n_Q, 1.0, 1.0)
    up = transfer_terms(theta, n_P, n_Q, log_plus(n_P), log_plus(theta.Lstar * d * (n_P + n_Q)))
    terms = {"lower": asdict(low), "upper": asdict(up)}
    kw = {}
    if delta is not None:
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        hp = transfer_terms(theta, n_P, n_Q, log_plus(n_P / delta), log_plus(theta.Lstar * d * n_P / delta))
        terms["delta"] = asdict(hp)
        kw = {
            "A_delta": hp.total,
            "B_delta": target_term(theta, n_Q, log_plus(n_Q / delta)),
            "D_term": math.inf if n_Q == 0 else
            (log_plus((n_P + n_Q) / delta) / n_Q) ** ((1 + theta.alpha) / (2 + theta.alpha)),
        }
    return RateBounds(up.total, target_term(theta, n_Q, log_plus(n_Q)), low.total,
                      target_term(theta, n_Q, 1.0), terms=terms, **kw)


def lattice_lower_density_bound(geometry, on_atom: bool) -> float:
    """Guaranteed lower-density floor of the cube-plus-lattice mixture (cube or lattice points)."""
    if not on_atom:
        return 1 - geometry.w
    d0 = geometry.d0
    return 2.0 ** (-3 * d0) * min(1.0, geometry.w * geometry.q ** d0 / (geometry.n_atoms * geometry.r ** d0))


__all__ = [
    "AssumptionReport", "GridCheck", "MonteCarlo", "Quadrature", "RateBounds", "RiskReport",
    "check_margin_assumption", "check_smoothness", "check_tail_assumption", "density_ratios",
    "empirical_error", "lattice_lower_density_bound", "log_plus", "lower_density", "radius_grid",
    "rate_bounds", "rate_exponent", "refine_grid", "risk",
]
