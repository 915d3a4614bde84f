"""Command line entry point.

Exit codes: 0 on success, 2 when inputs fail validation, 1 on any other error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .atl import AtlConfig, fit_atl, handle_from_dict, save_model
from .core import Dataset, Origin, ParameterVector
from .diagnostics import (
    MonteCarlo,
    Quadrature,
    check_margin_assumption,
    check_smoothness,
    check_tail_assumption,
    rate_bounds,
    risk,
)
from .distributions import load_spec, sample
from .experiment import default_atl_config, reproduce_table1


class ValidationError(Exception):
    pass


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def _load_spec(path: str):
    try:
        return load_spec(path)
    except FileNotFoundError:
        raise ValidationError(f"no such spec file: {path}") from None
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: malformed spec ({exc})") from None


def _load_theta(path: str) -> ParameterVector:
    try:
        return ParameterVector.from_dict(_read_json(path))
    except TypeError as exc:
        raise ValidationError(f"{path}: malformed parameter vector ({exc})") from None


def _load_csv(path: str) -> Dataset:
    if not Path(path).exists():
        raise ValidationError(f"no such data file: {path}")
    return Dataset.from_csv(path)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _emit(obj: dict) -> None:
    # serialise fully before writing so a failure leaves stdout clean
    sys.stdout.write(json.dumps(obj, indent=2, default=_jsonable) + "\n")


def cmd_simulate(args) -> int:
    spec = _load_spec(args.spec)
    if args.n < 0:
        raise ValidationError("--n must be non-negative")
    data = sample(spec, Origin(args.which), args.n, args.seed)
    data.to_csv(args.out)
    _emit({"out": str(args.out), "n": data.n, "d": data.d, "origin": data.origin.value})
    return 0


def cmd_fit(args) -> int:
    D_P = _load_csv(args.source) if args.source else None
    D_Q = _load_csv(args.target)
    if D_P is None:
        D_P = Dataset.empty(D_Q.d)
    try:
        cfg = AtlConfig.from_dict(_read_json(args.config)) if args.config else default_atl_config()
    except TypeError as exc:
        raise ValidationError(f"{args.config}: malformed config ({exc})") from None
    model = fit_atl(D_P, D_Q, cfg)
    data = {"source": str(Path(args.source).resolve()) if args.source else None,
            "target": str(Path(args.target).resolve())}
    save_model(model, args.model_out, data=data, config=cfg.to_dict())
    _emit({"model": str(args.model_out), "chosen": model.describe(),
           "holdout_errors": int(model.holdout_errors[model.chosen_index]),
           "family_size": len(model.family)})
    return 0


def cmd_evaluate(args) -> int:
    obj = _read_json(args.model)
    spec = _load_spec(args.spec)
    paths = obj.get("data", {})
    D_P = _load_csv(paths["source"]) if paths.get("source") else None
    D_Q = _load_csv(paths["target"]) if paths.get("target") else None
    handle = handle_from_dict(obj["chosen"], D_P, D_Q)
    mode = MonteCarlo(args.n_test, args.seed) if args.mode == "mc" else Quadrature(args.resolution)
    _emit(risk(handle, spec, mode).to_dict())
    return 0


def cmd_reproduce(args) -> int:
    def progress(done, total):
        if args.verbose:
            print(f"  repetition {done}/{total}", file=sys.stderr)

    out = reproduce_table1(args.out, args.seed, args.repetitions, args.workers, progress=progress)
    sys.stdout.write(out["paths"]["text"].read_text())
    _emit({k: str(v) for k, v in out["paths"].items()})
    return 0


def cmd_check(args) -> int:
    spec = _load_spec(args.spec)
    theta = _load_theta(args.theta)
    report = {"theta": theta.to_dict()}
    try:
        tails = check_tail_assumption(spec.marginal_P, spec.marginal_Q, theta.d_P, theta.d_Q, theta.gamma_P,
                                      theta.gamma_Q, theta.C_PQ, args.xi, args.mc_n, args.seed)
        report["tail"] = {k: v.to_dict() for k, v in tails.items()}
    except TypeError as exc:
        report["tail"] = {"skipped": str(exc)}
    report["margin"] = check_margin_assumption(spec, theta.alpha, theta.C_M, args.zeta, args.mc_n, args.seed).to_dict()
    report["smoothness"] = {w: check_smoothness(spec, w, theta.beta, theta.C_S, args.mc_n, args.seed).to_dict()
                            for w in ("P", "Q")}
    _emit(report)
    return 0


def cmd_rates(args) -> int:
    theta = _load_theta(args.theta)
    out = rate_bounds(theta, args.np, args.nq, args.delta).to_dict()
    _emit({"theta": theta.to_dict(), "n_P": args.np, "n_Q": args.nq, "delta": args.delta, **out})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptive-transfer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a labelled sample from a pair specification")
    s.add_argument("--spec", required=True, help="spec JSON file, or setting1/setting2")
    s.add_argument("--which", required=True, choices=["P", "Q"])
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit the adaptive transfer classifier")
    s.add_argument("--source", help="source CSV (omit for target-only)")
    s.add_argument("--target", required=True)
    s.add_argument("--config", help="AtlConfig JSON")
    s.add_argument("--model-out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("evaluate", help="test and excess error of a fitted model")
    s.add_argument("--model", required=True)
    s.add_argument("--spec", required=True)
    s.add_argument("--mode", choices=["mc", "quad"], default="mc")
    s.add_argument("--n-test", type=int, default=10_000)
    s.add_argument("--resolution", type=int, default=512)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("reproduce-table1", help="run the two-setting benchmark")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--repetitions", type=int, default=50)
    s.add_argument("--workers", type=int, help="defaults to ATL_THREADS or all cores")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("check-assumptions", help="Monte Carlo checks of tail, margin and smoothness conditions")
    s.add_argument("--spec", required=True)
    s.add_argument("--theta", required=True)
    s.add_argument("--xi", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.4])
    s.add_argument("--zeta", type=float, nargs="+", default=[0.05, 0.1, 0.25, 0.5])
    s.add_argument("--mc-n", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("rates", help="evaluate the minimax rate expressions")
    s.add_argument("--theta", required=True)
    s.add_argument("--np", type=int, required=True)
    s.add_argument("--nq", type=int, required=True)
    s.add_argument("--delta", type=float)
    s.set_defaults(func=cmd_rates)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
