"""Command-line interface: JSON parameter files in, JSON/CSV results out.

Exit codes: 0 success, 2 validation or domain error, 3 numerical error,
4 infeasible budget. All numeric output is full double precision with a dot
decimal separator, and every command is deterministic given its arguments.

Noise convention: sigma multiplies the stepsize, i.e. the injected noise per
step is N(0, eta^2 sigma^2 I). If your convention puts the total variance at
eta * s^2, pass sigma = s / sqrt(eta); if it is s^2 outright, pass
sigma = s / eta.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Any, Sequence

import numpy as np

from . import accountant, lowerbound, optimizer
from .types import (
    InfeasibleBudgetError,
    NumericalError,
    PrivacyParams,
    SeededStream,
    load_params,
    validate,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4


def _emit(text: str, out_path: str | None) -> None:
    sys.stdout.write(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _emit_json(obj: Any, out_path: str | None) -> None:
    _emit(json.dumps(obj, sort_keys=True, indent=2) + "\n", out_path)


def _parse_t_grid(spec: str) -> list[int]:
    """Either a comma list ("1,10,100") or "geom:lo:hi:points"."""
    if spec.startswith("geom:"):
        parts = spec.split(":")
        if len(parts) != 4:
            raise ValueError("geometric grid spec must be geom:lo:hi:points")
        lo, hi, points = float(parts[1]), float(parts[2]), int(parts[3])
        if lo < 1 or hi < lo or points < 1:
            raise ValueError("need 1 <= lo <= hi and points >= 1")
        raw = np.geomspace(lo, hi, points)
        grid = sorted({int(round(v)) for v in raw})
    else:
        grid = [int(v) for v in spec.split(",") if v.strip()]
    if not grid or any(t < 1 for t in grid) or any(
        b >= a for a, b in zip(grid[1:], grid[:-1])
    ):
        raise ValueError("t-grid must be a nonempty ascending list of counts >= 1")
    return grid


def _load_validated(path: str, *, default_sigma: float | None = None) -> PrivacyParams:
    params = load_params(path, default_sigma=default_sigma)
    report = validate(params)
    if not report.ok:
        for violation in report.violations:
            sys.stderr.write(f"invalid parameters: {violation}\n")
        raise SystemExit(EXIT_VALIDATION)
    return params


def _account_payload(result: accountant.AccountResult) -> dict[str, Any]:
    return {
        "epsilon": result.epsilon,
        "branch": result.branch,
        "inner_solution": dict(result.inner_solution),
        "formula_id": result.formula_id,
    }


def cmd_compute_epsilon(args: argparse.Namespace) -> int:
    params = _load_validated(args.params)
    result = accountant.account(params, args.regime, args.alpha)
    payload = _account_payload(result)
    payload["alpha"] = args.alpha
    if args.delta is not None:
        payload["delta"] = args.delta
        payload["epsilon_dp"] = accountant.rdp_to_dp(args.alpha, result.epsilon, args.delta)
    _emit_json(payload, args.out)
    return EXIT_OK


def cmd_privacy_curve(args: argparse.Namespace) -> int:
    params = _load_validated(args.params)
    grid = _parse_t_grid(args.t_grid)
    lines = ["T,epsilon,branch"]
    for t in grid:
        pt = PrivacyParams(
            n=params.n,
            b=params.b,
            lipschitz=params.lipschitz,
            smoothness=params.smoothness,
            strong_convexity=params.strong_convexity,
            diameter=params.diameter,
            stepsize=params.stepsize[0] if params.has_constant_stepsize else params.stepsize[:t],
            sigma=params.sigma,
            iterations=t,
            adjacency=params.adjacency,
            sensitivity=params.sensitivity,
        )
        result = accountant.account(pt, args.regime, args.alpha)
        lines.append(f"{t},{result.epsilon!r},{result.branch}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_solve_sigma(args: argparse.Namespace) -> int:
    params = _load_validated(args.params, default_sigma=1.0)
    sigma = accountant.solve_sigma(params, args.regime, args.alpha, args.epsilon)
    result = accountant.account(params.with_sigma(sigma), args.regime, args.alpha)
    _emit_json(
        {
            "sigma": sigma,
            "epsilon_at_sigma": result.epsilon,
            "epsilon_budget": args.epsilon,
            "alpha": args.alpha,
            "regime": args.regime,
        },
        args.out,
    )
    return EXIT_OK


def _loss_from_json(spec: dict[str, Any], dimension: int) -> optimizer.LossSpec:
    kind = spec.get("kind")
    if kind == "zero":
        return optimizer.ZeroLoss(dimension=dimension)
    if kind == "linear":
        return optimizer.LinearLoss(gradient=spec["gradient"])
    if kind == "quadratic":
        return optimizer.QuadraticLoss(center=spec["center"], curvatures=spec["curvatures"])
    if kind == "logistic":
        return optimizer.LogisticLoss(feature=spec["feature"], label=spec["label"])
    raise ValueError(f"unknown loss kind {kind!r}")


def _set_from_json(spec: dict[str, Any]) -> optimizer.ConstraintSet:
    kind = spec.get("kind")
    if kind == "ball":
        return optimizer.Ball(center=spec["center"], radius=spec["radius"])
    if kind == "box":
        return optimizer.Box(lower=spec["lower"], upper=spec["upper"])
    raise ValueError(f"unknown constraint set kind {kind!r}")


def cmd_run_sgd(args: argparse.Namespace) -> int:
    params = _load_validated(args.params)
    with open(args.params, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    experiment = raw.get("experiment")
    if experiment:
        dimension = int(experiment.get("dimension", 1))
        losses = [_loss_from_json(s, dimension) for s in experiment["losses"]]
        constraint_set = _set_from_json(experiment["constraint_set"])
    else:
        # Default experiment: the one-biased-example construction in 1D, i.e.
        # n-1 zero losses plus one linear loss of slope -L on [-D/2, D/2].
        half = params.diameter / 2.0
        if math.isinf(half):
            raise ValueError("run-sgd default experiment needs a finite diameter")
        losses = [optimizer.ZeroLoss(dimension=1) for _ in range(params.n - 1)]
        losses.append(optimizer.LinearLoss(gradient=[-params.lipschitz]))
        constraint_set = optimizer.Box(lower=[-half], upper=[half])
    trajectory = optimizer.run_noisy_sgd(
        losses, constraint_set, params, args.mode, SeededStream(args.seed)
    )
    _emit(trajectory.to_csv(), args.out)
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    params = _load_validated(args.params)
    wp = lowerbound.WalkParams(
        n=params.n,
        b=params.b,
        lipschitz=params.lipschitz,
        eta=params.eta,
        sigma=params.sigma,
        diameter=params.diameter,
        iterations=params.iterations,
    )
    report = lowerbound.simulate_walks(wp, args.replicas, SeededStream(args.seed))
    verdict = lowerbound.refute_dp(report, args.epsilon, args.delta)
    payload = report.to_dict()
    payload["epsilon"] = args.epsilon
    payload["delta"] = args.delta
    payload["delta_hat"] = report.delta_hat(args.epsilon)
    payload["rdp_refutation_scale"] = lowerbound.rdp_refutation_scale(wp)
    payload["verdict"] = verdict
    _emit_json(payload, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpiter",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *, regime: bool = True) -> None:
        p.add_argument("--params", required=True, help="path to a PrivacyParams JSON file")
        if regime:
            p.add_argument("--regime", required=True, choices=accountant.REGIMES)
        p.add_argument("--out", default=None, help="also write the output to this path")

    p = sub.add_parser("compute-epsilon", help="RDP bound for one (regime, alpha)")
    add_common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--delta", type=float, default=None, help="also report the DP point")
    p.set_defaults(func=cmd_compute_epsilon)

    p = sub.add_parser("privacy-curve", help="CSV of epsilon over an iteration grid")
    add_common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--t-grid", required=True, help='comma list or "geom:lo:hi:points"')
    p.set_defaults(func=cmd_privacy_curve)

    p = sub.add_parser("solve-sigma", help="smallest sigma meeting an epsilon budget")
    add_common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True, help="RDP budget")
    p.set_defaults(func=cmd_solve_sigma)

    p = sub.add_parser("run-sgd", help="run the reference optimizer, CSV trajectory out")
    add_common(p, regime=False)
    p.add_argument("--mode", choices=[optimizer.MODE_UNIFORM, optimizer.MODE_CYCLIC],
                   default=optimizer.MODE_UNIFORM)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_run_sgd)

    p = sub.add_parser("audit", help="Monte-Carlo DP refutation of the walk construction")
    add_common(p, regime=False)
    p.add_argument("--replicas", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    except InfeasibleBudgetError as exc:
        sys.stderr.write(f"infeasible budget: {exc}\n")
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"invalid input: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
