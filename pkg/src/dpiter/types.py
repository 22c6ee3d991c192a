"""Shared domain types, parameter validation, and seeded RNG streams.

Noise convention used throughout: the optimizer injects ``N(0, eta^2 sigma^2 I)``
per step, i.e. ``sigma`` multiplies the stepsize. Other common conventions
(total variance ``eta * sigma'^2`` or ``sigma''^2``) convert by
``sigma = sigma' / sqrt(eta)`` and ``sigma = sigma'' / eta`` respectively.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Any, Mapping, Sequence

import numpy as np

UNBOUNDED = math.inf

ADJACENCY_REPLACE = "replace"
ADJACENCY_REMOVE = "remove"

FORMULA_FULL_BATCH = "B.1"
FORMULA_NOISY_SGD = "B.2"
FORMULA_STRONGLY_CONVEX = "B.3"
FORMULA_CYCLIC = "cyclic"
FORMULA_NONUNIFORM = "nonuniform"


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced a non-finite value."""


class InfeasibleBudgetError(RuntimeError):
    """No noise level within the search range meets the requested budget."""


@dataclasses.dataclass(frozen=True)
class PrivacyParams:
    """Parameters of a projected noisy-(S)GD run, as consumed by the accountant.

    Attributes:
        n: dataset size.
        b: batch size.
        lipschitz: per-example gradient norm bound L (> 0).
        smoothness: gradient Lipschitz bound M (> 0), or None for losses with
            constant gradients.
        strong_convexity: modulus m >= 0; 0 means merely convex.
        diameter: constraint-set diameter D (> 0), or UNBOUNDED.
        stepsize: constant eta or a length-T schedule; stored as a length-T
            tuple either way.
        sigma: per-coordinate noise multiplier (injected noise per step is
            N(0, eta^2 sigma^2 I)).
        iterations: number of steps T >= 1.
        adjacency: "replace" or "remove"; sets the default gradient
            sensitivity (2L or L).
        sensitivity: optional explicit gradient-sensitivity override.
    """

    n: int
    b: int
    lipschitz: float
    smoothness: float | None
    diameter: float
    stepsize: tuple[float, ...]
    sigma: float
    iterations: int
    strong_convexity: float = 0.0
    adjacency: str = ADJACENCY_REPLACE
    sensitivity: float | None = None

    def __post_init__(self) -> None:
        steps = self.stepsize
        if isinstance(steps, (int, float)):
            steps = (float(steps),) * int(self.iterations)
        else:
            steps = tuple(float(s) for s in steps)
        object.__setattr__(self, "stepsize", steps)
        object.__setattr__(self, "diameter", float(self.diameter))

    @property
    def eta(self) -> float:
        """The constant stepsize; raises if the schedule is non-constant."""
        if not self.has_constant_stepsize:
            raise ValueError("stepsize schedule is not constant")
        return self.stepsize[0]

    @property
    def has_constant_stepsize(self) -> bool:
        return len(set(self.stepsize)) <= 1

    @property
    def gradient_sensitivity(self) -> float:
        """Worst-case gradient difference between adjacent datasets.

        Defaults to 2L under replace adjacency and L under remove adjacency.
        """
        if self.sensitivity is not None:
            return self.sensitivity
        if self.adjacency == ADJACENCY_REMOVE:
            return self.lipschitz
        return 2.0 * self.lipschitz

    def with_sigma(self, sigma: float) -> "PrivacyParams":
        return dataclasses.replace(self, sigma=float(sigma))


@dataclasses.dataclass(frozen=True)
class ValidationResult:
    """Outcome of validate(): violated constraints plus per-formula admissibility."""

    violations: tuple[str, ...]
    admissible: Mapping[str, bool]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(params: PrivacyParams) -> ValidationResult:
    """Checks every structural constraint on params. Reports, never raises.

    The admissibility map flags which accounting formulas apply to these
    parameters (e.g. the full-batch formula needs b == n; the strongly convex
    one needs m > 0 and eta < 2/M). Formulas themselves are exposed for all
    sigma > 0 and alpha >= 1.
    """
    v: list[str] = []
    p = params
    if p.n < 1:
        v.append("n >= 1")
    if not 1 <= p.b:
        v.append("b >= 1")
    if p.b > p.n:
        v.append("b <= n")
    if not p.lipschitz > 0:
        v.append("lipschitz > 0")
    if p.smoothness is not None and not p.smoothness > 0:
        v.append("smoothness > 0")
    if p.strong_convexity < 0:
        v.append("strong_convexity >= 0")
    if p.smoothness is not None and p.strong_convexity > p.smoothness:
        v.append("strong_convexity <= smoothness")
    if not p.diameter > 0:
        v.append("diameter > 0")
    if p.iterations < 1:
        v.append("iterations >= 1")
    if len(p.stepsize) != p.iterations:
        v.append("len(stepsize) == iterations")
    if not all(s > 0 for s in p.stepsize):
        v.append("stepsize > 0")
    if p.smoothness is not None and any(s > 2.0 / p.smoothness for s in p.stepsize):
        v.append("stepsize <= 2 / smoothness")
    if not p.sigma > 0:
        v.append("sigma > 0")
    if p.adjacency not in (ADJACENCY_REPLACE, ADJACENCY_REMOVE):
        v.append("adjacency in {replace, remove}")
    if not p.gradient_sensitivity > 0:
        v.append("sensitivity > 0")

    strict_contraction = (
        p.strong_convexity > 0
        and p.smoothness is not None
        and all(s < 2.0 / p.smoothness for s in p.stepsize)
    )
    admissible = {
        FORMULA_FULL_BATCH: p.b == p.n and p.has_constant_stepsize,
        FORMULA_NOISY_SGD: p.has_constant_stepsize,
        FORMULA_STRONGLY_CONVEX: strict_contraction and p.has_constant_stepsize,
        FORMULA_CYCLIC: p.b >= 1 and p.n % max(p.b, 1) == 0 and p.has_constant_stepsize,
        FORMULA_NONUNIFORM: True,
    }
    return ValidationResult(violations=tuple(v), admissible=admissible)


_JSON_FIELDS = (
    "n",
    "b",
    "lipschitz",
    "smoothness",
    "strong_convexity",
    "diameter",
    "stepsize",
    "sigma",
    "iterations",
    "adjacency",
    "sensitivity",
)


def params_from_json(data: Mapping[str, Any], *, default_sigma: float | None = None) -> PrivacyParams:
    """Builds PrivacyParams from a JSON-style mapping (snake_case field names)."""
    unknown = set(data) - set(_JSON_FIELDS) - {"experiment"}
    if unknown:
        raise ValueError(f"unknown parameter fields: {sorted(unknown)}")
    diameter = data["diameter"]
    if isinstance(diameter, str):
        if diameter != "unbounded":
            raise ValueError("diameter must be a number or the string 'unbounded'")
        diameter = UNBOUNDED
    sigma = data.get("sigma", default_sigma)
    if sigma is None:
        raise ValueError("missing field: sigma")
    return PrivacyParams(
        n=int(data["n"]),
        b=int(data["b"]),
        lipschitz=float(data["lipschitz"]),
        smoothness=None if data.get("smoothness") is None else float(data["smoothness"]),
        strong_convexity=float(data.get("strong_convexity", 0.0)),
        diameter=diameter,
        stepsize=data["stepsize"],
        sigma=float(sigma),
        iterations=int(data["iterations"]),
        adjacency=data.get("adjacency", ADJACENCY_REPLACE),
        sensitivity=None if data.get("sensitivity") is None else float(data["sensitivity"]),
    )


def params_to_json(params: PrivacyParams) -> dict[str, Any]:
    d: dict[str, Any] = {
        "n": params.n,
        "b": params.b,
        "lipschitz": params.lipschitz,
        "smoothness": params.smoothness,
        "strong_convexity": params.strong_convexity,
        "diameter": "unbounded" if math.isinf(params.diameter) else params.diameter,
        "stepsize": params.stepsize[0] if params.has_constant_stepsize else list(params.stepsize),
        "sigma": params.sigma,
        "iterations": params.iterations,
        "adjacency": params.adjacency,
        "sensitivity": params.sensitivity,
    }
    return d


def load_params(path: str, *, default_sigma: float | None = None) -> PrivacyParams:
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_json(json.load(fh), default_sigma=default_sigma)


@dataclasses.dataclass(frozen=True)
class RenyiPoint:
    alpha: float
    epsilon: float
    provenance: str = ""


@dataclasses.dataclass(frozen=True)
class RenyiCurve:
    """An RDP curve: (alpha, epsilon) pairs with strictly increasing alphas."""

    points: tuple[RenyiPoint, ...]

    def __post_init__(self) -> None:
        alphas = [p.alpha for p in self.points]
        if any(a2 <= a1 for a1, a2 in zip(alphas, alphas[1:])):
            raise ValueError("alphas must be strictly increasing")
        if any(p.epsilon < 0 for p in self.points):
            raise ValueError("epsilon must be nonnegative")

    def to_dp(self, delta: float) -> list[tuple[float, float]]:
        """Converts every point to an (alpha, epsilon_delta)-DP pair."""
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        return [
            (p.alpha, p.epsilon + math.log(1.0 / delta) / (p.alpha - 1.0))
            for p in self.points
        ]


@dataclasses.dataclass(frozen=True)
class SeededStream:
    """A reproducible, splittable RNG stream.

    Identical (master_seed, stream_index) pairs yield identical sequences;
    distinct stream indexes yield statistically independent streams.
    """

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.stream_index,)
        )
        return np.random.Generator(np.random.PCG64(seq))

    def stream(self, index: int) -> "SeededStream":
        return SeededStream(self.master_seed, index)
