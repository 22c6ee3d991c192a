"""Reference projected noisy-(S)GD on convex losses.

Gradients are analytic per loss kind (no autodiff), so the contraction
checkers can be held to tight tolerances. The optimizer injects a single
N(0, eta^2 sigma^2 I) per step; batches are either uniform b-subsets without
replacement or deterministic round-robin blocks.
"""

from __future__ import annotations

import dataclasses
import io
import math
from typing import Sequence, Union

import numpy as np

from .types import NumericalError, PrivacyParams, SeededStream

MODE_UNIFORM = "uniform"
MODE_CYCLIC = "cyclic"


def _vector(x) -> np.ndarray:
    arr = np.atleast_1d(np.array(x, dtype=float))
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class ZeroLoss:
    dimension: int

    def grad(self, w: np.ndarray) -> np.ndarray:
        return np.zeros(self.dimension)


@dataclasses.dataclass(frozen=True, eq=False)
class LinearLoss:
    """f(w) = g . w"""

    gradient: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "gradient", _vector(self.gradient))

    @property
    def dimension(self) -> int:
        return len(self.gradient)

    def grad(self, w: np.ndarray) -> np.ndarray:
        return self.gradient


@dataclasses.dataclass(frozen=True, eq=False)
class QuadraticLoss:
    """f(w) = 0.5 * sum_i k_i (w_i - c_i)^2 with per-coordinate curvatures."""

    center: np.ndarray
    curvatures: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _vector(self.center))
        curv = np.broadcast_to(
            np.atleast_1d(np.array(self.curvatures, dtype=float)), self.center.shape
        ).copy()
        curv.setflags(write=False)
        object.__setattr__(self, "curvatures", curv)
        if np.any(self.curvatures < 0):
            raise ValueError("curvatures must be nonnegative")

    @property
    def dimension(self) -> int:
        return len(self.center)

    @property
    def curvature_range(self) -> tuple[float, float]:
        return float(self.curvatures.min()), float(self.curvatures.max())

    def grad(self, w: np.ndarray) -> np.ndarray:
        return self.curvatures * (w - self.center)


@dataclasses.dataclass(frozen=True, eq=False)
class LogisticLoss:
    """f(w) = log(1 + exp(-y x . w)) for a single example (x, y), y in {-1, +1}."""

    feature: np.ndarray
    label: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature", _vector(self.feature))
        if self.label not in (-1.0, 1.0, -1, 1):
            raise ValueError("label must be +1 or -1")

    @property
    def dimension(self) -> int:
        return len(self.feature)

    def grad(self, w: np.ndarray) -> np.ndarray:
        margin = self.label * float(self.feature @ w)
        # sigmoid(-margin), computed stably on both tails
        if margin >= 0:
            s = math.exp(-margin) / (1.0 + math.exp(-margin))
        else:
            s = 1.0 / (1.0 + math.exp(margin))
        return -self.label * s * self.feature


LossSpec = Union[ZeroLoss, LinearLoss, QuadraticLoss, LogisticLoss]


@dataclasses.dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _vector(self.center))
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def dimension(self) -> int:
        return len(self.center)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def midpoint(self) -> np.ndarray:
        return self.center

    def project(self, x: np.ndarray) -> np.ndarray:
        d = x - self.center
        norm = float(np.linalg.norm(d))
        if norm <= self.radius:
            return np.array(x, dtype=float)
        return self.center + d * (self.radius / norm)


@dataclasses.dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "lower", _vector(self.lower))
        object.__setattr__(self, "upper", _vector(self.upper))
        if len(self.lower) != len(self.upper) or np.any(self.lower > self.upper):
            raise ValueError("box bounds must satisfy lower <= upper elementwise")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


ConstraintSet = Union[Ball, Box]


def project(constraint_set: ConstraintSet, x) -> np.ndarray:
    """Euclidean projection onto the set; identity for interior points."""
    x = np.atleast_1d(np.array(x, dtype=float))
    if len(x) != constraint_set.dimension:
        raise ValueError(
            f"dimension mismatch: point has {len(x)}, set has {constraint_set.dimension}"
        )
    return constraint_set.project(x)


def sample_batch(
    n: int,
    b: int,
    mode: str,
    *,
    rng: np.random.Generator | None = None,
    step: int | None = None,
) -> np.ndarray:
    """Returns the 0-based index set of one batch.

    Uniform mode draws a uniformly random b-subset without replacement (so any
    fixed index is included with probability b/n); cyclic mode returns the
    deterministic round-robin block for the given step.
    """
    if b > n:
        raise ValueError("b must be at most n")
    if mode == MODE_UNIFORM:
        if rng is None:
            raise ValueError("uniform mode needs an rng")
        return np.sort(rng.choice(n, size=b, replace=False))
    if mode == MODE_CYCLIC:
        if step is None:
            raise ValueError("cyclic mode needs a step index")
        start = (step * b) % n
        return (start + np.arange(b)) % n
    raise ValueError(f"unknown batch mode {mode!r}")


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    """All iterates of one run plus the batch log and the stream that drove it."""

    iterates: np.ndarray
    batch_log: np.ndarray
    seed: SeededStream

    def __post_init__(self) -> None:
        self.iterates.setflags(write=False)
        self.batch_log.setflags(write=False)

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    def to_csv(self) -> str:
        """CSV export: step, one column per coordinate, ';'-joined batch indices."""
        d = self.iterates.shape[1]
        buf = io.StringIO()
        buf.write("step," + ",".join(f"x{i}" for i in range(d)) + ",batch\n")
        for t, w in enumerate(self.iterates):
            coords = ",".join(repr(float(v)) for v in w)
            batch = ";".join(str(int(i)) for i in self.batch_log[t - 1]) if t > 0 else ""
            buf.write(f"{t},{coords},{batch}\n")
        return buf.getvalue()


def run_noisy_sgd(
    losses: Sequence[LossSpec],
    constraint_set: ConstraintSet,
    params: PrivacyParams,
    mode: str,
    stream: SeededStream,
    w0: np.ndarray | None = None,
) -> Trajectory:
    """Iterates w <- project(w - eta_t (G_t + Z_t)) for T steps.

    G_t is the batch-average gradient and Z_t ~ N(0, sigma^2 I), so the noise
    injected into the iterate is N(0, eta_t^2 sigma^2 I). Fully deterministic
    given the stream: each step draws the batch first, then the noise.
    """
    if len(losses) != params.n:
        raise ValueError("params.n must equal the number of losses")
    d = losses[0].dimension
    if any(loss.dimension != d for loss in losses):
        raise ValueError("all losses must share one dimension")
    if constraint_set.dimension != d:
        raise ValueError("constraint set dimension must match the losses")
    rng = stream.generator()
    w = project(constraint_set, constraint_set.midpoint if w0 is None else w0)
    t_total = params.iterations
    iterates = np.empty((t_total + 1, d))
    iterates[0] = w
    batch_log = np.empty((t_total, params.b), dtype=np.int64)
    for t in range(t_total):
        batch = sample_batch(params.n, params.b, mode, rng=rng, step=t)
        batch_log[t] = batch
        g = np.zeros(d)
        for i in batch:
            g += losses[int(i)].grad(w)
        g /= params.b
        z = rng.normal(0.0, params.sigma, d)
        w = constraint_set.project(w - params.stepsize[t] * (g + z))
        if not np.all(np.isfinite(w)):
            raise NumericalError(f"non-finite iterate at step {t}")
        iterates[t + 1] = w
    return Trajectory(iterates=iterates, batch_log=batch_log, seed=stream)


def contraction_check(
    loss: LossSpec, eta: float, trials: int, stream: SeededStream
) -> float:
    """Worst observed Lipschitz ratio of the gradient-step map w -> w - eta grad f(w).

    At most 1 for convex smooth losses with eta <= 2/M, and at most
    max(|1 - eta m|, |1 - eta M|) for quadratics with spectrum in [m, M].
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = stream.generator()
    d = loss.dimension
    worst = 0.0
    for _ in range(trials):
        x = rng.normal(size=d)
        y = rng.normal(size=d)
        gap = float(np.linalg.norm(x - y))
        if gap == 0.0:
            continue
        fx = x - eta * loss.grad(x)
        fy = y - eta * loss.grad(y)
        worst = max(worst, float(np.linalg.norm(fx - fy)) / gap)
    return worst
