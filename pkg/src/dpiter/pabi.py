"""Shifted-divergence budget engine for contractive noisy iterations.

A schedule describes, step by step, how much two coupled noisy iterations can
drift apart (shifts), how much of the accumulated drift budget is spent
against the injected noise (allocations), and the per-step noise scales.
The engine evaluates the resulting divergence bound

    epsilon = (alpha / 2) * sum_t a_t^2 / sigma_t^2

and checks feasibility of the budget recursion z_t = c * z_{t-1} + s_t - a_t:
z_t must stay nonnegative and return to zero at the final step. The engine
treats schedules purely as data; callers own their construction.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class PabiSchedule:
    """Per-step shifts s_t, allocations a_t, and noise scales sigma_t.

    initial_shift is the drift budget granted at step 0 (the constraint-set
    diameter when coupling two runs from arbitrary points inside it, zero when
    both runs start together). contraction is the per-step factor applied to
    the outstanding budget, 1 for merely convex updates.
    """

    shifts: np.ndarray
    allocations: np.ndarray
    noise_sigmas: np.ndarray
    initial_shift: float = 0.0
    contraction: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "shifts", _readonly(self.shifts))
        object.__setattr__(self, "allocations", _readonly(self.allocations))
        object.__setattr__(self, "noise_sigmas", _readonly(self.noise_sigmas))
        r = len(self.shifts)
        if r < 1:
            raise ValueError("schedule must have at least one step")
        if len(self.allocations) != r or len(self.noise_sigmas) != r:
            raise ValueError("shifts, allocations, noise_sigmas must share length")
        if np.any(self.shifts < 0) or np.any(self.allocations < 0):
            raise ValueError("shifts and allocations must be nonnegative")
        if np.any(self.noise_sigmas <= 0):
            raise ValueError("noise scales must be positive")
        if self.initial_shift < 0:
            raise ValueError("initial_shift must be nonnegative")
        if not 0.0 < self.contraction <= 1.0:
            raise ValueError("contraction must lie in (0, 1]")

    @property
    def steps(self) -> int:
        return len(self.shifts)


@dataclasses.dataclass(frozen=True, eq=False)
class PabiResult:
    epsilon: float
    epsilon_over_alpha: float
    trace: np.ndarray
    feasible: bool


def evaluate(schedule: PabiSchedule, alpha: float) -> PabiResult:
    """Evaluates the divergence bound and the feasibility of a schedule.

    Infeasibility (a budget trace that dips negative or fails to close at
    zero) is reported in the result, never raised.
    """
    if not alpha >= 1.0:
        raise ValueError("alpha must be >= 1")
    s = schedule.shifts
    a = schedule.allocations
    c = schedule.contraction
    r = schedule.steps
    trace = np.empty(r + 1)
    trace[0] = schedule.initial_shift
    if c == 1.0:
        trace[1:] = schedule.initial_shift + np.cumsum(s - a)
    else:
        z = schedule.initial_shift
        d = s - a
        for t in range(r):
            z = c * z + d[t]
            trace[t + 1] = z
    tol = 1e-12 * max(schedule.initial_shift, 1.0)
    feasible = bool(np.all(trace >= -tol) and abs(trace[-1]) <= tol)
    eps_over_alpha = 0.5 * float(np.sum((a / schedule.noise_sigmas) ** 2))
    trace.setflags(write=False)
    return PabiResult(
        epsilon=alpha * eps_over_alpha,
        epsilon_over_alpha=eps_over_alpha,
        trace=trace,
        feasible=feasible,
    )


def optimize_geometric_allocations(
    steps: int, initial_shift: float, contraction: float, sigma: float
) -> PabiSchedule:
    """Minimal-energy allocation sequence for a strictly contracting budget.

    With no per-step shifts, feasibility requires sum_t c^(-t) a_t equal to
    the initial budget; minimizing sum_t a_t^2 under that constraint gives the
    geometric sequence

        a_t = z0 * (1 - c^2) * c^(2R - t) / (1 - c^(2R)),

    whose evaluate() value is (alpha / (2 sigma^2)) * z0^2 (1-c^2)/(c^(-2R)-1).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0.0 < contraction < 1.0:
        raise ValueError(
            "contraction must lie in (0, 1); use a uniform allocation when c = 1"
        )
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    if initial_shift < 0.0:
        raise ValueError("initial_shift must be nonnegative")
    c = contraction
    t = np.arange(1, steps + 1, dtype=float)
    # (1-c)(1+c) and log1p(c-1) keep full precision for c near 1.
    one_minus_c2 = (1.0 - c) * (1.0 + c)
    coeff = initial_shift * one_minus_c2 / -math.expm1(2.0 * steps * math.log1p(c - 1.0))
    allocations = coeff * c ** (2.0 * steps - t)
    return PabiSchedule(
        shifts=np.zeros(steps),
        allocations=allocations,
        noise_sigmas=np.full(steps, float(sigma)),
        initial_shift=float(initial_shift),
        contraction=c,
    )
