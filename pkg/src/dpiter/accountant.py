"""End-user privacy budgets for projected noisy-(S)GD.

Every regime returns the minimum of two bounds: a per-release bound that grows
linearly in the number of iterations T, and a coupled-iterations bound that
stops growing once the runs have had time to traverse the constraint set
("plateau"). The coupled bound splits the per-step noise sigma^2 into
sigma1^2 + sigma2^2 (iteration masking vs. release masking) and optimizes the
split by ternary search with a guarded grid fallback.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import pabi
from .renyi import DEFAULT_QUADRATURE, QuadratureConfig, SgmQuery, sgm_divergence
from .types import (
    FORMULA_CYCLIC,
    FORMULA_FULL_BATCH,
    FORMULA_NOISY_SGD,
    FORMULA_NONUNIFORM,
    FORMULA_STRONGLY_CONVEX,
    InfeasibleBudgetError,
    NumericalError,
    PrivacyParams,
    RenyiCurve,
    RenyiPoint,
)

REGIME_NOISY_SGD = "noisy_sgd"
REGIME_FULL_BATCH = "full_batch"
REGIME_CYCLIC = "cyclic"
REGIME_STRONGLY_CONVEX = "strongly_convex"
REGIME_NONUNIFORM = "nonuniform_stepsize"

REGIMES = (
    REGIME_NOISY_SGD,
    REGIME_FULL_BATCH,
    REGIME_CYCLIC,
    REGIME_STRONGLY_CONVEX,
    REGIME_NONUNIFORM,
)

BRANCH_T_LINEAR = "T-linear"
BRANCH_PLATEAU = "plateau"

_SIGMA1_GRID = np.linspace(0.01, 0.99, 64)
_SIGMA1_TOL = 1e-6


@dataclasses.dataclass(frozen=True)
class AccountRequest:
    params: PrivacyParams
    alpha: float
    regime: str

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if not self.alpha > 1.0:
            raise ValueError("alpha must be > 1")


@dataclasses.dataclass(frozen=True)
class AccountResult:
    epsilon: float
    branch: str
    inner_solution: Mapping[str, Any]
    formula_id: str


def _q_value(
    q: float, sigma_eff: float, alpha: float, cfg: QuadratureConfig, gaussian_q: bool
) -> float:
    """Per-step release divergence Q at effective noise scale sigma_eff.

    gaussian_q replaces the subsampled mixture by a pure unit shift (the
    b >= n/5 fallback); it upper-bounds the true Q and scales exactly as
    sigma_eff^-2, which the scaling tests exploit.
    """
    if sigma_eff <= 0.0:
        return math.inf
    if gaussian_q:
        return alpha / (2.0 * sigma_eff * sigma_eff)
    return sgm_divergence(SgmQuery(q=q, sigma=sigma_eff, alpha=alpha), cfg)


def _search_sigma1(
    objective: Callable[[float], tuple[float, dict[str, Any]]], sigma: float
) -> tuple[float, float, dict[str, Any]]:
    """Minimizes objective(sigma1) over (0, sigma).

    Ternary search assumes unimodality; a 64-point grid is always evaluated
    and, when it disagrees with the ternary result by more than 1e-6 relative,
    a local refinement around the best grid point is added. The reported
    minimum is over every candidate actually evaluated.
    """
    cache: dict[float, tuple[float, dict[str, Any]]] = {}

    def f(x: float) -> float:
        if x not in cache:
            cache[x] = objective(x)
        return cache[x][0]

    def ternary(lo: float, hi: float) -> float:
        while hi - lo > _SIGMA1_TOL * sigma:
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if f(m1) <= f(m2):
                hi = m2
            else:
                lo = m1
        mid = 0.5 * (lo + hi)
        f(mid)
        return mid

    grid = _SIGMA1_GRID * sigma
    for x in grid:
        f(x)
    i = int(np.argmin([f(x) for x in grid]))
    ternary_x = ternary(grid[0], grid[-1])
    if f(grid[i]) < f(ternary_x) * (1.0 - _SIGMA1_TOL):
        # Unimodality failed the ternary search; rescan the basin the grid found.
        ternary(grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)])
    best = min(cache, key=f)
    value, extra = cache[best]
    return float(best), float(value), extra


def _require_constant_stepsize(params: PrivacyParams, regime: str) -> float:
    if not params.has_constant_stepsize:
        raise ValueError(
            f"regime {regime!r} requires a constant stepsize; "
            "use the nonuniform_stepsize regime for schedules"
        )
    return params.stepsize[0]


def _t_linear_result(epsilon: float, formula_id: str, **extra: Any) -> AccountResult:
    return AccountResult(
        epsilon=epsilon,
        branch=BRANCH_T_LINEAR,
        inner_solution=dict(extra),
        formula_id=formula_id,
    )


def _int_candidates(t_cont: float, lo: int, hi: int) -> list[int]:
    """Floor and ceiling of a continuous minimizer, clamped to [lo, hi]."""
    if hi < lo:
        return []
    if not math.isfinite(t_cont):
        return [hi]
    cands = {int(math.floor(t_cont)), int(math.ceil(t_cont))}
    return sorted(min(max(t, lo), hi) for t in cands)


def epsilon_noisy_sgd(
    req: AccountRequest,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    *,
    gaussian_q: bool = False,
) -> AccountResult:
    """RDP bound for uniformly subsampled noisy SGD at constant stepsize.

    Minimum of T * Q_full and, over the noise split and an intermediate
    horizon t in {1..T-1}, t * Q + alpha D^2 / (2 eta^2 sigma1^2 t); the inner
    horizon is the floor/ceiling of the stationary point of that convex
    objective.
    """
    p = req.params
    alpha = req.alpha
    eta = _require_constant_stepsize(p, req.regime)
    delta_g = p.gradient_sensitivity
    q = p.b / p.n
    t_total = p.iterations
    branch1 = t_total * _q_value(q, p.b * p.sigma / delta_g, alpha, cfg, gaussian_q)
    if t_total == 1 or math.isinf(p.diameter):
        return _t_linear_result(branch1, FORMULA_NOISY_SGD)

    d2 = p.diameter * p.diameter

    def objective(sigma1: float) -> tuple[float, dict[str, Any]]:
        sigma2 = math.sqrt(max(p.sigma * p.sigma - sigma1 * sigma1, 0.0))
        q_val = _q_value(q, p.b * sigma2 / delta_g, alpha, cfg, gaussian_q)
        pabi_coeff = alpha * d2 / (2.0 * eta * eta * sigma1 * sigma1)
        with np.errstate(divide="ignore"):
            t_cont = (
                (p.diameter / (eta * sigma1)) * math.sqrt(alpha / (2.0 * q_val))
                if q_val > 0.0
                else math.inf
            )
        best_val = math.inf
        best_t = None
        for t in _int_candidates(t_cont, 1, t_total - 1):
            val = t * q_val + pabi_coeff / t
            if val < best_val:
                best_val, best_t = val, t
        return best_val, {"sigma2": sigma2, "t_tilde": best_t, "Q": q_val}

    sigma1, branch2, extra = _search_sigma1(objective, p.sigma)
    if branch1 <= branch2:
        return _t_linear_result(branch1, FORMULA_NOISY_SGD)
    inner = {"sigma1": sigma1, **extra}
    return AccountResult(branch2, BRANCH_PLATEAU, inner, FORMULA_NOISY_SGD)


def epsilon_full_batch(req: AccountRequest) -> AccountResult:
    """RDP bound for deterministic full-batch noisy GD at constant stepsize."""
    p = req.params
    alpha = req.alpha
    if p.b != p.n:
        raise ValueError("full_batch regime requires b == n")
    eta = _require_constant_stepsize(p, req.regime)
    scale = alpha / (2.0 * eta * eta * p.sigma * p.sigma)
    x = eta * p.gradient_sensitivity / p.n
    branch1 = scale * p.iterations * x * x
    if math.isinf(p.diameter):
        return _t_linear_result(branch1, FORMULA_FULL_BATCH)
    d_eff = p.diameter + x
    best_val = math.inf
    best_t = None
    for t in _int_candidates(d_eff / x, 1, p.iterations):
        val = scale * t * (d_eff / t + x) ** 2
        if val < best_val:
            best_val, best_t = val, t
    if branch1 <= best_val:
        return _t_linear_result(branch1, FORMULA_FULL_BATCH)
    return AccountResult(
        best_val, BRANCH_PLATEAU, {"t_tilde": best_t}, FORMULA_FULL_BATCH
    )


def _contraction_factor(params: PrivacyParams, eta: float) -> float:
    if params.smoothness is None:
        raise ValueError("strongly_convex regime requires a smoothness bound")
    c = max(
        abs(1.0 - eta * params.strong_convexity),
        abs(1.0 - eta * params.smoothness),
    )
    if not (params.strong_convexity > 0.0 and c < 1.0):
        raise ValueError(
            "strongly_convex regime requires m > 0 and eta < 2/M (contraction < 1); "
            "use the noisy_sgd regime otherwise"
        )
    return c


def epsilon_strongly_convex(
    req: AccountRequest,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    *,
    gaussian_q: bool = False,
) -> AccountResult:
    """RDP bound under m-strong convexity, where the budget contracts by
    c = max(|1 - eta m|, |1 - eta M|) < 1 each step.

    The inner horizon minimizes t * Q + K (1 - c^2) / (c^(-2t) - 1) with
    K = alpha D^2 / (2 eta^2 sigma1^2); its stationary point solves
    u^2 - (2 + g) u + 1 = 0 for u = c^(-2t), g = -2 K (1 - c^2) log(c) / Q.
    """
    p = req.params
    alpha = req.alpha
    eta = _require_constant_stepsize(p, req.regime)
    c = _contraction_factor(p, eta)
    delta_g = p.gradient_sensitivity
    q = p.b / p.n
    t_total = p.iterations
    branch1 = t_total * _q_value(q, p.b * p.sigma / delta_g, alpha, cfg, gaussian_q)
    if t_total == 1 or math.isinf(p.diameter):
        return _t_linear_result(branch1, FORMULA_STRONGLY_CONVEX)

    log_c = math.log1p(c - 1.0)
    one_minus_c2 = (1.0 - c) * (1.0 + c)
    d2 = p.diameter * p.diameter

    def pabi_term(t: int, coeff: float) -> float:
        with np.errstate(over="ignore"):
            growth = math.expm1(min(-2.0 * t * log_c, 1e6))
        return coeff * one_minus_c2 / growth

    def objective(sigma1: float) -> tuple[float, dict[str, Any]]:
        sigma2 = math.sqrt(max(p.sigma * p.sigma - sigma1 * sigma1, 0.0))
        q_val = _q_value(q, p.b * sigma2 / delta_g, alpha, cfg, gaussian_q)
        coeff = alpha * d2 / (2.0 * eta * eta * sigma1 * sigma1)
        if q_val > 0.0:
            g = -2.0 * coeff * one_minus_c2 * log_c / q_val
            u_minus_1 = 0.5 * (g + math.sqrt(g * (g + 4.0)))
            t_cont = math.log1p(u_minus_1) / (-2.0 * log_c)
        else:
            t_cont = math.inf
        best_val = math.inf
        best_t = None
        for t in _int_candidates(t_cont, 1, t_total - 1):
            val = t * q_val + pabi_term(t, coeff)
            if val < best_val:
                best_val, best_t = val, t
        return best_val, {"sigma2": sigma2, "t_tilde": best_t, "Q": q_val}

    sigma1, branch2, extra = _search_sigma1(objective, p.sigma)
    if branch1 <= branch2:
        return _t_linear_result(branch1, FORMULA_STRONGLY_CONVEX)
    inner = {"sigma1": sigma1, "contraction": c, **extra}
    return AccountResult(branch2, BRANCH_PLATEAU, inner, FORMULA_STRONGLY_CONVEX)


def cyclic_threshold(params: PrivacyParams) -> float:
    """Burn-in horizon for cyclic batches: ceil(D n / (L eta)) rounded up to a
    whole number of passes."""
    eta = params.stepsize[0]
    if math.isinf(params.diameter):
        return math.inf
    cycle = params.n // params.b
    t_bar = math.ceil(params.diameter * params.n / (params.lipschitz * eta))
    return int(math.ceil(t_bar / cycle) * cycle)


def _cyclic_schedule(
    params: PrivacyParams, batch_index: int, steps: int, initial_shift: float
) -> pabi.PabiSchedule:
    """Three-phase allocation against the cyclic shift pattern of one batch.

    Spends the starting budget uniformly and spreads every shift over the
    steps up to the next occurrence of the same batch (a full pass mid-run,
    the remaining tail for the last occurrence). When the number of steps is
    a whole number of passes this is exactly the uniform / +1-per-pass /
    tail-spread three-phase schedule.
    """
    eta = params.stepsize[0]
    cycle = params.n // params.b
    step_shift = eta * params.gradient_sensitivity / params.b
    allocations = np.full(steps, initial_shift / steps)
    shifts = np.zeros(steps)
    occurrences = list(range(batch_index - 1, steps, cycle))
    shifts[occurrences] = step_shift
    for k, t0 in enumerate(occurrences):
        t1 = occurrences[k + 1] if k + 1 < len(occurrences) else steps
        allocations[t0:t1] += step_shift / (t1 - t0)
    return pabi.PabiSchedule(
        shifts=shifts,
        allocations=allocations,
        noise_sigmas=np.full(steps, eta * params.sigma),
        initial_shift=initial_shift,
        contraction=1.0,
    )


def epsilon_cyclic(req: AccountRequest) -> AccountResult:
    """RDP bound for round-robin (cyclic) batches, worst case over the
    position of the differing example."""
    p = req.params
    alpha = req.alpha
    eta = _require_constant_stepsize(p, req.regime)
    if p.n % p.b != 0:
        raise ValueError(
            "cyclic regime requires b to divide n; pad the dataset to a multiple of b"
        )
    cycle = p.n // p.b
    if p.iterations < cycle:
        raise ValueError("cyclic regime requires at least one full pass (T >= n/b)")
    t_bar = cyclic_threshold(p)
    step_shift = eta * p.gradient_sensitivity / p.b
    if p.iterations > t_bar:
        steps = int(t_bar)
        initial_shift = p.diameter + step_shift
        branch = BRANCH_PLATEAU
    else:
        steps = p.iterations
        initial_shift = step_shift
        branch = BRANCH_T_LINEAR

    worst_val = -math.inf
    worst_batch = None
    for j in range(1, cycle + 1):
        schedule = _cyclic_schedule(p, j, steps, initial_shift)
        result = pabi.evaluate(schedule, alpha)
        if not result.feasible:
            raise NumericalError(f"cyclic allocation infeasible for batch {j}")
        if result.epsilon > worst_val:
            worst_val = result.epsilon
            worst_batch = j
    inner = {
        "t_bar": t_bar if math.isfinite(t_bar) else None,
        "i_star": worst_batch * p.b,
        "initial_shift": initial_shift,
    }
    return AccountResult(worst_val, branch, inner, FORMULA_CYCLIC)


def epsilon_nonuniform(
    req: AccountRequest,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    *,
    gaussian_q: bool = False,
) -> AccountResult:
    """RDP bound for a non-uniform stepsize schedule.

    The coupled bound allocates the diameter proportionally to the stepsizes
    over steps tau+1 .. T-1, giving
    (T - tau) Q + (T - tau - 1) alpha D^2 / (2 sigma1^2 (sum eta_t)^2),
    minimized exactly over tau by a prefix-sum scan.
    """
    p = req.params
    alpha = req.alpha
    if len(p.stepsize) != p.iterations:
        raise ValueError("stepsize schedule length must equal iterations")
    delta_g = p.gradient_sensitivity
    q = p.b / p.n
    t_total = p.iterations
    branch1 = t_total * _q_value(q, p.b * p.sigma / delta_g, alpha, cfg, gaussian_q)
    if t_total == 1 or math.isinf(p.diameter):
        return _t_linear_result(branch1, FORMULA_NONUNIFORM)

    prefix = np.concatenate([[0.0], np.cumsum(p.stepsize)])
    taus = np.arange(0, t_total - 1)
    spans = t_total - taus
    eta_sums = prefix[t_total - 1] - prefix[taus]
    d2 = p.diameter * p.diameter

    def objective(sigma1: float) -> tuple[float, dict[str, Any]]:
        sigma2 = math.sqrt(max(p.sigma * p.sigma - sigma1 * sigma1, 0.0))
        q_val = _q_value(q, p.b * sigma2 / delta_g, alpha, cfg, gaussian_q)
        with np.errstate(over="ignore"):
            vals = spans * q_val + (spans - 1) * alpha * d2 / (
                2.0 * sigma1 * sigma1 * eta_sums * eta_sums
            )
        i = int(np.argmin(vals))
        return float(vals[i]), {"sigma2": sigma2, "tau": int(taus[i]), "Q": q_val}

    sigma1, branch2, extra = _search_sigma1(objective, p.sigma)
    if branch1 <= branch2:
        return _t_linear_result(branch1, FORMULA_NONUNIFORM)
    inner = {"sigma1": sigma1, **extra}
    return AccountResult(branch2, BRANCH_PLATEAU, inner, FORMULA_NONUNIFORM)


_REGIME_FUNCS: dict[str, Callable[..., AccountResult]] = {
    REGIME_NOISY_SGD: epsilon_noisy_sgd,
    REGIME_FULL_BATCH: lambda req, cfg=DEFAULT_QUADRATURE, **kw: epsilon_full_batch(req),
    REGIME_CYCLIC: lambda req, cfg=DEFAULT_QUADRATURE, **kw: epsilon_cyclic(req),
    REGIME_STRONGLY_CONVEX: epsilon_strongly_convex,
    REGIME_NONUNIFORM: epsilon_nonuniform,
}


def account(
    params: PrivacyParams,
    regime: str,
    alpha: float,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    *,
    gaussian_q: bool = False,
) -> AccountResult:
    """Dispatches to the regime-specific epsilon formula."""
    req = AccountRequest(params=params, alpha=alpha, regime=regime)
    return _REGIME_FUNCS[regime](req, cfg, gaussian_q=gaussian_q)


def rdp_to_dp(alpha: float, epsilon_alpha: float, delta: float) -> float:
    """Standard RDP-to-DP conversion: eps_delta = eps_alpha + log(1/delta)/(alpha-1)."""
    if not alpha > 1.0:
        raise ValueError("alpha must be > 1")
    if epsilon_alpha < 0.0:
        raise ValueError("epsilon must be nonnegative")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return epsilon_alpha + math.log(1.0 / delta) / (alpha - 1.0)


def renyi_curve(
    params: PrivacyParams,
    regime: str,
    alphas: Sequence[float],
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> RenyiCurve:
    points = []
    for alpha in sorted(alphas):
        res = account(params, regime, alpha, cfg)
        points.append(RenyiPoint(alpha=alpha, epsilon=res.epsilon, provenance=res.formula_id))
    return RenyiCurve(points=tuple(points))


def best_dp(
    params: PrivacyParams,
    delta: float,
    alpha_grid: Sequence[float],
    regime: str = REGIME_NOISY_SGD,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> tuple[float, float]:
    """Best (epsilon, alpha) DP point over a grid of Renyi orders.

    Ties break toward the smaller alpha.
    """
    if len(alpha_grid) == 0:
        raise ValueError("alpha_grid must be nonempty")
    if any(a <= 1.0 for a in alpha_grid):
        raise ValueError("every alpha in the grid must exceed 1")
    curve = renyi_curve(params, regime, alpha_grid, cfg)
    best = min(curve.to_dp(delta), key=lambda pair: (pair[1], pair[0]))
    return best[1], best[0]


def solve_sigma(
    params: PrivacyParams,
    regime: str,
    alpha: float,
    epsilon_budget: float,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    *,
    relative_tolerance: float = 1e-6,
) -> float:
    """Smallest noise multiplier whose regime bound fits the budget.

    Brackets by doubling from sigma = 1e-3 (halving instead when the start is
    already feasible), asserting along the way that epsilon is nonincreasing
    in sigma, then bisects to the requested relative tolerance. Raises
    InfeasibleBudgetError if even sigma = 1e9 cannot meet the budget.
    """
    if not epsilon_budget > 0.0:
        raise ValueError("epsilon_budget must be positive")

    def eps_at(sigma: float) -> float:
        return account(params.with_sigma(sigma), regime, alpha, cfg).epsilon

    sigma = 1e-3
    value = eps_at(sigma)
    if value <= epsilon_budget:
        hi, hi_val = sigma, value
        while True:
            lo = hi / 2.0
            if lo < 1e-12:
                return hi
            lo_val = eps_at(lo)
            if lo_val < hi_val * (1.0 - 1e-9):
                raise NumericalError(
                    "epsilon is not nonincreasing in sigma "
                    f"({lo_val} at {lo} vs {hi_val} at {hi})"
                )
            if lo_val > epsilon_budget:
                break
            hi, hi_val = lo, lo_val
    else:
        lo, lo_val = sigma, value
        while True:
            hi = lo * 2.0
            if hi > 1e9:
                raise InfeasibleBudgetError(
                    f"budget {epsilon_budget} unreachable within sigma <= 1e9 "
                    f"(epsilon {lo_val} at sigma {lo})"
                )
            hi_val = eps_at(hi)
            if hi_val > lo_val * (1.0 + 1e-9):
                raise NumericalError(
                    "epsilon is not nonincreasing in sigma "
                    f"({hi_val} at {hi} vs {lo_val} at {lo})"
                )
            if hi_val <= epsilon_budget:
                break
            lo, lo_val = hi, hi_val

    while hi - lo > relative_tolerance * hi:
        mid = 0.5 * (lo + hi)
        if eps_at(mid) <= epsilon_budget:
            hi = mid
        else:
            lo = mid
    return hi
