"""Renyi divergence kernels for the subsampled Gaussian mechanism.

The central quantity is the order-alpha Renyi divergence between a standard
centered Gaussian and the subsampled-shift mixture,

    S_alpha(q, sigma) = D_alpha( N(0, sigma^2) || (1-q) N(0, sigma^2) + q N(1, sigma^2) ),

evaluated by panelised Gauss-Legendre quadrature with all density ratios kept
in log space, cross-validated by an importance-sampling Monte-Carlo oracle.
"""

from __future__ import annotations

import dataclasses
import functools
import math

import numpy as np

from .types import NumericalError, SeededStream

_GL_ORDER = 20
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)
_LOG_GL_WEIGHTS = np.log(_GL_WEIGHTS)
_PANEL_CHUNK = 1 << 15
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclasses.dataclass(frozen=True)
class SgmQuery:
    """A subsampled-Gaussian divergence query at unit shift.

    q = 0 is accepted as the degenerate case where the mixture equals the
    reference (divergence exactly zero).
    """

    q: float
    sigma: float
    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if not self.alpha >= 1.0:
            raise ValueError("alpha must be >= 1")


@dataclasses.dataclass(frozen=True)
class QuadratureConfig:
    relative_tolerance: float = 1e-10
    max_subdivisions: int = 1 << 21
    integration_half_width: float = 40.0

    def __post_init__(self) -> None:
        if not 0.0 < self.relative_tolerance <= 1e-3:
            raise ValueError("relative_tolerance must lie in (0, 1e-3]")
        if self.integration_half_width < 10.0:
            raise ValueError("integration_half_width must be >= 10")
        if self.max_subdivisions < 256:
            raise ValueError("max_subdivisions must be >= 256")


DEFAULT_QUADRATURE = QuadratureConfig()


def gaussian_renyi(mean_shift: float, sigma: float, alpha: float) -> float:
    """Order-alpha Renyi divergence between N(0, sigma^2) and N(mu, sigma^2)."""
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    if not alpha >= 1.0:
        raise ValueError("alpha must be >= 1")
    return alpha * mean_shift * mean_shift / (2.0 * sigma * sigma)


def _log_mixture_gap(x: np.ndarray, q: float, sigma: float) -> np.ndarray:
    """log(p_mix(x) / p_0(x)) for the unit-shift mixture, stable for q in [0, 1]."""
    with np.errstate(divide="ignore"):
        log_q = np.log(q) if q > 0.0 else -np.inf
        log_1mq = np.log1p(-q) if q < 1.0 else -np.inf
    shifted = log_q + (2.0 * x - 1.0) / (2.0 * sigma * sigma)
    return np.logaddexp(log_1mq, shifted)


def _integration_segments(
    q: float, sigma: float, alpha: float, half_width: float
) -> list[tuple[float, float]]:
    """Sub-intervals of [-W sigma, 1 + W sigma] carrying representable mass.

    For x > 1/2 the mixture dominates the reference, so the integrand of the
    difference integral is bounded by the reference density: the right edge
    never needs to extend past 1 + W*sigma. On the left the likelihood ratio
    is bounded by (1-q)^(1-alpha) (a pure left-shifted Gaussian for q = 1),
    which moves the relevant mass left of -W*sigma once alpha is large; the
    left window widens accordingly. Outside +-sigma*sqrt(W^2 + 2 log-boost)
    of either component mean the integrand is below exp(-W^2/2) relative, so
    for small sigma the dead gap between the means is skipped.
    """
    w2 = half_width * half_width
    hi = 1.0 + half_width * sigma
    if q >= 1.0:
        lo = -(alpha - 1.0) - half_width * sigma
        return [(lo, hi)]
    boost = 2.0 * (alpha - 1.0) * (-math.log1p(-q))
    reach = sigma * math.sqrt(w2 + boost)
    lo = -reach
    if reach >= 1.0 - half_width * sigma:
        return [(lo, hi)]
    return [(lo, reach), (1.0 - half_width * sigma, hi)]


def _panel_nodes(segments, sigma: float, level: int):
    """Panelised Gauss-Legendre nodes and log-weights at width sigma/2^(level+1).

    Yields (x, log_w) chunks so arbitrarily fine refinements stay within a
    bounded memory footprint.
    """
    width = sigma / float(1 << (level + 1))
    for lo, hi in segments:
        n = max(int(math.ceil((hi - lo) / width)), 2)
        edges = np.linspace(lo, hi, n + 1)
        for start in range(0, n, _PANEL_CHUNK):
            e = edges[start : min(start + _PANEL_CHUNK, n) + 1]
            mid = 0.5 * (e[:-1] + e[1:])
            half = 0.5 * (e[1:] - e[:-1])
            x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
            log_w = (np.log(half)[:, None] + _LOG_GL_WEIGHTS[None, :]).ravel()
            yield x, log_w


def _panel_count(segments, sigma: float, level: int) -> int:
    width = sigma / float(1 << (level + 1))
    return sum(max(int(math.ceil((hi - lo) / width)), 2) for lo, hi in segments)


def _signed_log_integral(
    q: float, sigma: float, alpha: float, segments, level: int
) -> float:
    """log of integral( p0(x)^alpha * p_mix(x)^(1-alpha) dx ) over the panels.

    Integrates the difference against p0 (whose window mass is 1 to machine
    precision), accumulating positive and negative parts as running
    log-sum-exp totals so arbitrarily large divergences stay representable.
    """
    max_pos = max_neg = -np.inf
    acc_pos = acc_neg = 0.0
    for x, log_w in _panel_nodes(segments, sigma, level):
        log_p0 = -0.5 * (x / sigma) ** 2 - math.log(sigma) - _LOG_SQRT_2PI
        a = -(alpha - 1.0) * _log_mixture_gap(x, q, sigma)
        pos = a > 0.0
        log_abs = np.empty_like(a)
        with np.errstate(divide="ignore"):
            ap = a[pos]
            log_abs[pos] = ap + np.log1p(-np.exp(-ap))
            log_abs[~pos] = np.log(-np.expm1(a[~pos]))
        terms = log_p0 + log_abs + log_w
        for is_pos in (True, False):
            v = terms[pos] if is_pos else terms[~pos]
            v = v[v > -np.inf]
            if v.size == 0:
                continue
            m = float(v.max())
            s = float(np.exp(v - m).sum())
            if is_pos:
                if m > max_pos:
                    acc_pos = acc_pos * math.exp(max_pos - m) + s
                    max_pos = m
                else:
                    acc_pos += s * math.exp(m - max_pos)
            else:
                if m > max_neg:
                    acc_neg = acc_neg * math.exp(max_neg - m) + s
                    max_neg = m
                else:
                    acc_neg += s * math.exp(m - max_neg)
    log_pos = max_pos + math.log(acc_pos) if acc_pos > 0.0 else -np.inf
    log_neg = max_neg + math.log(acc_neg) if acc_neg > 0.0 else -np.inf
    # log(1 + P - N) with P = e^log_pos, N = e^log_neg; the total is >= 1.
    m = max(0.0, log_pos, log_neg)
    if m == 0.0:
        return math.log1p(math.exp(log_pos) - math.exp(log_neg))
    total = math.exp(-m) + math.exp(log_pos - m) - math.exp(log_neg - m)
    if total <= 0.0:
        return -np.inf
    return m + math.log(total)


def _kl_integral(q: float, sigma: float, segments, level: int) -> float:
    """integral( p0(x) * log(p0(x)/p_mix(x)) dx ) (the alpha = 1 limit)."""
    total = 0.0
    for x, log_w in _panel_nodes(segments, sigma, level):
        log_p0 = -0.5 * (x / sigma) ** 2 - math.log(sigma) - _LOG_SQRT_2PI
        m = _log_mixture_gap(x, q, sigma)
        total += float(np.sum(np.exp(log_w + log_p0) * (-m)))
    return total


@functools.lru_cache(maxsize=1 << 16)
def _sgm_divergence_cached(
    q: float,
    sigma: float,
    alpha: float,
    rel_tol: float,
    max_subdivisions: int,
    half_width: float,
) -> float:
    if q == 0.0:
        return 0.0
    segments = _integration_segments(q, sigma, alpha, half_width)

    def value(level: int) -> float:
        if alpha == 1.0:
            return _kl_integral(q, sigma, segments, level)
        return _signed_log_integral(q, sigma, alpha, segments, level) / (alpha - 1.0)

    level = 0
    history: list[float] = []
    while True:
        if _panel_count(segments, sigma, level) > max_subdivisions:
            raise NumericalError(
                "quadrature did not converge within "
                f"{max_subdivisions} subdivisions; last refinements: {history!r}"
            )
        cur = value(level)
        if not math.isfinite(cur):
            raise NumericalError(f"quadrature produced non-finite value {cur!r}")
        history = (history + [cur])[-2:]
        # The 1e-15 term absorbs the cancellation floor of the difference
        # integral; divergences that small are zero for accounting purposes.
        if len(history) == 2 and abs(history[1] - history[0]) <= rel_tol * abs(cur) + 1e-15:
            return max(cur, 0.0)
        level += 1


def sgm_divergence(query: SgmQuery, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """S_alpha(q, sigma) by adaptive panel-doubling Gauss-Legendre quadrature.

    Successive refinements must agree to cfg.relative_tolerance; failure to
    converge within cfg.max_subdivisions raises NumericalError carrying the
    last two refinement values.
    """
    return _sgm_divergence_cached(
        float(query.q),
        float(query.sigma),
        float(query.alpha),
        cfg.relative_tolerance,
        cfg.max_subdivisions,
        cfg.integration_half_width,
    )


def sgm_divergence_mc(
    query: SgmQuery, samples: int, stream: SeededStream
) -> tuple[float, float]:
    """Monte-Carlo estimate of S_alpha(q, sigma) with a delta-method std error.

    Draws X ~ N(0, sigma^2) and averages the likelihood ratio
    (p0/p_mix)^(alpha-1) through a running log-mean-exp, so the estimate is
    stable even when individual ratios overflow a double.

    Returns:
        (estimate, std_error).
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    q, sigma, alpha = query.q, query.sigma, query.alpha
    if q == 0.0:
        return 0.0, 0.0
    rng = stream.generator()
    batch = 1 << 20

    if alpha == 1.0:
        total = 0.0
        total_sq = 0.0
        done = 0
        while done < samples:
            k = min(batch, samples - done)
            x = rng.normal(0.0, sigma, k)
            vals = -_log_mixture_gap(x, q, sigma)
            total += float(vals.sum())
            total_sq += float((vals * vals).sum())
            done += k
        mean = total / samples
        var = max(total_sq / samples - mean * mean, 0.0)
        return mean, math.sqrt(var / samples)

    max1 = max2 = -np.inf
    acc1 = acc2 = 0.0
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        x = rng.normal(0.0, sigma, k)
        a = -(alpha - 1.0) * _log_mixture_gap(x, q, sigma)
        for scale, is_first in ((1.0, True), (2.0, False)):
            v = scale * a
            m = float(v.max())
            s = float(np.exp(v - m).sum())
            if is_first:
                if m > max1:
                    acc1 = acc1 * math.exp(max1 - m) + s
                    max1 = m
                else:
                    acc1 += s * math.exp(m - max1)
            else:
                if m > max2:
                    acc2 = acc2 * math.exp(max2 - m) + s
                    max2 = m
                else:
                    acc2 += s * math.exp(m - max2)
        done += k
    log_mean = max1 + math.log(acc1) - math.log(samples)
    log_mean_sq = max2 + math.log(acc2) - math.log(samples)
    if not (math.isfinite(log_mean) and math.isfinite(log_mean_sq)):
        raise NumericalError("Monte-Carlo accumulator overflowed")
    estimate = log_mean / (alpha - 1.0)
    rel_var = math.expm1(max(log_mean_sq - 2.0 * log_mean, 0.0))
    std_error = math.sqrt(rel_var / samples) / (alpha - 1.0)
    return estimate, std_error


def _alpha_star_feasible(alpha: float, q: float, sigma: float) -> bool:
    s2 = sigma * sigma
    m = math.log1p(1.0 / (q * (alpha - 1.0)))
    if alpha > m * s2 / 2.0 - math.log(s2):
        return False
    num = m * m * s2 / 2.0 - math.log(5.0 * s2)
    den = m + math.log(q * alpha) + 1.0 / (2.0 * s2)
    if den == 0.0:
        return False
    return alpha <= num / den


def alpha_star(q: float, sigma: float) -> float:
    """Largest Renyi order for which the sharp small-q divergence bound applies.

    Returns the supremum (to 1e-6) of alpha > 1 satisfying both admissibility
    inequalities, located by doubling then bisection; returns 1.0 when no
    alpha > 1 qualifies.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    lo = 1.0 + 1e-6
    cap = 1e8
    if not _alpha_star_feasible(lo, q, sigma):
        return 1.0
    hi = lo
    while True:
        nxt = min(hi * 2.0, cap)
        if not _alpha_star_feasible(nxt, q, sigma):
            lo, hi = hi, nxt
            break
        hi = nxt
        if hi >= cap:
            return cap
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if _alpha_star_feasible(mid, q, sigma):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
