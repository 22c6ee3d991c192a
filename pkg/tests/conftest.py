"""Shared parameter factories for the test suite."""

from __future__ import annotations

from dpiter import PrivacyParams


def sgd_params(**overrides) -> PrivacyParams:
    """A valid subsampled-SGD configuration; override fields per test."""
    fields = dict(
        n=1000,
        b=20,
        lipschitz=1.0,
        smoothness=100.0,
        strong_convexity=0.0,
        diameter=1.0,
        stepsize=0.01,
        sigma=6.0,
        iterations=500,
    )
    fields.update(overrides)
    return PrivacyParams(**fields)
