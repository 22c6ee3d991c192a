import math

import numpy as np
import pytest

from conftest import sgd_params
from dpiter import (
    PrivacyParams,
    RenyiCurve,
    RenyiPoint,
    SeededStream,
    params_from_json,
    params_to_json,
    validate,
)


class TestValidate:
    def test_oversized_batch_reported(self):
        result = validate(sgd_params(n=10, b=20))
        assert "b <= n" in result.violations
        assert not result.ok

    def test_stepsize_contraction_precondition(self):
        result = validate(sgd_params(stepsize=3.0, smoothness=1.0))
        assert "stepsize <= 2 / smoothness" in result.violations

    def test_well_formed_params_pass(self):
        result = validate(sgd_params())
        assert result.ok
        assert result.violations == ()

    def test_pure_and_idempotent(self):
        p = sgd_params(n=5, b=9, sigma=-1.0)
        assert validate(p) == validate(p)

    def test_admissibility_flags(self):
        result = validate(sgd_params(n=100, b=100))
        assert result.admissible["B.1"]
        assert result.admissible["B.2"]
        assert not result.admissible["B.3"]
        sc = validate(sgd_params(strong_convexity=1.0))
        assert sc.admissible["B.3"]
        ragged = validate(sgd_params(n=100, b=30))
        assert not ragged.admissible["cyclic"]


class TestPrivacyParams:
    def test_constant_stepsize_stored_as_schedule(self):
        p = sgd_params(stepsize=0.05, iterations=4)
        assert p.stepsize == (0.05, 0.05, 0.05, 0.05)
        assert p.has_constant_stepsize
        assert p.eta == 0.05

    def test_nonconstant_schedule(self):
        p = sgd_params(stepsize=[0.1, 0.05, 0.025], iterations=3)
        assert not p.has_constant_stepsize
        with pytest.raises(ValueError):
            _ = p.eta

    def test_default_sensitivity_by_adjacency(self):
        assert sgd_params(lipschitz=1.5).gradient_sensitivity == 3.0
        assert sgd_params(lipschitz=1.5, adjacency="remove").gradient_sensitivity == 1.5
        assert sgd_params(lipschitz=1.5, sensitivity=0.4).gradient_sensitivity == 0.4

    def test_json_round_trip(self):
        p = sgd_params(stepsize=[0.1, 0.05], iterations=2, smoothness=None,
                       sensitivity=0.7, adjacency="remove")
        assert params_from_json(params_to_json(p)) == p

    def test_unbounded_diameter_marker(self):
        p = params_from_json({**params_to_json(sgd_params()), "diameter": "unbounded"})
        assert math.isinf(p.diameter)
        assert params_to_json(p)["diameter"] == "unbounded"

    def test_unknown_fields_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            params_from_json({**params_to_json(sgd_params()), "extra": 1})

    def test_missing_sigma_needs_default(self):
        blob = params_to_json(sgd_params())
        del blob["sigma"]
        with pytest.raises(ValueError, match="sigma"):
            params_from_json(blob)
        assert params_from_json(blob, default_sigma=2.5).sigma == 2.5


class TestRenyiCurve:
    def test_rejects_unsorted_alphas(self):
        with pytest.raises(ValueError, match="increasing"):
            RenyiCurve(points=(RenyiPoint(4.0, 0.1), RenyiPoint(2.0, 0.2)))

    def test_rejects_negative_epsilon(self):
        with pytest.raises(ValueError, match="nonnegative"):
            RenyiCurve(points=(RenyiPoint(2.0, -0.1),))

    def test_dp_conversion(self):
        curve = RenyiCurve(points=(RenyiPoint(2.0, 0.5), RenyiPoint(11.0, 1.0)))
        got = curve.to_dp(math.exp(-10.0))
        assert got[0] == (2.0, 10.5)
        assert got[1] == (11.0, 2.0)


class TestSeededStream:
    def test_same_stream_same_sequence(self):
        a = SeededStream(123, 4).generator().normal(size=8)
        b = SeededStream(123, 4).generator().normal(size=8)
        assert np.array_equal(a, b)

    def test_distinct_indexes_distinct_sequences(self):
        a = SeededStream(123, 4).generator().normal(size=8)
        b = SeededStream(123, 5).generator().normal(size=8)
        assert not np.array_equal(a, b)

    def test_stream_helper(self):
        assert SeededStream(7).stream(3) == SeededStream(7, 3)
