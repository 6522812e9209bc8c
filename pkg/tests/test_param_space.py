"""Parameter vectors, bounds, clamping and Latin hypercube sampling"""

import numpy as np
import pytest

from src.core.exceptions import BoundsError, ConfigError, EmptyRequestError
from src.core.param_space import (ParameterBounds, ParameterVector, clamp, default_configuration,
                                  lhs_sample)


class TestParameterVector:
    def test_rejects_non_finite(self):
        with pytest.raises(ConfigError):
            ParameterVector(float("nan"), 0.01, 0.003)

    def test_mapping_requires_every_name(self):
        with pytest.raises(ConfigError):
            ParameterVector.from_mapping({"drg": 1.0, "cfw": 0.01})
        with pytest.raises(ConfigError):
            ParameterVector.from_mapping({"drg": 1.0, "cfw": 0.01, "stpm": 0.003, "gamma": 3.3})

    def test_replace_keeps_other_fields(self):
        theta = ParameterVector(1.0, 0.015, 0.00302).replace(drg=1.2)
        assert theta == ParameterVector(1.2, 0.015, 0.00302)


class TestBounds:
    def test_default_configuration_strictly_inside(self):
        assert default_configuration(ParameterBounds.default()) == ParameterVector(1.0, 0.015, 0.00302)

    def test_default_on_boundary_rejected(self):
        bounds = ParameterBounds.from_mapping({"drg": [1.0, 2.0]})
        with pytest.raises(BoundsError):
            default_configuration(bounds)

    def test_inverted_interval_rejected(self):
        with pytest.raises(BoundsError):
            ParameterBounds.from_mapping({"cfw": [0.1, 0.01]})

    def test_unknown_name_rejected(self):
        with pytest.raises(BoundsError):
            ParameterBounds.from_mapping({"wind": [0.0, 1.0]})


class TestClamp:
    def test_inside_unchanged(self):
        theta = ParameterVector(1.0, 0.015, 0.00302)
        assert clamp(theta, ParameterBounds.default()) is theta

    def test_low_drg_raised_to_lower_bound(self):
        bounds = ParameterBounds.default()
        theta = clamp(ParameterVector(-3.0, 0.015, 0.00302), bounds)
        assert theta == ParameterVector(bounds.drg[0], 0.015, 0.00302)

    def test_all_above_gives_upper_corner(self):
        bounds = ParameterBounds.default()
        theta = clamp(ParameterVector(9.0, 9.0, 9.0), bounds)
        assert theta == ParameterVector(bounds.drg[1], bounds.cfw[1], bounds.stpm[1])

    def test_idempotent(self):
        bounds = ParameterBounds.default()
        rng = np.random.default_rng(5)
        for _ in range(500):
            theta = ParameterVector.from_array(rng.uniform(-1.0, 3.0, 3) * np.array([1.0, 0.1, 0.01]))
            once = clamp(theta, bounds)
            assert clamp(once, bounds) == once
            assert bounds.contains(once)


class TestLatinHypercube:
    def test_one_sample_per_stratum(self):
        bounds = ParameterBounds.from_mapping({"drg": [0.0, 1.0], "cfw": [0.0, 1.0], "stpm": [0.0, 1.0]})
        for seed in range(5):
            samples = np.array([p.as_array() for p in lhs_sample(4, bounds, seed)])
            for dim in range(3):
                strata = sorted(np.minimum((samples[:, dim] * 4).astype(int), 3))
                assert strata == [0, 1, 2, 3]

    def test_single_sample_inside_bounds(self):
        bounds = ParameterBounds.default()
        samples = lhs_sample(1, bounds, 3)
        assert len(samples) == 1
        assert bounds.contains(samples[0])

    def test_seed_reproducible(self):
        bounds = ParameterBounds.default()
        assert lhs_sample(20, bounds, 42) == lhs_sample(20, bounds, 42)
        assert lhs_sample(20, bounds, 42) != lhs_sample(20, bounds, 43)

    def test_zero_request(self):
        with pytest.raises(EmptyRequestError):
            lhs_sample(0, ParameterBounds.default(), 1)

    def test_log_scaled_stays_in_bounds(self):
        bounds = ParameterBounds.default()
        samples = lhs_sample(50, bounds, 7, log_scaled=True)
        assert all(bounds.contains(p) for p in samples)
        # log strata put half the cfw draws below the geometric midpoint
        cfw = np.array([p.cfw for p in samples])
        assert np.sum(cfw < np.sqrt(bounds.cfw[0] * bounds.cfw[1])) == 25
