"""Correlated forcing noise, ensembles and calm-period suppression"""

import numpy as np
import pytest

from conftest import constant_wind, make_times, storm_wind
from src.core.exceptions import ConfigError, EmptyRequestError, ShapeError
from src.core.forcing_noise import (ForcingEnsemble, NoiseFieldGenerator, NoiseSourceSet, WindField,
                                    absolute_sigma, aggregate_noise, ensemble_rms_perturbation,
                                    generate_ensemble, lag1_autocorrelation, pearson, scatter_sources,
                                    source_noise, suppress_calm)


def point_wind(u_series, v_series) -> WindField:
    u = np.asarray(u_series, dtype=float).reshape(-1, 1, 1)
    v = np.asarray(v_series, dtype=float).reshape(-1, 1, 1)
    return WindField(make_times(u.shape[0]), u, v)


class TestWindField:
    def test_single_step_rejected(self):
        with pytest.raises(ShapeError):
            WindField(make_times(1), np.zeros((1, 2, 2)), np.zeros((1, 2, 2)))

    def test_component_shapes_must_match(self):
        with pytest.raises(ShapeError):
            WindField(make_times(3), np.zeros((3, 2, 2)), np.zeros((3, 2, 3)))

    def test_times_strictly_increasing(self):
        times = make_times(3)[::-1]
        with pytest.raises(ShapeError):
            WindField(times, np.zeros((3, 2, 2)), np.zeros((3, 2, 2)))


class TestCorrelation:
    def test_zero_variance_is_zero(self):
        assert pearson([3.0, 3.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_linear_pair(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0)

    def test_lag1_of_constant_field(self):
        assert lag1_autocorrelation(constant_wind(7.0), "u") == 0.0


class TestScatterSources:
    def test_one_source_per_quadrant(self):
        sources = scatter_sources(20, 20, 10, seed=4)
        assert len(sources) == 4
        quadrants = {(ix // 10, iy // 10) for ix, iy in sources.locations}
        assert quadrants == {(0, 0), (1, 0), (0, 1), (1, 1)}

    def test_spacing_beyond_grid(self):
        sources = scatter_sources(5, 5, 10, seed=4)
        assert len(sources) == 1
        ix, iy = sources.locations[0]
        assert 0 <= ix < 5 and 0 <= iy < 5

    def test_seed_reproducible(self):
        assert scatter_sources(30, 30, 10, 8) == scatter_sources(30, 30, 10, 8)

    def test_source_outside_grid_rejected(self):
        with pytest.raises(ShapeError):
            NoiseSourceSet(((7, 0),)).validate(5, 5)


class TestSourceNoise:
    def test_zero_sigma(self):
        wind = point_wind([1, 2, 3], [2, 4, 6])
        rng = np.random.default_rng(0)
        for t in (1, 2):
            assert source_noise((0, 0), t, 0.0, wind, rng) == (0.0, 0.0)

    def test_perfectly_correlated_components(self):
        wind = point_wind([1, 2, 3], [2, 4, 6])
        fu, fv = source_noise((0, 0), 1, 0.25, wind, np.random.default_rng(5))
        replay = np.random.default_rng(5)
        expected_u = replay.normal(0.0, 0.25 * 2.0) * 1.0 * lag1_autocorrelation(wind, "u")
        expected_v = replay.normal(0.0, 0.25 * 4.0) * 1.0 * lag1_autocorrelation(wind, "v")
        assert fu == pytest.approx(expected_u)
        assert fv == pytest.approx(expected_v)

    def test_constant_in_time_field_is_silent(self):
        wind = constant_wind(12.0)
        assert source_noise((2, 1), 3, 0.25, wind, np.random.default_rng(1)) == (0.0, 0.0)

    def test_step_zero_rejected(self):
        with pytest.raises(ConfigError):
            source_noise((0, 0), 0, 0.25, point_wind([1, 2, 3], [2, 4, 6]), np.random.default_rng(1))


class TestAggregateNoise:
    def test_source_at_the_point(self):
        wind = storm_wind()
        sources = NoiseSourceSet(((2, 3),))
        assert aggregate_noise((2, 3), 5, sources, wind, [0.7]) == pytest.approx(0.7)

    def test_opposite_sources_cancel(self):
        series = np.array([1.0, 3.0, 2.0, 5.0])
        u = np.stack([series, series], axis=1).reshape(4, 1, 2)
        wind = WindField(make_times(4), u, u.copy())
        sources = NoiseSourceSet(((0, 0), (1, 0)))
        assert aggregate_noise((0, 0), 2, sources, wind, [0.4, -0.4]) == pytest.approx(0.0)

    def test_two_point_hand_computation(self):
        u = np.array([[[1.0, 2.0]], [[2.0, 1.0]], [[4.0, 5.0]]])
        wind = WindField(make_times(3), u, np.ones_like(u))
        sources = NoiseSourceSet(((0, 0), (1, 0)))
        f_star = [0.3, -0.2]
        corr = np.corrcoef(u[:, 0, 0], u[:, 0, 1])[0, 1]
        assert aggregate_noise((0, 0), 1, sources, wind, f_star) == pytest.approx(0.3 - 0.2 * corr)
        assert aggregate_noise((1, 0), 1, sources, wind, f_star) == pytest.approx(0.3 * corr - 0.2)

    def test_anticorrelated_source_flips_sign(self):
        series = np.array([1.0, 3.0, 2.0, 5.0, 4.0])
        u = np.stack([series, 7.0 - 2.0 * series], axis=1).reshape(5, 1, 2)
        wind = WindField(make_times(5), u, np.ones_like(u))
        sources = NoiseSourceSet(((1, 0),))
        assert aggregate_noise((0, 0), 2, sources, wind, [0.6]) == pytest.approx(-0.6)

    def test_noise_count_must_match_sources(self):
        with pytest.raises(ShapeError):
            aggregate_noise((0, 0), 1, NoiseSourceSet(((0, 0),)), storm_wind(), [0.1, 0.2])


class TestNoiseFieldGenerator:
    def test_matches_per_point_formulas(self):
        wind = storm_wind()
        sources = scatter_sources(wind.nx, wind.ny, 3, seed=2)
        generator = NoiseFieldGenerator(wind, sources, 0.25, seed=9)
        noise_u, noise_v = generator.member_noise(3)

        draws = np.random.default_rng([9, 3]).standard_normal((wind.nt - 1, 2, len(sources)))
        for c, (name, field) in enumerate((("u", noise_u), ("v", noise_v))):
            lag = lag1_autocorrelation(wind, name)
            scale = absolute_sigma(0.25, wind, name)
            for t in (1, 17, wind.nt - 1):
                per_source = [draws[t - 1, c, j] * scale * lag
                              * pearson(wind.series(ix, iy, "u"), wind.series(ix, iy, "v"))
                              for j, (ix, iy) in enumerate(sources.locations)]
                for ix, iy in ((0, 0), (4, 1), (5, 5)):
                    expected = aggregate_noise((ix, iy), t, sources, wind, per_source, component=name)
                    assert field[t, iy, ix] == pytest.approx(expected, abs=1e-10)

    def test_first_step_is_noise_free(self):
        wind = storm_wind()
        generator = NoiseFieldGenerator(wind, scatter_sources(wind.nx, wind.ny, 3, 1), 0.25, seed=1)
        noise_u, noise_v = generator.member_noise(0)
        assert np.all(noise_u[0] == 0.0) and np.all(noise_v[0] == 0.0)
        assert np.any(noise_u[1:] != 0.0)


class TestGenerateEnsemble:
    def test_zero_sigma_is_identity(self):
        wind = storm_wind()
        ensemble = generate_ensemble(wind, 4, 0.0, spacing=3, seed=3)
        assert len(ensemble) == 4
        for member in ensemble.members:
            np.testing.assert_array_equal(member.u, wind.u)
            np.testing.assert_array_equal(member.v, wind.v)
        assert ensemble_rms_perturbation(ensemble) == 0.0

    def test_seed_reproducible(self):
        wind = storm_wind()
        a = generate_ensemble(wind, 10, 0.25, spacing=3, seed=21)
        b = generate_ensemble(wind, 10, 0.25, spacing=3, seed=21, workers=4)
        for ma, mb in zip(a.members, b.members):
            np.testing.assert_array_equal(ma.u, mb.u)
            np.testing.assert_array_equal(ma.v, mb.v)

    def test_members_differ(self):
        ensemble = generate_ensemble(storm_wind(), 3, 0.25, spacing=3, seed=21)
        assert not np.array_equal(ensemble.members[0].u, ensemble.members[1].u)

    def test_perturbation_is_zero_mean(self):
        wind = storm_wind()
        ensemble = generate_ensemble(wind, 60, 0.25, spacing=3, seed=13)
        per_member = np.array([np.mean(m.u - wind.u) for m in ensemble.members])
        standard_error = per_member.std(ddof=1) / np.sqrt(per_member.size)
        assert abs(per_member.mean()) <= 3 * standard_error

    def test_rms_grows_with_sigma(self):
        wind = storm_wind()
        high = ensemble_rms_perturbation(generate_ensemble(wind, 10, 0.25, spacing=3, seed=7))
        low = ensemble_rms_perturbation(generate_ensemble(wind, 10, 0.10, spacing=3, seed=7))
        assert high > low > 0.0
        assert high / low == pytest.approx(2.5)

    def test_constant_field_is_not_perturbed(self):
        wind = constant_wind(10.0)
        ensemble = generate_ensemble(wind, 3, 0.25, spacing=2, seed=1)
        for member in ensemble.members:
            np.testing.assert_array_equal(member.u, wind.u)

    def test_empty_request(self):
        with pytest.raises(EmptyRequestError):
            generate_ensemble(storm_wind(), 0, 0.25)

    def test_identical_copies(self):
        wind = storm_wind()
        ensemble = ForcingEnsemble.identical(wind, 5)
        assert len(ensemble) == 5 and all(m is wind for m in ensemble.members)


class TestSuppressCalm:
    def test_above_threshold_unchanged(self):
        base = np.array([1.0, 2.0, 3.0])
        member = np.array([5.0, 0.1, 9.0])
        np.testing.assert_array_equal(suppress_calm(member, base, 0.5, 0.1), member)

    def test_zero_base_forces_zero(self):
        out = suppress_calm(np.array([0.3, 0.8, 0.0]), np.zeros(3), 0.5, 0.0)
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_only_calm_step_clamped(self):
        base = np.array([1.0, 0.2, 1.0])
        member = np.array([1.5, 0.4, 1.5])
        out = suppress_calm(member, base, 0.5, 0.1)
        np.testing.assert_allclose(out, [1.5, 0.22, 1.5])

    def test_member_below_cap_untouched(self):
        out = suppress_calm(np.array([0.1]), np.array([0.2]), 0.5, 0.1)
        np.testing.assert_array_equal(out, [0.1])

    def test_station_series(self, wind15):
        from src.core.wave_model import StationSeries
        base = StationSeries("A", wind15.times, np.full(wind15.nt, 0.2))
        member = StationSeries("A", wind15.times, np.full(wind15.nt, 0.5))
        out = suppress_calm(member, base, 0.5, 0.1)
        assert out.station_id == "A"
        np.testing.assert_allclose(out.hs, 0.22)

    def test_signed_values_compared_by_magnitude(self):
        out = suppress_calm(np.array([-8.0, -8.0, -8.0]), np.array([-10.0, -10.0, -10.0]), 0.5, 0.1)
        np.testing.assert_array_equal(out, [-8.0, -8.0, -8.0])
        out = suppress_calm(np.array([-0.4, 0.4]), np.array([-0.2, 0.2]), 0.5, 0.1)
        np.testing.assert_allclose(out, [-0.22, 0.22])

    def test_wind_field_clamped_by_speed(self):
        base_u = np.full((3, 2, 2), 0.3)
        base_u[1] = 6.0
        base = WindField(make_times(3), base_u, np.full((3, 2, 2), 0.4))      # calm speed 0.5
        member = WindField(make_times(3), np.full((3, 2, 2), 3.0), np.full((3, 2, 2), 4.0))    # speed 5
        out = suppress_calm(member, base, 1.0, 0.1)
        assert isinstance(out, WindField)
        speed = np.hypot(out.u, out.v)
        np.testing.assert_allclose(speed[0], 0.55)
        np.testing.assert_allclose(speed[2], 0.55)
        np.testing.assert_array_equal(out.u[1], member.u[1])
        # direction preserved
        np.testing.assert_allclose(out.v / out.u, member.v / member.u)

    def test_wind_field_never_exceeds_cap_on_calm_cells(self):
        rng = np.random.default_rng(3)
        base = WindField(make_times(6), rng.normal(0, 2, (6, 4, 4)), rng.normal(0, 2, (6, 4, 4)))
        member = WindField(base.times, base.u + rng.normal(0, 3, base.shape), base.v + rng.normal(0, 3, base.shape))
        out = suppress_calm(member, base, 2.0, 0.1)
        base_speed = np.hypot(base.u, base.v)
        calm = base_speed < 2.0
        assert np.all(np.hypot(out.u, out.v)[calm] <= base_speed[calm] * 1.1 + 1e-12)
        np.testing.assert_array_equal(out.u[~calm], member.u[~calm])
        np.testing.assert_array_equal(out.v[~calm], member.v[~calm])

    def test_component_pair(self):
        u, v = suppress_calm((np.array([3.0, 3.0]), np.array([4.0, 4.0])),
                             (np.array([0.0, 6.0]), np.array([0.2, 8.0])), 1.0, 0.5)
        np.testing.assert_allclose(np.hypot(u, v), [0.3, 5.0])

    def test_wind_field_against_array_rejected(self):
        wind = WindField(make_times(2), np.ones((2, 1, 1)), np.ones((2, 1, 1)))
        with pytest.raises(ShapeError):
            suppress_calm(wind, np.ones((2, 1, 1)))
