"""Surrogate wave model and the external process adapter"""

import shlex
import sys

import numpy as np
import pytest

from conftest import DEFAULT_THETA, ROOT, constant_wind, storm_wind
from src.core.exceptions import (ConfigError, ExternalModelError, InputFormatError, ModelTimeoutError,
                                 ShapeError)
from src.core.forcing_noise import WindField
from src.core.param_space import ParameterBounds, lhs_sample
from src.core.wave_model import (BathymetryGrid, ExternalProcessModel, Station, StationSet,
                                 SurrogateWaveModel, external_evaluate, surrogate_evaluate)
from src.utils.formats import write_station_csv

STUB = ROOT / "scripts" / "echo_model_stub.py"


def stub_command(*extra: str) -> str:
    parts = [shlex.quote(sys.executable), shlex.quote(str(STUB)),
             "--wind {wind_path} --out {out_path} --drg {drg}"]
    return " ".join(parts + list(extra))


class TestSurrogate:
    def test_constant_wind_reference_value(self, wind15, flat_bathy, three_stations):
        series = surrogate_evaluate(DEFAULT_THETA, wind15, flat_bathy, three_stations)
        assert [s.station_id for s in series] == ["A", "B", "C"]
        for s in series:
            np.testing.assert_allclose(s.hs, 4.67417, atol=1e-5)
            np.testing.assert_array_equal(s.times, wind15.times)

    def test_zero_wind_gives_zero_waves(self, flat_bathy, three_stations):
        theta = DEFAULT_THETA.replace(drg=2.0, stpm=0.01)
        series = surrogate_evaluate(theta, constant_wind(0.0), flat_bathy, three_stations)
        assert all(np.all(s.hs == 0.0) for s in series)

    def test_linear_in_drag_below_depth_cap(self, three_stations):
        deep = BathymetryGrid(np.full((4, 5), 50.0))
        wind = constant_wind(5.0)
        low = surrogate_evaluate(DEFAULT_THETA.replace(drg=0.6), wind, deep, three_stations)
        high = surrogate_evaluate(DEFAULT_THETA.replace(drg=1.2), wind, deep, three_stations)
        for a, b in zip(low, high):
            np.testing.assert_allclose(b.hs, 2.0 * a.hs, rtol=1e-12)

    def test_depth_cap_binds_in_shallow_water(self, three_stations):
        shallow = BathymetryGrid(np.full((4, 5), 4.0))
        series = surrogate_evaluate(DEFAULT_THETA, constant_wind(15.0), shallow, three_stations)
        cap = 0.5 * 4.0 * np.exp(-40 * 0.015 / 4.0)
        np.testing.assert_allclose(series[0].hs, cap, rtol=1e-12)

    def test_wind_memory_smooths_a_step(self, flat_bathy, three_stations):
        u = np.zeros((6, 4, 5))
        u[3:] = 10.0
        wind = WindField(constant_wind(0.0, nt=6).times, u, np.zeros_like(u))
        hs = surrogate_evaluate(DEFAULT_THETA, wind, flat_bathy, three_stations)[0].hs
        assert hs[2] == 0.0
        assert 0.0 < hs[3] < hs[4] < hs[5]

    def test_land_station_rejected(self, wind15):
        depth = np.full((4, 5), 20.0)
        depth[1, 1] = 0.0
        stations = StationSet((Station("L", 1, 1),))
        with pytest.raises(ConfigError, match="on land"):
            surrogate_evaluate(DEFAULT_THETA, wind15, BathymetryGrid(depth), stations)

    def test_grid_mismatch_rejected(self, wind15):
        stations = StationSet((Station("A", 0, 0),))
        with pytest.raises(ShapeError):
            surrogate_evaluate(DEFAULT_THETA, wind15, BathymetryGrid(np.full((3, 3), 20.0)), stations)

    def test_adapter_matches_function(self, wind15, flat_bathy, three_stations):
        model = SurrogateWaveModel(flat_bathy, three_stations)
        direct = surrogate_evaluate(DEFAULT_THETA, wind15, flat_bathy, three_stations)
        for a, b in zip(model.evaluate(DEFAULT_THETA, wind15), direct):
            np.testing.assert_array_equal(a.hs, b.hs)

    @pytest.mark.parametrize("name, direction", [("drg", 1), ("stpm", 1), ("cfw", -1)])
    def test_monotone_away_from_depth_cap(self, three_stations, name, direction):
        deep = BathymetryGrid(np.full((4, 5), 50.0))
        wind = storm_wind(ny=4, nx=5)
        base = surrogate_evaluate(DEFAULT_THETA, wind, deep, three_stations)
        for factor in (0.99, 1.01):
            theta = DEFAULT_THETA.replace(**{name: DEFAULT_THETA.get(name) * factor})
            moved = surrogate_evaluate(theta, wind, deep, three_stations)
            for a, b in zip(base, moved):
                assert np.all(a.hs > 0.0)
                assert np.all(a.hs < 0.5 * 50.0)
                change = np.sign(b.hs - a.hs)
                assert np.all(change == direction * np.sign(factor - 1.0))

    def test_bounded_by_depth(self, small_domain):
        bounds = ParameterBounds.default()
        stations = small_domain.stations
        depth = np.array([small_domain.bathy.depth[s.iy, s.ix] for s in stations])
        ceiling = 0.5 * depth * (bounds.stpm[1] / 0.00302) ** 0.25
        strong = WindField(small_domain.wind.times, 3.0 * small_domain.wind.u, 3.0 * small_domain.wind.v)
        for theta in lhs_sample(30, bounds, seed=4):
            for wind in (small_domain.wind, strong):
                series = surrogate_evaluate(theta, wind, small_domain.bathy, stations)
                for s, top in zip(series, ceiling):
                    assert np.all(s.hs >= 0.0)
                    assert np.all(s.hs <= top + 1e-12)


class TestExternalModel:
    @pytest.fixture
    def precomputed(self, tmp_path, wind15, flat_bathy, three_stations):
        series = surrogate_evaluate(DEFAULT_THETA, wind15, flat_bathy, three_stations)
        path = tmp_path / "precomputed.csv"
        write_station_csv(series, path)
        return series, path

    def test_stub_passthrough(self, tmp_path, wind15, three_stations, precomputed):
        expected, source = precomputed
        command = stub_command(f"--source {shlex.quote(str(source))}")
        series = external_evaluate(DEFAULT_THETA, wind15, command, three_stations, tmp_path / "work", timeout=60)
        assert [s.station_id for s in series] == three_stations.ids
        for got, want in zip(series, expected):
            np.testing.assert_array_equal(got.times, want.times)
            np.testing.assert_allclose(got.hs, want.hs, rtol=1e-12)
        assert (tmp_path / "work" / "params.json").exists()

    def test_nonzero_exit_carries_stderr(self, tmp_path, wind15, three_stations):
        with pytest.raises(ExternalModelError) as info:
            external_evaluate(DEFAULT_THETA, wind15, stub_command("--exit-code 3"), three_stations,
                              tmp_path, timeout=60)
        assert info.value.returncode == 3
        assert "simulated failure" in info.value.stderr

    def test_header_only_output(self, tmp_path, wind15, three_stations):
        with pytest.raises(InputFormatError, match="no data rows"):
            external_evaluate(DEFAULT_THETA, wind15, stub_command("--header-only"), three_stations,
                              tmp_path, timeout=60)

    def test_missing_output(self, tmp_path, wind15, three_stations):
        with pytest.raises(InputFormatError, match="no output"):
            external_evaluate(DEFAULT_THETA, wind15, stub_command("--no-output"), three_stations,
                              tmp_path, timeout=60)

    def test_timeout(self, tmp_path, wind15, three_stations):
        with pytest.raises(ModelTimeoutError):
            external_evaluate(DEFAULT_THETA, wind15, stub_command("--sleep 10"), three_stations,
                              tmp_path, timeout=0.5)

    def test_template_needs_placeholders(self, tmp_path, wind15):
        with pytest.raises(ConfigError):
            external_evaluate(DEFAULT_THETA, wind15, "model --drg {drg}", workdir=tmp_path)

    def test_output_missing_a_station(self, tmp_path, wind15, three_stations, precomputed):
        _, source = precomputed
        wanted = StationSet(three_stations.stations + (Station("D", 0, 0),))
        with pytest.raises(InputFormatError, match="lacks stations"):
            external_evaluate(DEFAULT_THETA, wind15, stub_command(f"--source {shlex.quote(str(source))}"),
                              wanted, tmp_path, timeout=60)

    def test_adapter(self, tmp_path, wind15, three_stations, precomputed):
        expected, source = precomputed
        model = ExternalProcessModel(stub_command(f"--source {shlex.quote(str(source))}"), three_stations,
                                     tmp_path / "adapter", timeout=60)
        series = model.evaluate(DEFAULT_THETA, wind15)
        np.testing.assert_allclose(series[2].hs, expected[2].hs, rtol=1e-12)

    def test_workdir_lock_released_after_run(self, tmp_path, wind15, three_stations, precomputed):
        _, source = precomputed
        workdir = tmp_path / "adapter"
        model = ExternalProcessModel(stub_command(f"--source {shlex.quote(str(source))}"), three_stations,
                                     workdir, timeout=60)
        model.evaluate(DEFAULT_THETA, wind15)
        assert str(workdir.resolve()) not in ExternalProcessModel._dir_locks

        failing = ExternalProcessModel(stub_command("--exit-code 3"), three_stations, workdir, timeout=60)
        with pytest.raises(ExternalModelError):
            failing.evaluate(DEFAULT_THETA, wind15)
        assert str(workdir.resolve()) not in ExternalProcessModel._dir_locks
