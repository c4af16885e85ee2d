"""Tests for scenario configuration and benchmark geometries."""

import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ale_fsi.geometry import LineSegment, validate_geometry
from ale_fsi.scenario import (
    GEOMETRY_KINDS,
    INFLOW_TAG,
    OUTFLOW_TAG,
    ScenarioConfig,
    build_channel,
    build_geometry,
    channel_conditions,
    inflow_profile,
    load_scenario,
    save_scenario,
    scenario_from_ini,
    scenario_to_ini,
    segment_inflow,
    spiral_release_points,
    spiral_station_angle,
    validate_scenario,
)

finite = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False, allow_infinity=False)


class TestInflowProfile:
    def test_peak_at_centerline(self) -> None:
        assert inflow_profile(0.5, 1.0, 8.0) == pytest.approx((1.0, 0.0))
        assert inflow_profile(0.0, 1.0, 8.0) == (0.0, 0.0)

    def test_symmetric(self) -> None:
        assert inflow_profile(0.2, 1.0, 8.0) == pytest.approx(inflow_profile(0.8, 1.0, 8.0))

    def test_segment_inflow_points_inward(self) -> None:
        inlet = LineSegment((0.0, 1.0), (0.0, 0.0), INFLOW_TAG)
        velocity = segment_inflow(inlet, 8.0)
        ys = np.linspace(0.0, 1.0, 11)
        values = velocity(np.column_stack([np.zeros_like(ys), ys]))
        np.testing.assert_allclose(values[:, 0], 4.0 * ys * (1.0 - ys), atol=1e-14)
        np.testing.assert_array_equal(values[:, 1], 0.0)


class TestIni:
    def test_defaults_round_trip(self) -> None:
        cfg = ScenarioConfig()
        assert scenario_from_ini(scenario_to_ini(cfg)) == cfg

    @settings(max_examples=50, deadline=None)
    @given(
        re=finite,
        dt=finite,
        fluxes=st.lists(finite, min_size=1, max_size=4),
        max_iter=st.integers(min_value=1, max_value=500),
        curved=st.booleans(),
        out_dir=st.text(alphabet="abcxyz_/0123", min_size=1, max_size=12),
    )
    def test_round_trip(
        self, re: float, dt: float, fluxes: list[float], max_iter: int, curved: bool, out_dir: str
    ) -> None:
        cfg = ScenarioConfig(
            re=re,
            dt=dt,
            spiral_fluxes=tuple(fluxes),
            max_iter=max_iter,
            curved=curved,
            out_dir=out_dir,
        )
        assert scenario_from_ini(scenario_to_ini(cfg)) == cfg

    def test_missing_keys_keep_defaults(self) -> None:
        cfg = scenario_from_ini("[physics]\nre = 5.0\n")
        assert cfg.re == 5.0
        assert cfg.dt == ScenarioConfig().dt

    def test_pillars_are_parsed(self) -> None:
        cfg = scenario_from_ini("[geometry]\npillars = 1 0.5 0.1; 1.5 0.2 0.05\n")
        assert cfg.pillars == ((1.0, 0.5, 0.1), (1.5, 0.2, 0.05))

    def test_bad_pillars(self) -> None:
        with pytest.raises(ValueError, match="pillars"):
            scenario_from_ini("[geometry]\npillars = 1 0.5\n")

    def test_unknown_key(self) -> None:
        with pytest.raises(ValueError, match="unknown key"):
            scenario_from_ini("[physics]\nviscosity = 1.0\n")

    def test_key_in_wrong_section(self) -> None:
        with pytest.raises(ValueError, match="belongs in"):
            scenario_from_ini("[time]\nre = 1.0\n")

    def test_bad_boolean(self) -> None:
        with pytest.raises(ValueError, match="boolean"):
            scenario_from_ini("[mesh]\ncurved = maybe\n")

    def test_save_and_load(self, tmp_path: Path) -> None:
        cfg = ScenarioConfig(kind="straight", scheme="prk2")
        path = tmp_path / "run.ini"
        save_scenario(cfg, path)
        assert load_scenario(path) == cfg

    def test_load_invalid(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.ini"
        path.write_text("[time]\ndt = -1.0\n", encoding="utf-8")
        with pytest.raises(ValueError, match="dt must be positive"):
            load_scenario(path)


class TestValidateScenario:
    def test_defaults_valid(self) -> None:
        assert validate_scenario(ScenarioConfig()) == []

    @pytest.mark.parametrize(
        "changes,message",
        [
            ({"kind": "torus"}, "unknown geometry kind"),
            ({"re": 0.0}, "re must be positive"),
            ({"e": -1.0}, "e must be non-negative"),
            ({"scheme": "rk4"}, "scheme"),
            ({"viscous_form": "exact"}, "viscous_form"),
            ({"h": 0.0}, "h must be positive"),
            ({"pillars": ((1.0, 0.5, -0.1),)}, "pillar 0 radius"),
            ({"spiral_sweep_deg": 360.0}, "spiral_sweep_deg"),
            ({"threads": 0}, "threads"),
        ],
    )
    def test_errors(self, changes: dict, message: str) -> None:
        errors = validate_scenario(ScenarioConfig().replace(**changes))
        assert any(message in e for e in errors)


class TestGeometries:
    @pytest.mark.parametrize("kind", GEOMETRY_KINDS)
    def test_channels_are_valid(self, kind: str) -> None:
        cfg = ScenarioConfig(kind=kind)
        assert validate_geometry(build_channel(cfg)) == []

    def test_double_pillar_with_particle(self) -> None:
        geometry = build_geometry(ScenarioConfig())
        assert validate_geometry(geometry) == []
        assert len(geometry.holes) == 2
        assert geometry.particles[0].center == (0.60, 0.76)

    def test_particle_refinement(self) -> None:
        cfg = ScenarioConfig(h=0.1, particle_h=0.02)
        geometry = build_geometry(cfg)
        near = geometry.size_field(np.array([[0.6, 0.76]]))
        far = geometry.size_field(np.array([[1.7, 0.1]]))
        assert near[0] == pytest.approx(0.02)
        assert far[0] == pytest.approx(0.1)

    def test_conditions(self) -> None:
        cfg = ScenarioConfig(kind="straight")
        bcs = channel_conditions(cfg, build_channel(cfg))
        assert set(bcs.dirichlet) == {INFLOW_TAG}
        assert bcs.natural == (OUTFLOW_TAG,)
        peak = bcs.dirichlet[INFLOW_TAG](np.array([[0.0, 0.5]]))
        np.testing.assert_allclose(peak, [[1.0, 0.0]])

    def test_spiral_release_points(self) -> None:
        cfg = ScenarioConfig(kind="spiral")
        disks = spiral_release_points(cfg)
        assert len(disks) == 5
        radii = [np.hypot(*d.center) for d in disks]
        np.testing.assert_allclose(radii, np.linspace(0.76, 1.44, 5))
        assert validate_geometry(build_geometry(cfg, disks)) == []

    def test_spiral_station_between_last_obstacle_and_outlet(self) -> None:
        cfg = ScenarioConfig(kind="spiral")
        assert spiral_station_angle(cfg) == pytest.approx(math.radians(262.5))
        assert spiral_station_angle(cfg.replace(spiral_obstacles=1)) == pytest.approx(
            math.radians(225.0)
        )
