"""Tests for trajectory errors, convergence rates and studies."""

import math
from typing import Optional

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ale_fsi import analysis
from ale_fsi.analysis import (
    check_space_tables,
    check_time_tables,
    convergence_rate,
    radius_at_angle,
    run_convergence_study,
    run_spiral_demo,
    spread_decreases,
    trajectory_error,
)
from ale_fsi.errors import EmptyTrajectory, NonPositiveError
from ale_fsi.geometry import Disk
from ale_fsi.models import TrajectoryRecord
from ale_fsi.scenario import (
    ScenarioConfig,
    ScenarioRun,
    spiral_release_points,
    spiral_station_angle,
)

TIMES = np.linspace(0.0, 0.75, 16)


def linear(times: np.ndarray, offset: float = 0.0) -> TrajectoryRecord:
    return TrajectoryRecord(t=list(times), x=[0.5] * len(times), y=list(times + offset))


class TestConvergenceRate:
    def test_known_rates(self) -> None:
        rates = convergence_rate([4e-2, 1e-2, 2.5e-3], [0.1, 0.05, 0.025])
        assert rates == pytest.approx([2.0, 2.0])

    def test_mixed_rates(self) -> None:
        errors = [1e-2, 2.45e-3, 6.2e-4, 1.35e-4]
        rates = convergence_rate(errors, [0.04, 0.02, 0.01, 0.005])
        assert rates == pytest.approx([2.03, 1.98, 2.20], abs=0.01)

    def test_non_positive_error(self) -> None:
        with pytest.raises(NonPositiveError):
            convergence_rate([1e-2, 0.0], [0.1, 0.05])

    def test_length_mismatch(self) -> None:
        with pytest.raises(ValueError):
            convergence_rate([1e-2, 1e-3], [0.1])

    def test_steps_must_decrease(self) -> None:
        with pytest.raises(ValueError, match="decrease"):
            convergence_rate([1e-2, 1e-3], [0.05, 0.1])

    @given(
        errors=st.lists(st.floats(min_value=1e-8, max_value=1.0), min_size=2, max_size=5),
        scale=st.floats(min_value=1e-3, max_value=1e3),
    )
    def test_scale_invariant(self, errors: list[float], scale: float) -> None:
        steps = [2.0**-k for k in range(len(errors))]
        scaled = convergence_rate([scale * e for e in errors], steps)
        assert scaled == pytest.approx(convergence_rate(errors, steps), abs=1e-9)


class TestTrajectoryError:
    def test_constant_offset(self) -> None:
        ref = linear(np.linspace(0.0, 0.75, 61))
        err = trajectory_error(linear(TIMES, 0.01), ref, t_star=0.375)
        assert err.max_error == pytest.approx(0.01)
        assert err.at_t_star == pytest.approx(0.01)
        assert err.t_star == 0.375

    def test_t_star_outside(self) -> None:
        err = trajectory_error(linear(TIMES, 0.01), linear(TIMES), t_star=2.0)
        assert math.isnan(err.at_t_star)

    def test_empty(self) -> None:
        with pytest.raises(EmptyTrajectory):
            trajectory_error(TrajectoryRecord(), linear(TIMES))
        with pytest.raises(EmptyTrajectory):
            trajectory_error(linear(TIMES), TrajectoryRecord())

    def test_disjoint_times(self) -> None:
        with pytest.raises(EmptyTrajectory):
            trajectory_error(linear(TIMES + 10.0), linear(TIMES))


class TestConvergenceStudy:
    K = 3.0

    def runner(self, cfg: ScenarioConfig) -> TrajectoryRecord:
        """Synthetic second-order method in dt."""
        return linear(TIMES, self.K * cfg.dt**2)

    def test_second_order_in_dt(self) -> None:
        table = run_convergence_study(
            ScenarioConfig(),
            "dt",
            [0.04, 0.02, 0.01, 0.005],
            reference_level=1e-9,
            runner=self.runner,
        )
        assert table["level"].tolist() == [0.04, 0.02, 0.01, 0.005]
        assert math.isnan(table["rate_max"].iloc[0])
        np.testing.assert_allclose(table["rate_max"].iloc[1:], 2.0, rtol=1e-6)
        np.testing.assert_allclose(table["rate_t_star"].iloc[1:], 2.0, rtol=1e-6)
        np.testing.assert_allclose(table["max_error"], self.K * table["level"] ** 2, rtol=1e-6)
        assert table.attrs["axis"] == "dt"
        assert table.attrs["scheme"] == "fo"

    def test_finest_level_is_reference(self) -> None:
        table = run_convergence_study(
            ScenarioConfig(), "dt", [0.01, 0.04, 0.02], runner=self.runner
        )
        assert table["level"].tolist() == [0.04, 0.02]
        assert table.attrs["reference"] == 0.01

    def test_mesh_axis_sets_h(self) -> None:
        seen: list[tuple[float, float]] = []

        def runner(cfg: ScenarioConfig) -> TrajectoryRecord:
            seen.append((cfg.h, cfg.particle_h))
            return linear(TIMES, cfg.h**2)

        base = ScenarioConfig(particle_h=0.01)
        run_convergence_study(base, "h", [0.08, 0.04, 0.02], reference_level=0.005, runner=runner)
        assert seen == [(0.08, 0.0), (0.04, 0.0), (0.02, 0.0), (0.005, 0.0)]

    def test_too_few_levels(self) -> None:
        with pytest.raises(ValueError, match="at least 3"):
            run_convergence_study(ScenarioConfig(), "dt", [0.02, 0.01], runner=self.runner)
        with pytest.raises(ValueError, match="at least 2"):
            run_convergence_study(
                ScenarioConfig(), "dt", [0.02], reference_level=0.001, runner=self.runner
            )

    def test_unknown_axis(self) -> None:
        with pytest.raises(ValueError, match="axis"):
            run_convergence_study(ScenarioConfig(), "re", [3, 2, 1], runner=self.runner)

    def test_zero_errors_give_nan_rates(self) -> None:
        table = run_convergence_study(
            ScenarioConfig(),
            "dt",
            [0.04, 0.02, 0.01],
            reference_level=1e-3,
            runner=lambda cfg: linear(TIMES),
        )
        assert table["max_error"].tolist() == [0.0, 0.0, 0.0]
        assert table["rate_max"].iloc[1:].isna().all()


def polar_path(r0: float, r1: float, deg0: float, deg1: float, n: int = 28) -> TrajectoryRecord:
    """Counterclockwise path with radius linear in the polar angle."""
    phi = np.radians(np.linspace(deg0, deg1, n))
    r = r0 + (r1 - r0) * (phi - phi[0]) / (phi[-1] - phi[0])
    return TrajectoryRecord(
        t=list(np.linspace(0.0, 1.0, n)), x=list(r * np.cos(phi)), y=list(r * np.sin(phi))
    )


class TestRadiusAtAngle:
    def test_interpolates_past_half_turn(self) -> None:
        traj = polar_path(1.0, 2.0, 0.0, 350.0, n=36)
        phi = math.radians(262.5)
        assert radius_at_angle(traj, phi) == pytest.approx(1.0 + 262.5 / 350.0)

    def test_not_reached(self) -> None:
        assert radius_at_angle(polar_path(1.0, 1.0, 10.0, 200.0), math.radians(262.5)) is None

    def test_empty(self) -> None:
        assert radius_at_angle(TrajectoryRecord(), 1.0) is None


class TestSpiralDemo:
    @staticmethod
    def focusing_runner(cfg: ScenarioConfig, particle: Disk, u0: float) -> TrajectoryRecord:
        """Radius pulled toward 1.1 along the loop, more strongly at higher flux."""
        r0 = math.hypot(*particle.center)
        r_end = 1.1 + (r0 - 1.1) * cfg.u0 / u0 * 0.5
        return polar_path(r0, r_end, 10.0, 280.0)

    def test_spread_decreases_with_flux(self) -> None:
        table, trajectories = run_spiral_demo(ScenarioConfig(), runner=self.focusing_runner)
        assert table["flux"].tolist() == [1.0, 1.5, 3.0]
        assert table["particles"].tolist() == [5, 5, 5]
        assert table["qualitative"].all()
        assert spread_decreases(table)
        assert [t.particle for t in trajectories] == list(range(15))

    def test_spread_is_measured_at_station(self) -> None:
        cfg = ScenarioConfig()
        table, _ = run_spiral_demo(cfg, runner=self.focusing_runner)
        station = spiral_station_angle(cfg)
        radii = [
            radius_at_angle(self.focusing_runner(cfg, p, cfg.u0), station)
            for p in spiral_release_points(cfg.replace(kind="spiral"))
        ]
        assert table["spread"].iloc[0] == pytest.approx(np.std(radii))

    def test_empty_trajectories_are_skipped(self) -> None:
        def runner(cfg: ScenarioConfig, particle: Disk, u0: float) -> TrajectoryRecord:
            if particle.center[0] > 1.4:
                return TrajectoryRecord()
            return self.focusing_runner(cfg, particle, u0)

        table, trajectories = run_spiral_demo(ScenarioConfig(), runner=runner)
        assert table["particles"].tolist() == [4, 4, 4]
        assert len(trajectories) == 12

    def test_failed_runs_are_skipped(self) -> None:
        def runner(cfg: ScenarioConfig, particle: Disk, u0: float) -> Optional[TrajectoryRecord]:
            if particle.center[0] > 1.4:
                return None
            return self.focusing_runner(cfg, particle, u0)

        table, trajectories = run_spiral_demo(ScenarioConfig(), runner=runner)
        assert table["particles"].tolist() == [4, 4, 4]
        assert len(trajectories) == 12

    def test_particles_short_of_station_are_left_out(self) -> None:
        def runner(cfg: ScenarioConfig, particle: Disk, u0: float) -> TrajectoryRecord:
            if particle.center[0] > 1.4:
                return polar_path(1.4, 1.4, 10.0, 200.0)
            return self.focusing_runner(cfg, particle, u0)

        table, trajectories = run_spiral_demo(ScenarioConfig(), runner=runner)
        assert table["particles"].tolist() == [4, 4, 4]
        assert len(trajectories) == 15

    def test_aborted_scenario_runs_are_not_counted(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr(analysis, "solve_background_steady", lambda *a, **kw: None)
        monkeypatch.setattr(
            analysis, "run_scenario", lambda cfg, **kw: ScenarioRun(cfg, loop_result=None)
        )
        table, trajectories = run_spiral_demo(ScenarioConfig())
        assert table["particles"].tolist() == [0, 0, 0]
        assert table["spread"].isna().all()
        assert trajectories == []

    def test_spread_not_decreasing(self) -> None:
        table = pd.DataFrame({"flux": [3.0, 1.0, 1.5], "spread": [0.1, 0.3, 0.1]})
        assert not spread_decreases(table)


def study_table(levels: list[float], errors: list[float]) -> pd.DataFrame:
    rates = [math.nan, *convergence_rate(errors, levels)]
    return pd.DataFrame(
        {
            "level": levels,
            "max_error": errors,
            "rate_max": rates,
            "error_t_star": errors,
            "rate_t_star": rates,
        }
    )


DTS = [3.0 / 200.0, 3.0 / 400.0, 3.0 / 800.0]
HS = [0.04, 0.02 * math.sqrt(2.0), 0.02]


class TestTimeTableChecks:
    def test_first_and_second_order_pass(self) -> None:
        fo = study_table(DTS, [4e-3, 2e-3, 1e-3])
        prk2 = study_table(DTS, [4e-4, 1e-4, 2.5e-5])
        assert check_time_tables(fo, prk2) == []
        assert check_time_tables(fo, prk2, metric="t_star") == []

    def test_rate_outside_window(self) -> None:
        fo = study_table(DTS, [4e-3, 2e-3, 1e-3])
        prk2 = study_table(DTS, [4e-4, 2e-4, 1e-4])
        problems = check_time_tables(fo, prk2)
        assert len(problems) == 2
        assert all(p.startswith("prk2: rate 1.000") for p in problems)

    def test_prk2_must_beat_fo(self) -> None:
        fo = study_table(DTS, [4e-3, 2e-3, 1e-3])
        prk2 = study_table(DTS, [8e-3, 2e-3, 5e-4])
        problems = check_time_tables(fo, prk2)
        assert any(p.startswith("dt=0.015: prk2 error") for p in problems)
        assert any(p.startswith("dt=0.0075: prk2 error") for p in problems)

    def test_unknown_metric(self) -> None:
        fo = study_table(DTS, [4e-3, 2e-3, 1e-3])
        with pytest.raises(ValueError, match="metric"):
            check_time_tables(fo, fo, metric="mean")


class TestSpaceTableChecks:
    def test_curved_beats_straight(self) -> None:
        straight = study_table(HS, [8e-3, 4e-3, 2e-3])  # rate 2
        curved = study_table(HS, [2e-3, 2e-3 / 2**1.5, 2.5e-4])  # rate 3
        assert check_space_tables(straight, curved) == []

    def test_factor_and_rate_margin(self) -> None:
        straight = study_table(HS, [8e-3, 4e-3, 2e-3])
        curved = study_table(HS, [6e-3, 3e-3, 1.5e-3])
        problems = check_space_tables(straight, curved)
        assert sum("not 2x below straight" in p for p in problems) == 3
        assert any(p.startswith("mean curved rate 2.000") for p in problems)
