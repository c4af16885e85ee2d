"""Tests for data models."""

import math

import numpy as np
import pytest

from ale_fsi.models import (
    FsiState,
    LocalDomainSpec,
    MeshQualityReport,
    NewtonStats,
    PhysicalParams,
    RemeshThresholds,
    TimeLoopConfig,
    TrajectoryRecord,
)


class TestPhysicalParams:
    def test_benchmark_values(self) -> None:
        params = PhysicalParams(re=3.0, e=1e9)
        assert params.re == 3.0
        assert params.e == 1e9

    @pytest.mark.parametrize("re", [0.0, -1.0])
    def test_rejects_non_positive_reynolds(self, re: float) -> None:
        with pytest.raises(ValueError):
            PhysicalParams(re=re, e=1.0)

    def test_rejects_negative_modulus(self) -> None:
        with pytest.raises(ValueError):
            PhysicalParams(re=1.0, e=-1.0)


class TestTimeLoopConfig:
    def test_n_steps(self) -> None:
        assert TimeLoopConfig(dt=3 / 800, t_end=0.75).n_steps == 200

    def test_t_end_below_dt_gives_zero_steps(self) -> None:
        assert TimeLoopConfig(dt=0.1, t_end=0.05).n_steps == 0

    def test_t_end_not_multiple_of_dt(self) -> None:
        with pytest.raises(ValueError, match="multiple"):
            _ = TimeLoopConfig(dt=0.3, t_end=1.0).n_steps

    def test_rejects_non_positive_dt(self) -> None:
        with pytest.raises(ValueError):
            TimeLoopConfig(dt=0.0, t_end=1.0)


class TestTrajectoryRecord:
    def test_append(self) -> None:
        traj = TrajectoryRecord(particle=3)
        assert traj.is_empty
        traj.append(0.1, 0.6, 0.76)
        traj.append(0.2, 0.62, 0.75)
        assert len(traj) == 2
        assert traj.x == [0.6, 0.62]
        assert not traj.is_empty

    def test_times_must_increase(self) -> None:
        traj = TrajectoryRecord()
        traj.append(0.1, 0.0, 0.0)
        with pytest.raises(ValueError, match="increase"):
            traj.append(0.1, 0.0, 0.0)


class TestFsiState:
    def test_expand_b_is_symmetric(self) -> None:
        state = FsiState(
            u=np.zeros((1, 2)),
            ps=np.zeros(2),
            pf=np.zeros(0),
            b=np.array([[1.0, 0.2, 3.0], [2.0, -1.0, 0.5]]),
        )
        full = state.expand_b()
        assert full.shape == (2, 2, 2)
        np.testing.assert_array_equal(full, np.swapaxes(full, 1, 2))
        assert full[0, 0, 1] == 0.2
        assert full[1, 1, 1] == 0.5

    def test_copy_is_independent(self) -> None:
        state = FsiState(np.ones((2, 2)), np.zeros(1), np.zeros(1), np.zeros((1, 3)))
        dup = state.copy()
        dup.u[0, 0] = 5.0
        assert state.u[0, 0] == 1.0


class TestThresholds:
    def test_for_radius(self) -> None:
        thr = RemeshThresholds.for_radius(0.08)
        assert thr.max_displacement == pytest.approx(0.024)

    def test_rejects_non_positive(self) -> None:
        with pytest.raises(ValueError):
            RemeshThresholds(max_displacement=0.0)

    def test_local_domain_spec(self) -> None:
        with pytest.raises(ValueError):
            LocalDomainSpec(half_width=0.8, near_size=0.0, far_size=0.1)


def test_newton_stats_final_norm() -> None:
    assert math.isnan(NewtonStats().final_norm)
    assert NewtonStats(2, [1.0, 1e-3, 1e-9], True).final_norm == 1e-9


def test_quality_report_validity() -> None:
    assert MeshQualityReport(30.0, 0.8, 0).is_valid
    assert not MeshQualityReport(30.0, -0.1, 4).is_valid
