"""Tests for the uniform time loop."""

from typing import Optional

import numpy as np
import pytest

from ale_fsi.ale import AleMap
from ale_fsi.errors import NonConvergence, TransferFailure
from ale_fsi.fem import FlowBoundaryConditions, FunctionSpaces, build_spaces
from ale_fsi.models import FsiState, PhysicalParams, QuadraticMesh, TimeLoopConfig
from ale_fsi.problem import FsiProblem
from ale_fsi.schemes import SCHEMES, FirstOrderScheme, StepResult
from ale_fsi.timeloop import LoopState, StepEvent, run_time_loop


@pytest.fixture
def problem(box_spaces: FunctionSpaces) -> FsiProblem:
    return FsiProblem(box_spaces, PhysicalParams(re=1.0, e=10.0))


class FlakyScheme(FirstOrderScheme):
    """First-order scheme whose first full-size step fails."""

    def __init__(self) -> None:
        self.calls: list[float] = []

    def step(
        self,
        problem: FsiProblem,
        state: FsiState,
        ale: AleMap,
        w: np.ndarray,
        dt: float,
        *,
        context: str = "",
    ) -> StepResult:
        self.calls.append(dt)
        if len(self.calls) == 1:
            raise NonConvergence("forced failure")
        return super().step(problem, state, ale, w, dt, context=context)


def test_zero_end_time(problem: FsiProblem) -> None:
    result = run_time_loop(problem, problem.spaces.zero_state(), TimeLoopConfig(dt=0.1, t_end=0.0))
    assert result.steps_done == 0
    assert result.trajectory.is_empty
    assert not result.failed


def test_quiescent_run(problem: FsiProblem) -> None:
    cfg = TimeLoopConfig(dt=0.01, t_end=0.1, output_every=5)
    result = run_time_loop(problem, problem.spaces.zero_state(), cfg, particle=4)
    assert result.steps_done == 10
    assert result.newton_iterations == 0
    assert result.trajectory.particle == 4
    assert result.trajectory.t == pytest.approx([0.01 * (k + 1) for k in range(10)])
    np.testing.assert_allclose(result.trajectory.x, 0.5, atol=1e-14)
    np.testing.assert_allclose(result.trajectory.y, 0.5, atol=1e-14)
    np.testing.assert_allclose(result.areas, 0.04, rtol=1e-12)
    assert [s.step for s in result.snapshots] == [5, 10]


@pytest.mark.parametrize("code", sorted(SCHEMES))
def test_quiescent_state_is_kept_for_100_steps(problem: FsiProblem, code: str) -> None:
    cfg = TimeLoopConfig(dt=0.01, t_end=1.0, scheme=code)
    result = run_time_loop(problem, problem.spaces.zero_state(), cfg)
    assert not result.failed
    assert result.steps_done == 100
    assert np.abs(result.state.u).max() < problem.newton.abs_tol
    np.testing.assert_allclose(result.state.b, [[1.0, 0.0, 1.0]] * len(result.state.b), atol=1e-12)


def test_hook_failure_keeps_partial_result(problem: FsiProblem) -> None:
    def hook(event: StepEvent) -> Optional[LoopState]:
        if event.step == 2:
            raise TransferFailure("no element found")
        return None

    cfg = TimeLoopConfig(dt=0.01, t_end=0.05)
    result = run_time_loop(problem, problem.spaces.zero_state(), cfg, hooks=[hook])
    assert result.failed
    assert "TransferFailure" in result.message
    assert result.steps_done == 2
    assert len(result.trajectory) == 2


def test_newton_failure_retries_with_half_steps(problem: FsiProblem) -> None:
    scheme = FlakyScheme()
    cfg = TimeLoopConfig(dt=0.02, t_end=0.04)
    result = run_time_loop(problem, problem.spaces.zero_state(), cfg, scheme=scheme)
    assert not result.failed
    assert result.retries == 1
    assert result.steps_done == 2
    assert scheme.calls == [0.02, 0.01, 0.01, 0.02]


def test_hook_replacement_is_carried(problem: FsiProblem) -> None:
    replacements: list[LoopState] = []

    def hook(event: StepEvent) -> Optional[LoopState]:
        assert event.dt == 0.01
        new = LoopState(event.loop.problem, event.state.copy(), event.loop.ale, event.loop.w)
        replacements.append(new)
        return new

    cfg = TimeLoopConfig(dt=0.01, t_end=0.03)
    result = run_time_loop(problem, problem.spaces.zero_state(), cfg, hooks=[hook])
    assert len(replacements) == 3
    assert result.loop is replacements[-1]


def test_fluid_only_run_has_no_trajectory(channel_mesh: QuadraticMesh) -> None:
    bcs = FlowBoundaryConditions(natural=("outflow", "inflow"))
    spaces = build_spaces(channel_mesh).with_conditions(bcs)
    problem = FsiProblem(spaces, PhysicalParams(re=1.0, e=0.0))
    result = run_time_loop(problem, spaces.zero_state(), TimeLoopConfig(dt=0.1, t_end=0.2))
    assert result.steps_done == 2
    assert result.trajectory.is_empty
