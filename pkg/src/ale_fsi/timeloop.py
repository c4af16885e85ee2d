"""Uniform time loop with per-step hooks and a single halving retry."""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ale_fsi.ale import AleMap, deformed_coordinates, identity_map
from ale_fsi.errors import FsiError, NonConvergence
from ale_fsi.models import FsiState, TimeLoopConfig, TrajectoryRecord
from ale_fsi.problem import FsiProblem, solid_area, solid_centroid, solid_mean_velocity
from ale_fsi.schemes import StepResult, TimeScheme, get_scheme

logger = logging.getLogger(__name__)


@dataclass
class LoopState:
    """Everything the loop carries from one step to the next."""

    problem: FsiProblem
    state: FsiState
    ale: AleMap
    w: np.ndarray


@dataclass
class StepEvent:
    """View handed to hooks after every accepted step."""

    step: int
    time: float
    dt: float
    loop: LoopState
    result: StepResult

    @property
    def state(self) -> FsiState:
        return self.loop.state

    @property
    def deformed(self) -> np.ndarray:
        return deformed_coordinates(self.loop.ale)


# A hook may return a replacement LoopState (e.g. after a remesh)
StepHook = Callable[[StepEvent], Optional[LoopState]]


@dataclass
class Snapshot:
    step: int
    time: float
    state: FsiState
    ale: AleMap
    w: np.ndarray


@dataclass
class TimeLoopResult:
    """Final loop state, centroid series and solid diagnostics."""

    loop: LoopState
    trajectory: TrajectoryRecord
    areas: list[float] = field(default_factory=list)
    velocities: list[np.ndarray] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    steps_done: int = 0
    newton_iterations: int = 0
    retries: int = 0
    failed: bool = False
    message: str = ""

    @property
    def state(self) -> FsiState:
        return self.loop.state


def _advance(
    scheme: TimeScheme, loop: LoopState, dt: float, context: str
) -> tuple[StepResult, int]:
    """One step, or two half steps after a Newton failure."""
    try:
        return scheme.step(loop.problem, loop.state, loop.ale, loop.w, dt, context=context), 0
    except NonConvergence as e:
        logger.warning(f"[LOOP] {context} Newton failed ({e}), retrying with dt/2")
    half = scheme.step(
        loop.problem, loop.state, loop.ale, loop.w, 0.5 * dt, context=f"{context} half=1"
    )
    second = scheme.step(
        loop.problem, half.state, half.ale, half.w, 0.5 * dt, context=f"{context} half=2"
    )
    second.stages = half.stages + second.stages
    return second, 1


def run_time_loop(
    problem: FsiProblem,
    initial: FsiState,
    cfg: TimeLoopConfig,
    *,
    ale: Optional[AleMap] = None,
    w0: Optional[np.ndarray] = None,
    hooks: Sequence[StepHook] = (),
    scheme: Optional[TimeScheme] = None,
    particle: int = 0,
) -> TimeLoopResult:
    """Run cfg.n_steps uniform steps from the initial state.

    The initial mesh velocity defaults to the harmonic extension of the initial
    velocity. On an FsiError the partial result is returned with failed=True.
    """
    start_time = time.time()
    scheme = scheme or get_scheme(cfg.scheme)
    n_steps = cfg.n_steps
    ale = ale or identity_map(problem.spaces)
    initial = problem.spaces.impose(initial)
    w = w0 if w0 is not None else problem.mesh_velocity(initial.u)
    loop = LoopState(problem, initial, ale, w)
    result = TimeLoopResult(loop=loop, trajectory=TrajectoryRecord(particle=particle))
    has_solid = problem.spaces.mesh.has_solid
    logger.info(
        f"[LOOP] run_time_loop(): scheme={scheme.code} dt={cfg.dt:g} steps={n_steps} "
        f"dofs={problem.spaces.size}"
    )

    for n in range(1, n_steps + 1):
        t = n * cfg.dt
        context = f"step={n} t={t:.6g}"
        try:
            step_result, retried = _advance(scheme, loop, cfg.dt, context)
        except FsiError as e:
            logger.error(f"[LOOP] {context} aborted: {e}")
            result.failed = True
            result.message = f"{type(e).__name__}: {e}"
            break
        result.retries += retried
        result.newton_iterations += step_result.newton_iterations
        loop = LoopState(loop.problem, step_result.state, step_result.ale, step_result.w)

        if has_solid:
            cx, cy = solid_centroid(loop.ale)
            result.trajectory.append(t, cx, cy)
            result.areas.append(solid_area(loop.ale))
            result.velocities.append(solid_mean_velocity(loop.state, loop.ale))
        if cfg.output_every and n % cfg.output_every == 0:
            result.snapshots.append(Snapshot(n, t, loop.state.copy(), loop.ale, loop.w.copy()))

        event = StepEvent(n, t, cfg.dt, loop, step_result)
        try:
            for hook in hooks:
                replacement = hook(event)
                if replacement is not None:
                    loop = replacement
                    event.loop = loop
        except FsiError as e:
            logger.error(f"[LOOP] {context} hook failed: {e}")
            result.failed = True
            result.message = f"{type(e).__name__}: {e}"
            result.steps_done = n
            break
        result.steps_done = n

    result.loop = loop
    elapsed_ms = (time.time() - start_time) * 1000
    logger.info(
        f"[LOOP] run_time_loop(): steps={result.steps_done}/{n_steps} "
        f"newton={result.newton_iterations} retries={result.retries} "
        f"failed={result.failed} elapsed={elapsed_ms:.0f}ms"
    )
    return result
