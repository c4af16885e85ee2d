"""Two-stage IMEX partitioned Runge-Kutta ALE scheme."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ale_fsi.ale import AleMap, update_map
from ale_fsi.models import FsiState, NewtonStats
from ale_fsi.problem import FsiProblem, combine_states
from ale_fsi.schemes.base import StepResult, TimeScheme

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class PrkCoefficients:
    """Stage coefficients; the combination weights each sum to one."""

    gamma: float = 1.0 - 1.0 / _SQRT2
    beta0: float = -_SQRT2
    beta_star: float = 1.0 + _SQRT2
    c0: float = -1.0 / _SQRT2
    c_star: float = 1.0 + 1.0 / _SQRT2

    def __post_init__(self) -> None:
        if abs(self.beta0 + self.beta_star - 1.0) > 1e-15:
            raise ValueError("beta0 + beta_star must equal 1")
        if abs(self.c0 + self.c_star - 1.0) > 1e-15:
            raise ValueError("c0 + c_star must equal 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")


def first_stage(
    problem: FsiProblem,
    state: FsiState,
    ale: AleMap,
    dt: float,
    gamma: float,
    *,
    context: str = "",
) -> tuple[FsiState, AleMap, np.ndarray, NewtonStats]:
    """Extension of u^n, map advance by gamma dt, implicit solve for X*."""
    w_star = problem.mesh_velocity(state.u)
    ale_star = update_map(ale, w_star, gamma * dt)
    x_star, stats = problem.solve_stage(
        state, state, ale_star, w_star, gamma * dt, context=f"{context} stage=1"
    )
    return x_star, ale_star, w_star, stats


class ImexPrk2Scheme(TimeScheme):
    """Second-order scheme: explicit mesh motion per stage, implicit FSI solve."""

    def __init__(self, coeffs: PrkCoefficients = PrkCoefficients()):
        self.coeffs = coeffs

    @property
    def code(self) -> str:
        return "prk2"

    @property
    def name(self) -> str:
        return "IMEX partitioned Runge-Kutta 2"

    @property
    def order(self) -> int:
        return 2

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
        k = self.coeffs
        x_star, _, _, stats1 = first_stage(problem, state, ale, dt, k.gamma, context=context)

        w_new = problem.mesh_velocity(k.c0 * state.u + k.c_star * x_star.u)
        ale_new = update_map(ale, w_new, dt)
        history = combine_states(problem.spaces, [(k.beta0, state), (k.beta_star, x_star)])
        new_state, stats2 = problem.solve_stage(
            x_star, history, ale_new, w_new, k.gamma * dt, context=f"{context} stage=2"
        )
        return StepResult(new_state, ale_new, w_new, [stats1, stats2])

    def amplification(self, z: complex) -> complex:
        k = self.coeffs
        stage = 1.0 / (1.0 - k.gamma * z)
        return (k.beta0 + k.beta_star * stage) * stage
