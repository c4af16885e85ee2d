"""First-order semi-implicit ALE scheme."""

import numpy as np

from ale_fsi.ale import AleMap, update_map
from ale_fsi.models import FsiState
from ale_fsi.problem import FsiProblem
from ale_fsi.schemes.base import StepResult, TimeScheme


class FirstOrderScheme(TimeScheme):
    """Backward Euler on the current map, then extension and map update.

    The mesh velocity passed in is the one produced by the previous step.
    """

    @property
    def code(self) -> str:
        return "fo"

    @property
    def name(self) -> str:
        return "first-order semi-implicit"

    @property
    def order(self) -> int:
        return 1

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
        new_state, stats = problem.solve_stage(
            state, state, ale, w, dt, context=f"{context} stage=1"
        )
        w_new = problem.mesh_velocity(new_state.u)
        return StepResult(new_state, update_map(ale, w_new, dt), w_new, [stats])

    def amplification(self, z: complex) -> complex:
        return 1.0 / (1.0 - z)
