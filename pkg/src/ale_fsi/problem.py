"""One discrete FSI problem on a fixed reference mesh, and solid diagnostics."""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from ale_fsi.ale import AleMap
from ale_fsi.assembly import (
    AssemblyOptions,
    HarmonicExtension,
    assemble_jacobian,
    assemble_residual,
)
from ale_fsi.fem import FunctionSpaces
from ale_fsi.models import FsiState, NewtonConfig, NewtonStats, PhysicalParams
from ale_fsi.solver import newton_solve

logger = logging.getLogger(__name__)


@dataclass
class FsiProblem:
    """Spaces, parameters and solver settings shared by all stages of a run."""

    spaces: FunctionSpaces
    params: PhysicalParams
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    options: AssemblyOptions = field(default_factory=AssemblyOptions)
    _extension: Optional[HarmonicExtension] = field(default=None, repr=False)

    @property
    def extension(self) -> HarmonicExtension:
        if self._extension is None or self._extension.spaces is not self.spaces:
            self._extension = HarmonicExtension(self.spaces)
        return self._extension

    def mesh_velocity(self, u: np.ndarray) -> np.ndarray:
        """Harmonic extension of the solid part of u."""
        return self.extension(u)

    def residual(
        self,
        state: FsiState,
        history: Optional[FsiState],
        ale: AleMap,
        w: np.ndarray,
        dt_eff: float,
    ) -> np.ndarray:
        return assemble_residual(state, history, ale, w, dt_eff, self.params, options=self.options)

    def solve_stage(
        self,
        guess: FsiState,
        history: Optional[FsiState],
        ale: AleMap,
        w: np.ndarray,
        dt_eff: float,
        *,
        context: str = "",
    ) -> tuple[FsiState, NewtonStats]:
        """Solve R(X) = 0 for one implicit stage.

        history is the combination the divided difference is taken against;
        None solves the steady problem.
        """
        spaces = self.spaces
        x0 = spaces.pack(spaces.impose(guess))

        def residual_fn(x: np.ndarray) -> np.ndarray:
            return assemble_residual(
                spaces.unpack(x), history, ale, w, dt_eff, self.params, options=self.options
            )

        def jacobian_fn(x: np.ndarray) -> sparse.csr_matrix:
            return assemble_jacobian(
                spaces.unpack(x), history, ale, w, dt_eff, self.params, options=self.options
            )

        x, stats = newton_solve(residual_fn, jacobian_fn, x0, self.newton, context=context)
        return spaces.unpack(x), stats


def combine_states(spaces: FunctionSpaces, pairs: list[tuple[float, FsiState]]) -> FsiState:
    """Linear combination sum(c * X) of composite states."""
    x = sum(c * spaces.pack(s) for c, s in pairs)
    return spaces.unpack(np.asarray(x, dtype=float))


def _solid_measure(ale: AleMap) -> tuple[np.ndarray, np.ndarray]:
    """Deformed volume weights (m, Q) and quadrature-point positions (m, Q, 2) of the solid."""
    spaces = ale.spaces
    q = spaces.quadrature
    els = spaces.solid_group.elements
    dv = q.weights[None, :] * q.det_j[els] * ale.J[els]
    coords = (spaces.mesh.points + ale.displacement)[spaces.mesh.elements[els]]
    xq = np.einsum("qa,eai->eqi", q.n2, coords)
    return dv, xq


def solid_area(ale: AleMap) -> float:
    dv, _ = _solid_measure(ale)
    return float(dv.sum())


def solid_centroid(ale: AleMap) -> np.ndarray:
    """Area-weighted centroid of the deformed solid."""
    dv, xq = _solid_measure(ale)
    area = dv.sum()
    if area <= 0:
        return np.full(2, np.nan)
    return np.einsum("eq,eqi->i", dv, xq) / area


def solid_mean_velocity(state: FsiState, ale: AleMap) -> np.ndarray:
    dv, _ = _solid_measure(ale)
    spaces = ale.spaces
    conn = spaces.mesh.elements[spaces.solid_group.elements]
    uq = np.einsum("qa,eai->eqi", spaces.quadrature.n2, state.u[conn])
    area = dv.sum()
    if area <= 0:
        return np.full(2, np.nan)
    return np.einsum("eq,eqi->i", dv, uq) / area


def fluid_pressure_mean(state: FsiState, ale: AleMap) -> float:
    spaces = ale.spaces
    grp = spaces.fluid_group
    if len(grp) == 0:
        return 0.0
    q = spaces.quadrature
    dv = q.weights[None, :] * q.det_j[grp.elements] * ale.J[grp.elements]
    x = spaces.pack(state)
    pq = np.einsum("qr,er->eq", q.n1, x[grp.cell_dofs[:, 12:15]])
    return float((dv * pq).sum() / dv.sum())


def shift_pressure(state: FsiState, ale: AleMap) -> FsiState:
    """Copy with both pressures moved by one constant so the fluid pressure has zero mean."""
    shift = fluid_pressure_mean(state, ale)
    out = state.copy()
    out.ps -= shift
    out.pf -= shift
    return out
