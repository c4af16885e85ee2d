"""Discrete ALE map: nodal displacement of the reference mesh."""

import logging
from dataclasses import dataclass

import numpy as np

from ale_fsi.errors import DimensionMismatch, MeshTangled
from ale_fsi.fem import FunctionSpaces, det2, inv2

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AleMap:
    """Map A_h(x) = x + displacement(x) with F, F^-1 and J at quadrature points."""

    spaces: FunctionSpaces
    displacement: np.ndarray  # (n_nodes, 2)
    F: np.ndarray  # (n_el, Q, 2, 2)
    F_inv: np.ndarray
    J: np.ndarray  # (n_el, Q)
    version: int = 0


def _gradients(spaces: FunctionSpaces, displacement: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    conn = spaces.mesh.elements
    grad_d = np.einsum("eai,eqaj->eqij", displacement[conn], spaces.quadrature.grad2)
    f = grad_d + np.eye(2)
    return f, det2(f)


def identity_map(spaces: FunctionSpaces) -> AleMap:
    """A_h = identity, as at t = 0 and after every remesh."""
    n_el, n_q = spaces.quadrature.det_j.shape
    f = np.broadcast_to(np.eye(2), (n_el, n_q, 2, 2)).copy()
    return AleMap(spaces, np.zeros((spaces.mesh.n_nodes, 2)), f, f.copy(), np.ones((n_el, n_q)))


def map_from_displacement(
    spaces: FunctionSpaces, displacement: np.ndarray, version: int = 0
) -> AleMap:
    if displacement.shape != (spaces.mesh.n_nodes, 2):
        raise DimensionMismatch(f"displacement shape {displacement.shape}")
    f, j = _gradients(spaces, displacement)
    if np.any(j <= 0):
        bad = int(np.argmin(j.min(axis=1)))
        raise MeshTangled(f"ALE Jacobian {float(j.min()):.3e} <= 0 in element {bad}")
    return AleMap(spaces, displacement, f, inv2(f), j, version)


def update_map(ale: AleMap, w: np.ndarray, dt: float) -> AleMap:
    """New map with displacement + dt * w.

    Raises:
        MeshTangled: the updated Jacobian is not positive somewhere.
    """
    if w.shape != ale.displacement.shape:
        raise DimensionMismatch(f"mesh velocity shape {w.shape} vs {ale.displacement.shape}")
    new = map_from_displacement(ale.spaces, ale.displacement + dt * w, ale.version + 1)
    logger.debug(
        f"[ALE] update_map(): version={new.version} min_J={float(new.J.min()):.4f} "
        f"max_disp={float(np.abs(new.displacement).max()):.3e}"
    )
    return new


def deformed_coordinates(ale: AleMap) -> np.ndarray:
    """Physical positions of all vertices and mid-edge nodes."""
    return np.asarray(ale.spaces.mesh.points + ale.displacement)
