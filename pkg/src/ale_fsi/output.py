"""VTK snapshots, trajectory CSV files, remesh logs and convergence tables."""

import logging
from pathlib import Path
from typing import Iterable, Optional

import meshio
import numpy as np
import pandas as pd

from ale_fsi.ale import AleMap, deformed_coordinates
from ale_fsi.fem import DofMap
from ale_fsi.models import FsiState, RemeshEvent, TrajectoryRecord

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["t", "x", "y", "particle"]
REMESH_COLUMNS = ["step", "time", "x", "y", "reason"]


def _nodal_pressure(
    values: np.ndarray, space: DofMap, edges: np.ndarray, n_vertices: int
) -> np.ndarray:
    """P1 values on all quadratic nodes, zero outside the subdomain."""
    vertex = np.zeros(n_vertices)
    vertex[space.entities] = values
    midnode = 0.5 * (vertex[edges[:, 0]] + vertex[edges[:, 1]])
    return np.concatenate([vertex, midnode])


def _pad3(vectors: np.ndarray) -> np.ndarray:
    return np.column_stack([vectors, np.zeros(vectors.shape[0])])


def write_vtk(state: FsiState, ale: AleMap, path: Path, *, w: Optional[np.ndarray] = None) -> None:
    """Quadratic-triangle VTU file on the deformed coordinates."""
    spaces = ale.spaces
    mesh = spaces.mesh
    points = _pad3(deformed_coordinates(ale))
    mesh_w = w if w is not None else np.zeros_like(state.u)
    point_data = {
        "u": _pad3(state.u),
        "w": _pad3(mesh_w),
        "speed": np.linalg.norm(state.u, axis=1),
        "Ps": _nodal_pressure(state.ps, spaces.solid_pressure, mesh.edges, mesh.n_vertices),
        "Pf": _nodal_pressure(state.pf, spaces.fluid_pressure, mesh.edges, mesh.n_vertices),
    }
    cell_data = {"subdomain": [mesh.subdomain.astype(np.int32)]}
    out = meshio.Mesh(
        points, [("triangle6", mesh.elements)], point_data=point_data, cell_data=cell_data
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    meshio.write(path, out, file_format="vtu", binary=False)
    logger.debug(f"[OUT] write_vtk(): {path} nodes={mesh.n_nodes}")


def write_trajectory(
    trajectories: TrajectoryRecord | Iterable[TrajectoryRecord], path: Path
) -> None:
    """CSV with columns t, x, y, particle; floats written to round-trip exactly."""
    records = [trajectories] if isinstance(trajectories, TrajectoryRecord) else list(trajectories)
    frames = [
        pd.DataFrame({"t": r.t, "x": r.x, "y": r.y, "particle": [r.particle] * len(r)})
        for r in records
    ]
    if frames:
        df = pd.concat(frames, ignore_index=True)
    else:
        df = pd.DataFrame(columns=TRAJECTORY_COLUMNS)
    path.parent.mkdir(parents=True, exist_ok=True)
    df[TRAJECTORY_COLUMNS].to_csv(path, index=False, float_format="%.17g")


def read_trajectory(path: Path) -> list[TrajectoryRecord]:
    """Trajectories of a CSV file, one per particle id in ascending order."""
    df = pd.read_csv(path, float_precision="round_trip")
    missing = set(TRAJECTORY_COLUMNS[:3]) - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    if "particle" not in df.columns:
        df["particle"] = 0
    records = []
    for particle, group in df.groupby("particle", sort=True):
        records.append(
            TrajectoryRecord(
                t=group["t"].astype(float).tolist(),
                x=group["x"].astype(float).tolist(),
                y=group["y"].astype(float).tolist(),
                particle=int(particle),
            )
        )
    return records


def write_remesh_log(events: list[RemeshEvent], path: Path) -> None:
    df = pd.DataFrame(
        [(e.step, e.time, e.x, e.y, e.reason) for e in events], columns=REMESH_COLUMNS
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g")


def write_diagnostics(
    trajectory: TrajectoryRecord, areas: list[float], velocities: list[np.ndarray], path: Path
) -> None:
    """Per-step solid area and mean solid velocity next to the centroid."""
    vel = np.array(velocities).reshape(-1, 2)
    df = pd.DataFrame(
        {
            "t": trajectory.t,
            "x": trajectory.x,
            "y": trajectory.y,
            "area": areas,
            "vx": vel[:, 0],
            "vy": vel[:, 1],
        }
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g")


def write_convergence_table(table: pd.DataFrame, path: Path, *, note: str = "") -> None:
    """Study table as CSV preceded by '#' lines describing the study."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, value in table.attrs.items():
            f.write(f"# {key}={value}\n")
        if note:
            f.write(f"# note={note}\n")
        table.to_csv(f, index=False, float_format="%.6e")


def read_convergence_table(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
