"""Pytest fixtures for ale_fsi tests."""

import sqlite3
from pathlib import Path
from typing import Callable, Generator, Optional

import numpy as np
import pytest

from ale_fsi.fem import FlowBoundaryConditions, FunctionSpaces, build_spaces
from ale_fsi.mesh import build_quadratic_mesh
from ale_fsi.models import FLUID, SOLID, QuadraticMesh

Box = tuple[float, float, float, float]


def rectangle_mesh(
    nx: int,
    ny: int,
    length: float = 1.0,
    width: float = 1.0,
    *,
    solid_box: Optional[Box] = None,
    tags: tuple[str, str, str, str] = ("wall", "outflow", "wall", "inflow"),
) -> QuadraticMesh:
    """Structured quadratic mesh of [0, length] x [0, width].

    tags name the bottom, right, top and left sides. Cells whose centroid lies in
    solid_box (x0, y0, x1, y1) are solid.
    """
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, width, ny + 1)
    vx, vy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([vx.ravel(), vy.ravel()])

    def vid(i: int, j: int) -> int:
        return i * (ny + 1) + j

    tris = []
    labels = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            cx, cy = 0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])
            inside = solid_box is not None and (
                solid_box[0] < cx < solid_box[2] and solid_box[1] < cy < solid_box[3]
            )
            for tri in ((a, b, c), (a, c, d)):
                tris.append(tri)
                labels.append(SOLID if inside else FLUID)

    segments = []
    seg_tags = []
    bottom, right, top, left = tags
    for i in range(nx):
        segments += [(vid(i, 0), vid(i + 1, 0)), (vid(i, ny), vid(i + 1, ny))]
        seg_tags += [bottom, top]
    for j in range(ny):
        segments += [(vid(0, j), vid(0, j + 1)), (vid(nx, j), vid(nx, j + 1))]
        seg_tags += [left, right]
    return build_quadratic_mesh(
        vertices, np.array(tris), np.array(labels), np.array(segments), seg_tags
    )


@pytest.fixture
def temp_db(tmp_path: Path) -> Generator[Path, None, None]:
    """Create a temporary database file."""
    db_path = tmp_path / "test.db"
    yield db_path
    if db_path.exists():
        db_path.unlink()


@pytest.fixture
def db_connection(temp_db: Path) -> Generator[sqlite3.Connection, None, None]:
    """Create a database connection with the schema initialized."""
    from ale_fsi.db import init_db

    conn = init_db(temp_db)
    yield conn
    conn.close()


@pytest.fixture
def make_mesh() -> Callable[..., QuadraticMesh]:
    return rectangle_mesh


@pytest.fixture
def channel_mesh() -> QuadraticMesh:
    """Fluid-only 2 x 1 channel, inflow left, outflow right."""
    return rectangle_mesh(8, 4, length=2.0, width=1.0)


@pytest.fixture
def box_with_solid() -> QuadraticMesh:
    """Closed unit box with a square solid block in the middle."""
    return rectangle_mesh(
        5, 5, solid_box=(0.39, 0.39, 0.61, 0.61), tags=("wall", "wall", "wall", "wall")
    )


@pytest.fixture
def box_spaces(box_with_solid: QuadraticMesh) -> FunctionSpaces:
    """No-slip spaces on the closed box, one fluid pressure pinned."""
    return build_spaces(box_with_solid, with_solid=True).with_conditions(FlowBoundaryConditions())
