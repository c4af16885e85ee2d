"""Tests for the discrete ALE map."""

import numpy as np
import pytest

from ale_fsi.ale import deformed_coordinates, identity_map, map_from_displacement, update_map
from ale_fsi.errors import DimensionMismatch, MeshTangled
from ale_fsi.fem import FunctionSpaces


def test_identity_map(box_spaces: FunctionSpaces) -> None:
    ale = identity_map(box_spaces)
    np.testing.assert_array_equal(ale.J, 1.0)
    np.testing.assert_array_equal(ale.F, ale.F_inv)
    np.testing.assert_array_equal(deformed_coordinates(ale), box_spaces.mesh.points)
    assert ale.version == 0


def test_uniform_velocity_translates(box_spaces: FunctionSpaces) -> None:
    ale = identity_map(box_spaces)
    w = np.tile([0.3, -0.1], (box_spaces.mesh.n_nodes, 1))
    moved = update_map(ale, w, 0.5)
    assert moved.version == 1
    np.testing.assert_allclose(moved.J, 1.0, atol=1e-13)
    shift = deformed_coordinates(moved) - box_spaces.mesh.points
    np.testing.assert_allclose(shift, [[0.15, -0.05]] * len(w))


def test_affine_velocity_gives_constant_gradient(box_spaces: FunctionSpaces) -> None:
    a = np.array([[0.2, 0.1], [-0.3, 0.05]])
    w = box_spaces.mesh.points @ a.T
    dt = 0.1
    moved = update_map(identity_map(box_spaces), w, dt)
    expected = np.eye(2) + dt * a
    np.testing.assert_allclose(moved.F, np.broadcast_to(expected, moved.F.shape), atol=1e-13)
    np.testing.assert_allclose(moved.J, np.linalg.det(expected), atol=1e-13)
    identity = np.broadcast_to(np.eye(2), moved.F.shape)
    np.testing.assert_allclose(moved.F_inv @ moved.F, identity, atol=1e-13)


def test_updates_accumulate(box_spaces: FunctionSpaces) -> None:
    ale = identity_map(box_spaces)
    w = np.tile([1.0, 0.0], (box_spaces.mesh.n_nodes, 1))
    for _ in range(4):
        ale = update_map(ale, w, 0.01)
    assert ale.version == 4
    np.testing.assert_allclose(ale.displacement[:, 0], 0.04)


def test_folded_mesh_is_tangled(box_spaces: FunctionSpaces) -> None:
    points = box_spaces.mesh.points
    disp = np.column_stack([-2.0 * points[:, 0], np.zeros(len(points))])
    with pytest.raises(MeshTangled):
        map_from_displacement(box_spaces, disp)


def test_wrong_shapes(box_spaces: FunctionSpaces) -> None:
    with pytest.raises(DimensionMismatch):
        map_from_displacement(box_spaces, np.zeros((4, 2)))
    with pytest.raises(DimensionMismatch):
        update_map(identity_map(box_spaces), np.zeros((4, 2)), 0.1)
