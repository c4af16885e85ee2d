"""Data models for meshes, states and run records."""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from ale_fsi import config

# Subdomain labels
FLUID = 0
SOLID = 1

SUBDOMAIN_NAMES = {
    FLUID: "fluid",
    SOLID: "solid",
}

# Local vertex pairs of the three mid-edge nodes (VTK quadratic triangle order)
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionless material parameters."""

    re: float  # Reynolds number
    e: float  # elastic modulus of the solid

    def __post_init__(self) -> None:
        if not self.re > 0:
            raise ValueError(f"Re must be positive, got {self.re}")
        if not self.e >= 0:
            raise ValueError(f"E must be non-negative, got {self.e}")


@dataclass(frozen=True, eq=False)
class QuadraticMesh:
    """Six-node triangle mesh with subdomain labels and tagged facets.

    Nodes are numbered vertices first, then one mid-edge node per edge, so node
    ``n_vertices + k`` sits on edge ``k``. Element rows list the three vertices
    followed by the mid-edge nodes of edges (0,1), (1,2), (2,0).
    """

    points: np.ndarray  # (n_nodes, 2)
    n_vertices: int
    elements: np.ndarray  # (n_elements, 6)
    edges: np.ndarray  # (n_edges, 2) vertex pairs, sorted
    element_edges: np.ndarray  # (n_elements, 3)
    subdomain: np.ndarray  # (n_elements,) FLUID or SOLID
    boundary_edges: np.ndarray  # (n_boundary,)
    boundary_tags: tuple[str, ...]
    interface_edges: np.ndarray  # (n_interface,)

    @property
    def vertex_coords(self) -> np.ndarray:
        return self.points[: self.n_vertices]

    @property
    def midedge_coords(self) -> np.ndarray:
        return self.points[self.n_vertices :]

    @property
    def n_nodes(self) -> int:
        return int(self.points.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def has_solid(self) -> bool:
        return bool(np.any(self.subdomain == SOLID))

    @cached_property
    def edge_elements(self) -> np.ndarray:
        """Elements on each side of every edge, -1 where there is none."""
        result = np.full((self.n_edges, 2), -1, dtype=np.int64)
        counts = np.zeros(self.n_edges, dtype=np.int64)
        for elem, row in enumerate(self.element_edges):
            for edge in row:
                result[edge, counts[edge]] = elem
                counts[edge] += 1
        return result

    @cached_property
    def neighbors(self) -> np.ndarray:
        """Element across each local edge, -1 on the boundary."""
        pairs = self.edge_elements[self.element_edges]  # (n_el, 3, 2)
        own = np.arange(self.n_elements)[:, None]
        return np.where(pairs[:, :, 0] == own, pairs[:, :, 1], pairs[:, :, 0])

    @cached_property
    def vertex_elements(self) -> list[list[int]]:
        table: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for elem, row in enumerate(self.elements[:, :3]):
            for v in row:
                table[v].append(elem)
        return table

    @cached_property
    def vertex_tree(self) -> cKDTree:
        return cKDTree(self.vertex_coords)

    @cached_property
    def bbox_diagonal(self) -> float:
        span = self.points.max(axis=0) - self.points.min(axis=0)
        return float(math.hypot(span[0], span[1]))

    def edge_nodes(self, edge_ids: np.ndarray) -> np.ndarray:
        """All nodes (both vertices and the mid-edge node) of the given edges."""
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        if edge_ids.size == 0:
            return np.zeros(0, dtype=np.int64)
        nodes = np.concatenate([self.edges[edge_ids].ravel(), self.n_vertices + edge_ids])
        return np.unique(nodes)

    def boundary_nodes(self, tags: Optional[set[str]] = None) -> np.ndarray:
        """Nodes on boundary facets, optionally restricted to some tags."""
        if tags is None:
            chosen = self.boundary_edges
        else:
            mask = np.array([t in tags for t in self.boundary_tags], dtype=bool)
            chosen = self.boundary_edges[mask] if mask.size else self.boundary_edges
        return self.edge_nodes(chosen)

    @property
    def tags(self) -> set[str]:
        return set(self.boundary_tags)

    def subdomain_nodes(self, label: int) -> np.ndarray:
        return np.unique(self.elements[self.subdomain == label].ravel())

    def subdomain_vertices(self, label: int) -> np.ndarray:
        return np.unique(self.elements[self.subdomain == label, :3].ravel())

    def moved(self, points: np.ndarray) -> "QuadraticMesh":
        """Same topology on new node coordinates."""
        return replace(self, points=np.asarray(points, dtype=float))


@dataclass(frozen=True)
class MeshQualityReport:
    """Worst-case shape measures of a mesh."""

    min_angle: float  # degrees, over vertex triangles
    min_detj_ratio: float  # min over quadrature points of detJ / element mean detJ
    worst_element: int

    @property
    def is_valid(self) -> bool:
        return self.min_detj_ratio > 0


@dataclass(frozen=True)
class PointLocation:
    """Result of locating a physical point in a mesh."""

    element: int
    xi: np.ndarray  # reference coordinates (2,)

    @property
    def barycentric(self) -> np.ndarray:
        return np.array([1.0 - self.xi[0] - self.xi[1], self.xi[0], self.xi[1]])


@dataclass
class FsiState:
    """Composite unknown X = (u, Ps, Pf, B).

    B is stored as its independent components (xx, xy, yy) per solid vertex,
    so an asymmetric B cannot be represented.
    """

    u: np.ndarray  # (n_nodes, 2)
    ps: np.ndarray  # (n_solid_vertices,)
    pf: np.ndarray  # (n_fluid_vertices,)
    b: np.ndarray  # (n_solid_vertices, 3)

    def expand_b(self) -> np.ndarray:
        """Full symmetric tensors, shape (n, 2, 2)."""
        full = np.empty((self.b.shape[0], 2, 2))
        full[:, 0, 0] = self.b[:, 0]
        full[:, 0, 1] = self.b[:, 1]
        full[:, 1, 0] = self.b[:, 1]
        full[:, 1, 1] = self.b[:, 2]
        return full

    def copy(self) -> "FsiState":
        return FsiState(self.u.copy(), self.ps.copy(), self.pf.copy(), self.b.copy())


@dataclass(frozen=True)
class NewtonConfig:
    """Newton iteration settings."""

    abs_tol: float = config.NEWTON_ABS_TOL
    rel_tol: float = config.NEWTON_REL_TOL
    max_iter: int = config.NEWTON_MAX_ITER
    step_tol: float = config.NEWTON_STEP_TOL
    backtrack_factor: float = config.LINE_SEARCH_FACTOR
    max_halvings: int = config.LINE_SEARCH_MAX_HALVINGS
    armijo_c: float = config.ARMIJO_C

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class NewtonStats:
    """Iteration history of one Newton solve."""

    iterations: int = 0
    residual_norms: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def final_norm(self) -> float:
        return self.residual_norms[-1] if self.residual_norms else math.nan


@dataclass(frozen=True)
class TimeLoopConfig:
    """Uniform time stepping settings."""

    dt: float
    t_end: float
    scheme: str = "fo"  # "fo" or "prk2"
    output_every: int = 0  # snapshot cadence in steps, 0 disables

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")

    @property
    def n_steps(self) -> int:
        """Number of uniform steps; 0 when t_end < dt."""
        if self.t_end < self.dt:
            return 0
        n = round(self.t_end / self.dt)
        if abs(n * self.dt - self.t_end) > 1e-8 * max(self.t_end, 1.0):
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return n


@dataclass
class TrajectoryRecord:
    """Centroid time series of one particle."""

    t: list[float] = field(default_factory=list)
    x: list[float] = field(default_factory=list)
    y: list[float] = field(default_factory=list)
    particle: int = 0

    def append(self, t: float, x: float, y: float) -> None:
        if self.t and t <= self.t[-1]:
            raise ValueError(f"trajectory times must increase: {t} after {self.t[-1]}")
        self.t.append(float(t))
        self.x.append(float(x))
        self.y.append(float(y))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def is_empty(self) -> bool:
        return not self.t


@dataclass(frozen=True)
class RemeshThresholds:
    """Triggers for regenerating the local mesh."""

    max_displacement: float  # centroid travel since the last remesh
    min_detj_ratio: float = config.REMESH_MIN_DETJ_RATIO
    min_angle: float = config.REMESH_MIN_ANGLE_DEG

    def __post_init__(self) -> None:
        if min(self.max_displacement, self.min_detj_ratio, self.min_angle) <= 0:
            raise ValueError("remesh thresholds must be positive")

    @classmethod
    def for_radius(cls, radius: float) -> "RemeshThresholds":
        return cls(max_displacement=config.REMESH_DISPLACEMENT_FACTOR * radius)


@dataclass(frozen=True)
class LocalDomainSpec:
    """Box around the particle on which the local problem is solved."""

    half_width: float
    near_size: float  # element size around the particle
    far_size: float
    near_radius_factor: float = 3.0  # refinement disk radius in particle radii

    def __post_init__(self) -> None:
        if min(self.half_width, self.near_size, self.far_size) <= 0:
            raise ValueError("local domain sizes must be positive")


@dataclass(frozen=True)
class RemeshEvent:
    """One regeneration of the local mesh."""

    step: int
    time: float
    x: float
    y: float
    reason: str  # "displacement" or "quality"


@dataclass(frozen=True, eq=False)
class BackgroundFlow:
    """Steady channel flow used as boundary data for local problems."""

    mesh: QuadraticMesh
    u: np.ndarray  # (n_nodes, 2)
    p: np.ndarray  # (n_fluid_vertices,)
    residual_history: tuple[float, ...] = ()

    @property
    def steady_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.nan

    @property
    def max_speed(self) -> float:
        return float(np.max(np.linalg.norm(self.u, axis=1)))
