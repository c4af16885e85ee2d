"""Reference elements, quadrature, DOF maps and sparsity patterns."""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.special import roots_jacobi, roots_legendre

from ale_fsi import config
from ale_fsi.errors import DimensionMismatch, EmptySubdomain, NonPositiveJacobian
from ale_fsi.models import FLUID, SOLID, FsiState, QuadraticMesh

logger = logging.getLogger(__name__)

VelocityFn = Callable[[np.ndarray], np.ndarray]

# Independent components of a symmetric 2x2 tensor, in storage order
SYM_INDEX = ((0, 0), (0, 1), (1, 1))

# Unit symmetric tensors matching SYM_INDEX, shape (3, 2, 2)
SYM_BASIS = np.array(
    [
        [[1.0, 0.0], [0.0, 0.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, 0.0], [0.0, 1.0]],
    ]
)


def triangle_quadrature(degree: int = config.QUADRATURE_DEGREE) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Gauss-Jacobi in the collapsed direction and Gauss-Legendre along the fibers,
    exact for polynomials up to the requested total degree. Weights sum to 1/2.
    """
    n = max(1, math.ceil((degree + 1) / 2))
    t, wt = roots_jacobi(n, 1.0, 0.0)
    s, ws = roots_legendre(n)
    u = 0.5 * (1.0 + t)
    v = 0.5 * (1.0 + s)
    xi = np.repeat(u, n)
    eta = ((1.0 - u)[:, None] * v[None, :]).ravel()
    weights = (wt[:, None] * ws[None, :]).ravel() / 8.0
    return np.stack([xi, eta], axis=1), weights


def line_quadrature(n: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    s, w = roots_legendre(n)
    return 0.5 * (1.0 + s), 0.5 * w


def p2_basis(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic Lagrange basis values (Q, 6) and reference gradients (Q, 6, 2)."""
    xi = np.atleast_2d(xi)
    x, y = xi[:, 0], xi[:, 1]
    lam = np.stack([1.0 - x - y, x, y], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    n = np.empty((xi.shape[0], 6))
    dn = np.empty((xi.shape[0], 6, 2))
    for i in range(3):
        n[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        dn[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * dlam[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        n[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
        dn[:, 3 + k] = 4.0 * (lam[:, j][:, None] * dlam[i] + lam[:, i][:, None] * dlam[j])
    return n, dn


def p1_basis(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear Lagrange basis values (Q, 3) and reference gradients (Q, 3, 2)."""
    xi = np.atleast_2d(xi)
    n = np.stack([1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]], axis=1)
    dn = np.broadcast_to(
        np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (xi.shape[0], 3, 2)
    ).copy()
    return n, dn


def element_jacobians(coords: np.ndarray, dn: np.ndarray) -> np.ndarray:
    """Isoparametric Jacobians dx/dxi, shape (E, Q, 2, 2), from node coords (E, 6, 2)."""
    return np.einsum("eai,qam->eqim", coords, dn)


def det2(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def inv2(m: np.ndarray) -> np.ndarray:
    det = det2(m)
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1] / det
    out[..., 0, 1] = -m[..., 0, 1] / det
    out[..., 1, 0] = -m[..., 1, 0] / det
    out[..., 1, 1] = m[..., 0, 0] / det
    return out


@dataclass(frozen=True, eq=False)
class QuadratureCache:
    """Basis data at quadrature points and reference-mesh geometry per element."""

    points: np.ndarray  # (Q, 2)
    weights: np.ndarray  # (Q,)
    n2: np.ndarray  # (Q, 6)
    dn2: np.ndarray  # (Q, 6, 2)
    n1: np.ndarray  # (Q, 3)
    dn1: np.ndarray  # (Q, 3, 2)
    det_j: np.ndarray  # (n_el, Q) reference-mesh Jacobian determinants
    grad2: np.ndarray  # (n_el, Q, 6, 2) P2 gradients on the reference mesh
    grad1: np.ndarray  # (n_el, Q, 3, 2) P1 gradients on the reference mesh

    @property
    def n_points(self) -> int:
        return int(self.weights.shape[0])


def build_quadrature(
    mesh: QuadraticMesh, degree: int = config.QUADRATURE_DEGREE
) -> QuadratureCache:
    points, weights = triangle_quadrature(degree)
    n2, dn2 = p2_basis(points)
    n1, dn1 = p1_basis(points)
    jac = element_jacobians(mesh.points[mesh.elements], dn2)
    det = det2(jac)
    if np.any(det <= 0):
        bad = int(np.argmin(det.min(axis=1)))
        raise NonPositiveJacobian(f"reference Jacobian not positive in element {bad}")
    inv = inv2(jac)
    grad2 = np.einsum("qam,eqmk->eqak", dn2, inv)
    grad1 = np.einsum("qam,eqmk->eqak", dn1, inv)
    return QuadratureCache(points, weights, n2, dn2, n1, dn1, det, grad2, grad1)


@dataclass(frozen=True, eq=False)
class DofMap:
    """One space of the composite unknown.

    Component ``c`` of entity ``k`` (a mesh node for P2, a vertex for P1) has global
    index ``offset + c * n_entities + lookup[k]``.
    """

    kind: str  # "vector_p2", "solid_p1", "fluid_p1" or "solid_tensor_p1"
    offset: int
    entities: np.ndarray  # mesh ids in local order
    lookup: np.ndarray  # mesh id -> local index, -1 outside the space
    components: int

    @property
    def n_entities(self) -> int:
        return int(self.entities.shape[0])

    @property
    def size(self) -> int:
        return self.n_entities * self.components

    def index(self, ids: np.ndarray, component: int = 0) -> np.ndarray:
        local = self.lookup[np.asarray(ids)]
        return self.offset + component * self.n_entities + local

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


def _vertex_map(
    kind: str, offset: int, vertices: np.ndarray, n_vertices: int, comps: int
) -> DofMap:
    lookup = np.full(n_vertices, -1, dtype=np.int64)
    lookup[vertices] = np.arange(vertices.shape[0])
    return DofMap(kind, offset, vertices, lookup, comps)


@dataclass(frozen=True, eq=False)
class ElementGroup:
    """Elements of one subdomain with their composite DOF indices.

    Local order: velocity x on the six nodes, velocity y, the subdomain pressure on
    the three vertices, then (solid only) B components xx, xy, yy on the vertices.
    """

    label: int
    elements: np.ndarray
    cell_dofs: np.ndarray  # (n, 15) fluid or (n, 24) solid

    def __len__(self) -> int:
        return int(self.elements.shape[0])


@dataclass(frozen=True)
class FlowBoundaryConditions:
    """Velocity conditions per boundary tag.

    Tags in ``dirichlet`` get the given velocity, tags in ``natural`` get the
    do-nothing outflow condition, every other tag is a no-slip wall.
    """

    dirichlet: dict[str, VelocityFn] = field(default_factory=dict)
    natural: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class FunctionSpaces:
    """DOF maps, element groups and boundary data of one mesh."""

    mesh: QuadraticMesh
    quadrature: QuadratureCache
    velocity: DofMap
    solid_pressure: DofMap
    fluid_pressure: DofMap
    stress: DofMap
    fluid_group: ElementGroup
    solid_group: ElementGroup
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    dirichlet_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    outflow_facets: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @property
    def size(self) -> int:
        return (
            self.velocity.size
            + self.solid_pressure.size
            + self.fluid_pressure.size
            + self.stress.size
        )

    @property
    def groups(self) -> tuple[ElementGroup, ...]:
        return tuple(g for g in (self.fluid_group, self.solid_group) if len(g))

    @cached_property
    def pattern(self) -> "SparsityPattern":
        return SparsityPattern.build(self)

    @cached_property
    def solid_nodes(self) -> np.ndarray:
        return self.mesh.subdomain_nodes(SOLID)

    def pack(self, state: FsiState) -> np.ndarray:
        n_nodes = self.mesh.n_nodes
        expected = (
            (n_nodes, 2),
            (self.solid_pressure.n_entities,),
            (self.fluid_pressure.n_entities,),
            (self.stress.n_entities, 3),
        )
        got = (state.u.shape, state.ps.shape, state.pf.shape, state.b.shape)
        if got != expected:
            raise DimensionMismatch(f"state shapes {got} do not match spaces {expected}")
        return np.concatenate(
            [state.u[:, 0], state.u[:, 1], state.ps, state.pf, state.b.T.ravel()]
        )

    def unpack(self, x: np.ndarray) -> FsiState:
        if x.shape != (self.size,):
            raise DimensionMismatch(f"vector of length {x.shape} for system size {self.size}")
        n = self.mesh.n_nodes
        u = np.stack([x[:n], x[n : 2 * n]], axis=1)
        ps = x[self.solid_pressure.slice].copy()
        pf = x[self.fluid_pressure.slice].copy()
        b = x[self.stress.slice].reshape(3, self.stress.n_entities).T.copy()
        return FsiState(u, ps, pf, b)

    def zero_state(self) -> FsiState:
        """u = 0, pressures 0 and B = I."""
        b = np.zeros((self.stress.n_entities, 3))
        b[:, 0] = 1.0
        b[:, 2] = 1.0
        return FsiState(
            np.zeros((self.mesh.n_nodes, 2)),
            np.zeros(self.solid_pressure.n_entities),
            np.zeros(self.fluid_pressure.n_entities),
            b,
        )

    def initial_state(self, u0: Optional[VelocityFn] = None) -> FsiState:
        state = self.zero_state()
        if u0 is not None:
            state.u[:] = u0(self.mesh.points)
        return self.impose(state)

    def impose(self, state: FsiState) -> FsiState:
        """Copy of state with Dirichlet values written in."""
        x = self.pack(state)
        x[self.dirichlet_dofs] = self.dirichlet_values
        return self.unpack(x)

    def with_conditions(self, bcs: FlowBoundaryConditions) -> "FunctionSpaces":
        return apply_boundary_conditions(self, bcs)


def build_spaces(mesh: QuadraticMesh, *, with_solid: Optional[bool] = None) -> FunctionSpaces:
    """DOF maps for velocity, both pressures and B.

    with_solid=True demands a solid subdomain; None builds empty solid spaces when
    the mesh has none.
    """
    start_time = time.time()
    if with_solid and not mesh.has_solid:
        raise EmptySubdomain("solid spaces requested on a mesh without solid elements")
    nv, n_nodes = mesh.n_vertices, mesh.n_nodes

    velocity = DofMap(
        "vector_p2", 0, np.arange(n_nodes), np.arange(n_nodes, dtype=np.int64), 2
    )
    solid_v = mesh.subdomain_vertices(SOLID)
    fluid_v = mesh.subdomain_vertices(FLUID)
    offset = velocity.size
    solid_pressure = _vertex_map("solid_p1", offset, solid_v, nv, 1)
    offset += solid_pressure.size
    fluid_pressure = _vertex_map("fluid_p1", offset, fluid_v, nv, 1)
    offset += fluid_pressure.size
    stress = _vertex_map("solid_tensor_p1", offset, solid_v, nv, 3)

    def group(label: int, pressure: DofMap) -> ElementGroup:
        elements = np.flatnonzero(mesh.subdomain == label)
        conn = mesh.elements[elements]
        verts = conn[:, :3]
        blocks = [conn, n_nodes + conn, pressure.index(verts)]
        if label == SOLID:
            blocks += [stress.index(verts, c) for c in range(3)]
        return ElementGroup(label, elements, np.concatenate(blocks, axis=1).astype(np.int64))

    spaces = FunctionSpaces(
        mesh=mesh,
        quadrature=build_quadrature(mesh),
        velocity=velocity,
        solid_pressure=solid_pressure,
        fluid_pressure=fluid_pressure,
        stress=stress,
        fluid_group=group(FLUID, fluid_pressure),
        solid_group=group(SOLID, solid_pressure),
    )
    elapsed_ms = (time.time() - start_time) * 1000
    logger.info(
        f"[FEM] build_spaces(): {spaces.size} dofs "
        f"(u={velocity.size}, Ps={solid_pressure.size}, Pf={fluid_pressure.size}, "
        f"B={stress.size}) elapsed={elapsed_ms:.0f}ms"
    )
    return spaces


def apply_boundary_conditions(
    spaces: FunctionSpaces, bcs: FlowBoundaryConditions
) -> FunctionSpaces:
    """Resolve tag conditions into Dirichlet rows, outflow facets and a pressure pin."""
    mesh = spaces.mesh
    n_nodes = mesh.n_nodes
    values: dict[int, np.ndarray] = {}

    for tag, fn in bcs.dirichlet.items():
        nodes = mesh.boundary_nodes({tag})
        if nodes.size:
            for node, val in zip(nodes, fn(mesh.points[nodes])):
                values[int(node)] = np.asarray(val, dtype=float)
    walls = mesh.tags - set(bcs.dirichlet) - set(bcs.natural)
    for node in mesh.boundary_nodes(walls) if walls else []:
        values[int(node)] = np.zeros(2)

    nodes = np.array(sorted(values), dtype=np.int64)
    vals = np.array([values[int(k)] for k in nodes]).reshape(-1, 2)
    dofs = np.concatenate([nodes, n_nodes + nodes])
    dvals = np.concatenate([vals[:, 0], vals[:, 1]])

    natural = [e for e, t in zip(mesh.boundary_edges, mesh.boundary_tags) if t in bcs.natural]
    facets = _outflow_facets(mesh, np.array(natural, dtype=np.int64))
    if facets.shape[0] == 0 and spaces.fluid_pressure.size:
        # enclosed flow: the joint pressure constant is fixed by one fluid pin
        dofs = np.append(dofs, spaces.fluid_pressure.offset)
        dvals = np.append(dvals, 0.0)
    logger.debug(
        f"[FEM] apply_boundary_conditions(): {nodes.size} dirichlet nodes, "
        f"{facets.shape[0]} outflow facets"
    )
    return replace(spaces, dirichlet_dofs=dofs, dirichlet_values=dvals, outflow_facets=facets)


def _outflow_facets(mesh: QuadraticMesh, edges: np.ndarray) -> np.ndarray:
    """(element, local edge) pairs of boundary edges."""
    rows = []
    for edge in edges:
        elem = int(mesh.edge_elements[edge, 0])
        local = int(np.flatnonzero(mesh.element_edges[elem] == edge)[0])
        rows.append((elem, local))
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Fixed CSR structure of the monolithic Jacobian.

    Entries are produced in the order of ``coo_rows``/``coo_cols`` (element blocks of
    the fluid group, the solid group, outflow facets, then the diagonal) and summed
    into CSR slots with ``np.bincount``, which keeps the reduction order fixed.
    """

    n: int
    coo_rows: np.ndarray
    coo_cols: np.ndarray
    slot: np.ndarray  # COO entry -> CSR data position
    indices: np.ndarray
    indptr: np.ndarray
    diagonal: np.ndarray  # CSR position of (i, i)

    @classmethod
    def build(cls, spaces: FunctionSpaces) -> "SparsityPattern":
        rows, cols = [], []
        for grp in (spaces.fluid_group, spaces.solid_group):
            d = grp.cell_dofs
            rows.append(np.repeat(d, d.shape[1], axis=1).ravel())
            cols.append(np.tile(d, (1, d.shape[1])).ravel())
        if spaces.outflow_facets.shape[0]:
            conn = spaces.mesh.elements[spaces.outflow_facets[:, 0]]
            d = np.concatenate([conn, spaces.mesh.n_nodes + conn], axis=1)
            rows.append(np.repeat(d, 12, axis=1).ravel())
            cols.append(np.tile(d, (1, 12)).ravel())
        n = spaces.size
        diag = np.arange(n, dtype=np.int64)
        coo_rows = np.concatenate([*rows, diag])
        coo_cols = np.concatenate([*cols, diag])
        keys = coo_rows * n + coo_cols
        unique, slot = np.unique(keys, return_inverse=True)
        row_of = unique // n
        indices = (unique % n).astype(np.int64)
        indptr = np.searchsorted(row_of, np.arange(n + 1)).astype(np.int64)
        diagonal = np.searchsorted(unique, diag * n + diag)
        return cls(n, coo_rows, coo_cols, slot, indices, indptr, diagonal)

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def matrix(self, values: np.ndarray, identity_rows: np.ndarray) -> sparse.csr_matrix:
        """CSR matrix from COO values; identity_rows become unit rows."""
        data = np.bincount(self.slot, weights=values, minlength=self.nnz)
        if identity_rows.size:
            counts = np.diff(self.indptr)
            row_ids = np.repeat(np.arange(self.n), counts)
            data[np.isin(row_ids, identity_rows)] = 0.0
            data[self.diagonal[identity_rows]] = 1.0
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def interpolate_p2(values: np.ndarray, conn: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Evaluate nodal P2 fields at reference points.

    values: (n_nodes, ...) nodal data; conn: (m, 6) element rows; xi: (m, 2).
    """
    n, _ = p2_basis(xi)
    return np.einsum("ma,ma...->m...", n, values[conn])


def interpolate_p1(values: np.ndarray, verts: np.ndarray, xi: np.ndarray) -> np.ndarray:
    n, _ = p1_basis(xi)
    return np.einsum("ma,ma...->m...", n, values[verts])
