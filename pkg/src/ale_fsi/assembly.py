"""Monolithic ALE residual and Jacobian, and the harmonic mesh-velocity extension.

All integrals are taken on the reference mesh and pulled back with the discrete
ALE map, which is the same as integrating on the deformed quadratic mesh.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from ale_fsi import config
from ale_fsi.ale import AleMap
from ale_fsi.errors import DimensionMismatch, NonPositiveJacobian, SingularPivot, SingularSystem
from ale_fsi.fem import (
    SYM_BASIS,
    SYM_INDEX,
    ElementGroup,
    FunctionSpaces,
    line_quadrature,
    p2_basis,
)
from ale_fsi.models import SOLID, FsiState, PhysicalParams
from ale_fsi.solver import factorize

logger = logging.getLogger(__name__)

VISCOUS_FORMS = ("discrete", "reference")

# Reference start point and direction of each local edge
_EDGE_START = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_EDGE_DIR = np.array([[1.0, 0.0], [-1.0, 1.0], [0.0, -1.0]])


@dataclass(frozen=True)
class AssemblyOptions:
    """Kernel variants and execution settings."""

    viscous_form: str = "discrete"  # "discrete": 2 D(u); "reference": pulled back with F^-T F^-1
    threads: int = config.THREADS
    chunk: int = config.ASSEMBLY_CHUNK
    include_fluid: bool = True
    include_solid: bool = True

    def __post_init__(self) -> None:
        if self.viscous_form not in VISCOUS_FORMS:
            raise ValueError(
                f"viscous_form must be one of {VISCOUS_FORMS}, got {self.viscous_form!r}"
            )
        if self.chunk < 1:
            raise ValueError("chunk must be positive")


@dataclass(frozen=True)
class _Inputs:
    spaces: FunctionSpaces
    x: np.ndarray
    x_prev: np.ndarray
    w: np.ndarray
    ale: AleMap
    inv_dt: float
    params: PhysicalParams
    options: AssemblyOptions
    jacobian: bool


def _sym_components(m: np.ndarray) -> np.ndarray:
    """(..., 2, 2) -> (..., 3) in SYM_INDEX order."""
    return np.stack([m[..., i, j] for i, j in SYM_INDEX], axis=-1)


def _kernel(
    inp: _Inputs, group: ElementGroup, sel: np.ndarray
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Local residuals (m, nloc) and Jacobians (m, nloc, nloc) of some group elements."""
    q = inp.spaces.quadrature
    els = group.elements[sel]
    cd = group.cell_dofs[sel]
    m = els.shape[0]
    solid = group.label == SOLID
    nloc = cd.shape[1]

    f_inv = inp.ale.F_inv[els]
    jac = inp.ale.J[els]
    dv = q.weights[None, :] * q.det_j[els] * jac  # (m, Q)
    g = np.einsum("eqam,eqmk->eqak", q.grad2[els], f_inv)  # physical P2 gradients

    loc = inp.x[cd]
    u_loc = loc[:, :12].reshape(m, 2, 6).transpose(0, 2, 1)
    h_loc = inp.x_prev[cd][:, :12].reshape(m, 2, 6).transpose(0, 2, 1)
    p_loc = loc[:, 12:15]
    w_loc = inp.w[inp.spaces.mesh.elements[els]]

    n2, n1 = q.n2, q.n1
    uq = np.einsum("qa,eai->eqi", n2, u_loc)
    hq = np.einsum("qa,eai->eqi", n2, h_loc)
    conv = uq - np.einsum("qa,eai->eqi", n2, w_loc)
    grad_u = np.einsum("eai,eqak->eqik", u_loc, g)  # L_ik = du_i/dx_k
    pq = np.einsum("qr,er->eq", n1, p_loc)

    adv = np.einsum("eqck,eqk->eqc", grad_u, conv)
    rm = np.einsum("eq,qb,eqc->ebc", dv, n2, inp.inv_dt * (uq - hq) + adv)
    rm -= np.einsum("eq,eqbc->ebc", dv * pq, g)
    rp = -np.einsum("eq,qr->er", dv * np.trace(grad_u, axis1=2, axis2=3), n1)

    re = inp.params.re
    visc_k = None
    if solid:
        b_loc = loc[:, 15:24].reshape(m, 3, 3)  # (component, vertex)
        bh_loc = inp.x_prev[cd][:, 15:24].reshape(m, 3, 3)
        bq = np.einsum("qr,esr->eqs", n1, b_loc)
        bhq = np.einsum("qr,esr->eqs", n1, bh_loc)
        b_full = np.einsum("eqs,sij->eqij", bq, SYM_BASIS)
        elastic = b_full - np.eye(2)
        rm += (inp.params.e / re) * np.einsum("eq,eqck,eqbk->ebc", dv, elastic, g)

        gphi = np.einsum("eqam,eqmk->eqak", q.grad1[els], f_inv)
        grad_b = np.einsum("esr,eqrk->eqsk", b_loc, gphi)
        lb = np.einsum("eqik,eqkj->eqij", grad_u, b_full)
        upper = _sym_components(lb + np.swapaxes(lb, 2, 3))
        transport = inp.inv_dt * (bq - bhq) + np.einsum("eqsk,eqk->eqs", grad_b, conv) - upper
        rb = np.einsum("eq,qr,eqs->esr", dv, n1, transport)
        local_r = np.concatenate(
            [rm.transpose(0, 2, 1).reshape(m, 12), rp, rb.reshape(m, 9)], axis=1
        )
    else:
        sym = 0.5 * (grad_u + np.swapaxes(grad_u, 2, 3))
        if inp.options.viscous_form == "reference":
            visc_k = np.einsum("eqmi,eqmj->eqij", f_inv, f_inv)
            stress = sym @ visc_k + visc_k @ sym
        else:
            stress = 2.0 * sym
        rm += (1.0 / re) * np.einsum("eq,eqck,eqbk->ebc", dv, stress, g)
        local_r = np.concatenate([rm.transpose(0, 2, 1).reshape(m, 12), rp], axis=1)

    if not inp.jacobian:
        return local_r, None

    k = np.zeros((m, nloc, nloc))

    # velocity-velocity
    diag = np.einsum("eq,qb,qa->eba", dv * inp.inv_dt, n2, n2)
    diag += np.einsum("eq,qb,eqak,eqk->eba", dv, n2, g, conv)
    kuu = np.einsum("eq,qb,eqcd,qa->ebcad", dv, n2, grad_u, n2)
    if not solid:
        if visc_k is None:
            diag += (1.0 / re) * np.einsum("eq,eqak,eqbk->eba", dv, g, g)
            kuu += (1.0 / re) * np.einsum("eq,eqac,eqbd->ebcad", dv, g, g)
        else:
            kg = np.einsum("eqij,eqbj->eqbi", visc_k, g)
            diag += (0.5 / re) * np.einsum("eq,eqak,eqbk->eba", dv, g, kg)
            kuu += (0.5 / re) * (
                np.einsum("eq,eqac,eqbd->ebcad", dv, g, kg)
                + np.einsum("eq,eqcd,eqak,eqbk->ebcad", dv, visc_k, g, g)
                + np.einsum("eq,eqac,eqbd->ebcad", dv, kg, g)
            )
    for c in range(2):
        kuu[:, :, c, :, c] += diag
    k[:, :12, :12] = kuu.transpose(0, 2, 1, 4, 3).reshape(m, 12, 12)

    # velocity-pressure couplings
    kup = -np.einsum("eq,qr,eqbc->ecbr", dv, n1, g)
    k[:, :12, 12:15] = kup.reshape(m, 12, 3)
    k[:, 12:15, :12] = np.swapaxes(k[:, :12, 12:15], 1, 2)

    if solid:
        kub = (inp.params.e / re) * np.einsum("eq,qr,sck,eqbk->ecbsr", dv, n1, SYM_BASIS, g)
        k[:, :12, 15:] = kub.reshape(m, 12, 9)

        bg = np.einsum("eqij,eqaj->eqai", b_full, g)
        stretch = np.zeros(bg.shape[:2] + (3, 6, 2))
        for s, (i0, i1) in enumerate(SYM_INDEX):
            stretch[:, :, s, :, i0] += bg[..., i1]
            stretch[:, :, s, :, i1] += bg[..., i0]
        kbu = np.einsum("eq,qp,eqsd,qa->espda", dv, n1, grad_b, n2)
        kbu -= np.einsum("eq,qp,eqsad->espda", dv, n1, stretch)
        k[:, 15:, :12] = kbu.reshape(m, 9, 12)

        mass = np.einsum("eq,qp,qr->epr", dv * inp.inv_dt, n1, n1)
        mass += np.einsum("eq,qp,eqrk,eqk->epr", dv, n1, gphi, conv)
        ls = np.einsum("eqik,tkj->eqtij", grad_u, SYM_BASIS)
        coupling = _sym_components(ls + np.swapaxes(ls, 3, 4))  # (e, q, t, s)
        kbb = -np.einsum("eq,qp,qr,eqts->esptr", dv, n1, n1, coupling)
        for s in range(3):
            kbb[:, s, :, s, :] += mass
        k[:, 15:, 15:] = kbb.reshape(m, 9, 9)

    return local_r, k


def _run_group(inp: _Inputs, group: ElementGroup) -> tuple[np.ndarray, Optional[np.ndarray]]:
    n = len(group)
    nloc = group.cell_dofs.shape[1]
    if n == 0:
        return np.zeros((0, nloc)), np.zeros((0, nloc, nloc)) if inp.jacobian else None
    chunks = [np.arange(i, min(i + inp.options.chunk, n)) for i in range(0, n, inp.options.chunk)]
    if inp.options.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=inp.options.threads) as pool:
            parts = list(pool.map(lambda sel: _kernel(inp, group, sel), chunks))
    else:
        parts = [_kernel(inp, group, sel) for sel in chunks]
    local_r = np.concatenate([p[0] for p in parts])
    if not inp.jacobian:
        return local_r, None
    return local_r, np.concatenate([p[1] for p in parts])  # type: ignore[misc]


def _outflow_terms(inp: _Inputs) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Do-nothing correction -(1/Re) (grad u)^T n on natural boundary facets."""
    spaces = inp.spaces
    facets = spaces.outflow_facets
    nf = facets.shape[0]
    s, ws = line_quadrature()
    ns = s.shape[0]
    if nf == 0:
        return np.zeros((0, 12)), np.zeros((0, 12, 12)) if inp.jacobian else None
    local_edge = facets[:, 1]
    xi = _EDGE_START[local_edge][:, None, :] + s[None, :, None] * _EDGE_DIR[local_edge][:, None, :]
    n2, dn2 = p2_basis(xi.reshape(-1, 2))
    n2 = n2.reshape(nf, ns, 6)
    dn2 = dn2.reshape(nf, ns, 6, 2)

    conn = spaces.mesh.elements[facets[:, 0]]
    coords = (spaces.mesh.points + inp.ale.displacement)[conn]
    jx = np.einsum("fai,fsam->fsim", coords, dn2)
    tangent = np.einsum("fsim,fm->fsi", jx, _EDGE_DIR[local_edge])
    length = np.linalg.norm(tangent, axis=2)
    normal = np.stack([tangent[..., 1], -tangent[..., 0]], axis=2) / length[..., None]
    g = np.einsum("fsam,fsmk->fsak", dn2, np.linalg.inv(jx))

    u_loc = inp.x[np.concatenate([conn, spaces.mesh.n_nodes + conn], axis=1)]
    u_loc = u_loc.reshape(nf, 2, 6).transpose(0, 2, 1)
    grad_u = np.einsum("fai,fsak->fsik", u_loc, g)
    wl = ws[None, :] * length / inp.params.re
    rf = -np.einsum("fs,fsjc,fsj,fsb->fbc", wl, grad_u, normal, n2)
    local_r = rf.transpose(0, 2, 1).reshape(nf, 12)
    if not inp.jacobian:
        return local_r, None
    kf = -np.einsum("fs,fsac,fsd,fsb->fcbda", wl, g, normal, n2)
    return local_r, kf.reshape(nf, 12, 12)


def _assemble(
    state: FsiState,
    state_prev: Optional[FsiState],
    ale: AleMap,
    w: np.ndarray,
    dt_eff: float,
    params: PhysicalParams,
    options: AssemblyOptions,
    jacobian: bool,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    spaces = ale.spaces
    x = spaces.pack(state)
    x_prev = spaces.pack(state_prev) if state_prev is not None else x
    if w.shape != (spaces.mesh.n_nodes, 2):
        raise DimensionMismatch(
            f"mesh velocity shape {w.shape}, expected ({spaces.mesh.n_nodes}, 2)"
        )
    if np.any(ale.J <= 0):
        raise NonPositiveJacobian(f"ALE Jacobian minimum {float(ale.J.min()):.3e}")
    inv_dt = 0.0 if state_prev is None or not math.isfinite(dt_eff) else 1.0 / dt_eff
    inp = _Inputs(spaces, x, x_prev, w, ale, inv_dt, params, options, jacobian)

    n = spaces.size
    r = np.zeros(n)
    values = []
    groups = (
        (spaces.fluid_group, options.include_fluid),
        (spaces.solid_group, options.include_solid),
    )
    for group, included in groups:
        local_r, local_k = _run_group(inp, group)
        if not included:
            local_r = np.zeros_like(local_r)
            local_k = np.zeros_like(local_k) if local_k is not None else None
        r += np.bincount(group.cell_dofs.ravel(), weights=local_r.ravel(), minlength=n)
        if local_k is not None:
            values.append(local_k.ravel())

    if spaces.outflow_facets.shape[0]:
        local_r, local_k = _outflow_terms(inp)
        conn = spaces.mesh.elements[spaces.outflow_facets[:, 0]]
        dofs = np.concatenate([conn, spaces.mesh.n_nodes + conn], axis=1)
        if options.include_fluid:
            r += np.bincount(dofs.ravel(), weights=local_r.ravel(), minlength=n)
        if local_k is not None:
            values.append(local_k.ravel() if options.include_fluid else np.zeros(local_k.size))

    d = spaces.dirichlet_dofs
    r[d] = x[d] - spaces.dirichlet_values
    if not jacobian:
        return r, None
    values.append(np.zeros(n))
    return r, np.concatenate(values)


def assemble_residual(
    state: FsiState,
    state_prev: Optional[FsiState],
    ale: AleMap,
    w: np.ndarray,
    dt_eff: float,
    params: PhysicalParams,
    *,
    options: AssemblyOptions = AssemblyOptions(),
) -> np.ndarray:
    """Monolithic residual R(X) of one backward-Euler type stage.

    state_prev=None or dt_eff=inf drops the time derivatives (steady problem).
    Dirichlet rows hold x - g.

    Raises:
        DimensionMismatch: state, w or spaces disagree.
        NonPositiveJacobian: the ALE map is degenerate.
    """
    r, _ = _assemble(state, state_prev, ale, w, dt_eff, params, options, jacobian=False)
    return r


def assemble_jacobian(
    state: FsiState,
    state_prev: Optional[FsiState],
    ale: AleMap,
    w: np.ndarray,
    dt_eff: float,
    params: PhysicalParams,
    *,
    options: AssemblyOptions = AssemblyOptions(),
) -> sparse.csr_matrix:
    """Exact derivative of assemble_residual with respect to X, mesh velocity frozen."""
    _, values = _assemble(state, state_prev, ale, w, dt_eff, params, options, jacobian=True)
    return ale.spaces.pattern.matrix(values, ale.spaces.dirichlet_dofs)


def assemble_harmonic(spaces: FunctionSpaces) -> sparse.csr_matrix:
    """Scalar P2 stiffness matrix on the reference mesh.

    Both velocity components share it, so the vector Laplacian is never formed.
    """
    q = spaces.quadrature
    dv = q.weights[None, :] * q.det_j
    local = np.einsum("eq,eqak,eqbk->eab", dv, q.grad2, q.grad2)
    conn = spaces.mesh.elements
    rows = np.repeat(conn, 6, axis=1).ravel()
    cols = np.tile(conn, (1, 6)).ravel()
    n = spaces.mesh.n_nodes
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


class HarmonicExtension:
    """Mesh velocity from the solid velocity trace.

    w equals u on solid nodes, vanishes on the outer boundary and is discrete
    harmonic in between. The factorization depends only on the reference mesh
    and is reused until the next remesh.
    """

    def __init__(self, spaces: FunctionSpaces):
        mesh = spaces.mesh
        self.spaces = spaces
        self.solid_nodes = spaces.solid_nodes
        self.boundary_nodes = mesh.boundary_nodes()
        fixed = np.zeros(mesh.n_nodes, dtype=bool)
        fixed[self.solid_nodes] = True
        fixed[self.boundary_nodes] = True
        self.free = np.flatnonzero(~fixed)
        a = assemble_harmonic(spaces)
        self._a_fs = a[self.free][:, self.solid_nodes]
        self._lu = None
        if self.free.size:
            try:
                self._lu = factorize(a[self.free][:, self.free])
            except SingularPivot as e:
                raise SingularSystem(f"harmonic extension matrix is singular: {e}") from e
        logger.debug(
            f"[ALE] HarmonicExtension(): free={self.free.size} solid={self.solid_nodes.size} "
            f"boundary={self.boundary_nodes.size}"
        )

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if u.shape != (self.spaces.mesh.n_nodes, 2):
            raise DimensionMismatch(f"velocity shape {u.shape}")
        w = np.zeros_like(u, dtype=float)
        if self.solid_nodes.size == 0:
            return w
        w[self.solid_nodes] = u[self.solid_nodes]
        # solid wins where it touches the outer boundary
        if self._lu is not None:
            rhs = -(self._a_fs @ u[self.solid_nodes])
            w[self.free] = self._lu.solve(np.ascontiguousarray(rhs))
        return w


def solve_harmonic_extension(
    u: np.ndarray, spaces: FunctionSpaces, extension: Optional[HarmonicExtension] = None
) -> np.ndarray:
    """Extend the solid velocity of u harmonically into the fluid."""
    if extension is not None and extension.spaces is spaces:
        ext = extension
    else:
        ext = HarmonicExtension(spaces)
    return ext(u)
