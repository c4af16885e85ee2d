"""Local updating: steady background flow, body-fitted local meshes, remeshing and transfer."""

import hashlib
import json
import logging
import math
import sqlite3
import time
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from ale_fsi import config
from ale_fsi.ale import AleMap, deformed_coordinates, identity_map
from ale_fsi.assembly import AssemblyOptions
from ale_fsi.db import get_cached_background, save_background
from ale_fsi.errors import (
    BackgroundNotConverged,
    GeometryInvalid,
    ParticleTooCloseToBoundary,
    TransferFailure,
)
from ale_fsi.fem import (
    FlowBoundaryConditions,
    FunctionSpaces,
    build_spaces,
    interpolate_p1,
    interpolate_p2,
)
from ale_fsi.geometry import LOCAL_TAG, Disk, GeometryModel, SizeField, clip_to_box
from ale_fsi.mesh import generate_mesh, inverse_map, locate_point, mesh_quality
from ale_fsi.models import (
    SOLID,
    BackgroundFlow,
    FsiState,
    LocalDomainSpec,
    MeshQualityReport,
    NewtonConfig,
    PhysicalParams,
    QuadraticMesh,
    RemeshEvent,
    RemeshThresholds,
    TimeLoopConfig,
    TrajectoryRecord,
)
from ale_fsi.problem import FsiProblem, shift_pressure, solid_centroid
from ale_fsi.schemes import TimeScheme
from ale_fsi.timeloop import LoopState, StepEvent, StepHook, TimeLoopResult, run_time_loop

logger = logging.getLogger(__name__)

_CLIP_RETRIES = 5


def solve_background_steady(
    geometry: GeometryModel,
    bcs: FlowBoundaryConditions,
    params: PhysicalParams,
    *,
    curved: bool = True,
    pseudo_dt: float = config.BACKGROUND_PSEUDO_DT,
    max_steps: int = config.BACKGROUND_MAX_STEPS,
    steady_tol: float = config.BACKGROUND_STEADY_TOL,
    newton: Optional[NewtonConfig] = None,
) -> BackgroundFlow:
    """Steady channel flow by pseudo-time stepping, polished by one steady Newton solve.

    Raises:
        BackgroundNotConverged: the relative change of u stays above steady_tol.
    """
    start_time = time.time()
    if geometry.particles:
        logger.warning("[BG] solve_background_steady(): particles ignored for the background flow")
        geometry = geometry.with_particles(())
    mesh = generate_mesh(geometry, curved=curved)
    spaces = build_spaces(mesh).with_conditions(bcs)
    problem = FsiProblem(spaces, params, newton or NewtonConfig())
    ale = identity_map(spaces)
    w = np.zeros((mesh.n_nodes, 2))
    state = spaces.initial_state()

    history: list[float] = []
    for k in range(1, max_steps + 1):
        new, _ = problem.solve_stage(state, state, ale, w, pseudo_dt, context=f"background k={k}")
        scale = max(float(np.linalg.norm(new.u)), 1e-300)
        change = float(np.linalg.norm(new.u - state.u)) / scale
        history.append(change)
        state = new
        logger.debug(f"[BG] pseudo step k={k} change={change:.3e}")
        if change < steady_tol:
            break
    else:
        raise BackgroundNotConverged(
            f"background change {history[-1]:.3e} after {max_steps} pseudo steps", history
        )

    state, _ = problem.solve_stage(state, None, ale, w, math.inf, context="background steady")
    state = shift_pressure(state, ale)
    bg = BackgroundFlow(mesh=mesh, u=state.u, p=state.pf, residual_history=tuple(history))
    elapsed_ms = (time.time() - start_time) * 1000
    logger.info(
        f"[BG] solve_background_steady(): {len(history)} pseudo steps, "
        f"max_speed={bg.max_speed:.4f} elapsed={elapsed_ms:.0f}ms"
    )
    return bg


def background_cache_key(payload: dict[str, Any]) -> str:
    """Stable hash of the parameters a background flow depends on."""
    text = json.dumps(payload, sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()[:32]


def load_or_solve_background(
    conn: Optional[sqlite3.Connection],
    key: str,
    geometry: GeometryModel,
    bcs: FlowBoundaryConditions,
    params: PhysicalParams,
    *,
    curved: bool = True,
) -> BackgroundFlow:
    if conn is not None:
        cached = get_cached_background(conn, key)
        if cached is not None:
            logger.info(f"[BG] using cached background flow key={key}")
            return cached
    bg = solve_background_steady(geometry, bcs, params, curved=curved)
    if conn is not None:
        save_background(conn, key, bg)
    return bg


def evaluate_background(bg: BackgroundFlow, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Background velocity at points, and a mask of the points found in its mesh.

    Points outside the background mesh get the value of the nearest node.
    """
    points = np.atleast_2d(points)
    values = np.empty((points.shape[0], 2))
    found = np.zeros(points.shape[0], dtype=bool)
    hint: Optional[int] = None
    conn = bg.mesh.elements
    for i, x in enumerate(points):
        loc = locate_point(bg.mesh, x, hint=hint)
        if loc is None:
            _, vertex = bg.mesh.vertex_tree.query(x)
            values[i] = bg.u[int(vertex)]
            continue
        hint = loc.element
        found[i] = True
        values[i] = interpolate_p2(bg.u, conn[[loc.element]], loc.xi[None, :])[0]
    return values, found


@dataclass
class LocalProblem:
    """FSI problem on one local mesh around the particle."""

    geometry: GeometryModel
    particle: Disk
    problem: FsiProblem
    state: FsiState
    ale: AleMap
    w: np.ndarray
    boundary_nodes: np.ndarray  # nodes carrying u_gamma
    u_gamma: np.ndarray  # (n, 2)

    @property
    def mesh(self) -> QuadraticMesh:
        return self.problem.spaces.mesh

    @property
    def spaces(self) -> FunctionSpaces:
        return self.problem.spaces

    def loop_state(self) -> LoopState:
        return LoopState(self.problem, self.state, self.ale, self.w)


def _local_geometry(
    channel: GeometryModel, particle: Disk, spec: LocalDomainSpec, margin: float
) -> GeometryModel:
    cx, cy = particle.center
    half = spec.half_width
    for attempt in range(_CLIP_RETRIES):
        try:
            clipped = clip_to_box(channel, (cx - half, cy - half), (cx + half, cy + half), (cx, cy))
            break
        except GeometryInvalid as e:
            if attempt == _CLIP_RETRIES - 1:
                raise
            logger.debug(f"[LOCAL] clip_to_box() failed ({e}), enlarging box")
            half *= 1.01

    center = np.array(particle.center, dtype=float)
    for loop in clipped.loops:
        for curve in loop:
            gap = curve.distance(center) - particle.radius
            needed = margin if curve.tag == LOCAL_TAG else 0.0
            if gap <= needed:
                raise ParticleTooCloseToBoundary(
                    f"particle at ({cx:.4f}, {cy:.4f}) is {gap:.4f} from {curve.tag!r} boundary"
                )
    size = SizeField(
        spec.far_size, ((cx, cy, spec.near_radius_factor * particle.radius, spec.near_size),)
    )
    return GeometryModel(clipped.outer_boundary, clipped.holes, (particle,), size)


def build_local_problem(
    bg: BackgroundFlow,
    channel: GeometryModel,
    channel_bcs: FlowBoundaryConditions,
    particle: Disk,
    spec: LocalDomainSpec,
    params: PhysicalParams,
    *,
    margin: float = 0.0,
    curved: bool = True,
    particle_velocity: tuple[float, float] = (0.0, 0.0),
    newton: Optional[NewtonConfig] = None,
    options: Optional[AssemblyOptions] = None,
) -> LocalProblem:
    """Mesh the box around the particle and initialize it from the background flow.

    Box sides carry u_gamma interpolated from the background; channel boundary
    pieces inside the box keep their channel conditions.

    Raises:
        ParticleTooCloseToBoundary: the box cannot keep margin between particle and its sides.
    """
    geometry = _local_geometry(channel, particle, spec, margin)
    mesh = generate_mesh(geometry, curved=curved)

    boundary = mesh.boundary_nodes({LOCAL_TAG}) if LOCAL_TAG in mesh.tags else np.zeros(0, np.int64)
    u_gamma, _ = evaluate_background(bg, mesh.points[boundary])

    def boundary_velocity(points: np.ndarray) -> np.ndarray:
        return evaluate_background(bg, points)[0]

    dirichlet = dict(channel_bcs.dirichlet)
    dirichlet[LOCAL_TAG] = boundary_velocity
    bcs = FlowBoundaryConditions(dirichlet, channel_bcs.natural)
    spaces = build_spaces(mesh, with_solid=True).with_conditions(bcs)
    problem = FsiProblem(spaces, params, newton or NewtonConfig(), options or AssemblyOptions())

    u0, _ = evaluate_background(bg, mesh.points)
    u0[spaces.solid_nodes] = particle_velocity
    state = spaces.zero_state()
    state.u[:] = u0
    state = spaces.impose(state)
    ale = identity_map(spaces)
    w = problem.mesh_velocity(state.u)
    logger.info(
        f"[LOCAL] build_local_problem(): "
        f"center=({particle.center[0]:.4f}, {particle.center[1]:.4f}) "
        f"elements={mesh.n_elements} dofs={spaces.size} gamma_nodes={boundary.size}"
    )
    return LocalProblem(geometry, particle, problem, state, ale, w, boundary, u_gamma)


def remesh_reason(
    displacement: float, quality: MeshQualityReport, thr: RemeshThresholds
) -> Optional[str]:
    if displacement > thr.max_displacement:
        return "displacement"
    if quality.min_detj_ratio < thr.min_detj_ratio or quality.min_angle < thr.min_angle:
        return "quality"
    return None


def check_remesh_trigger(
    displacement: float, quality: MeshQualityReport, thr: RemeshThresholds
) -> bool:
    """True iff the particle moved too far or the deformed mesh degraded."""
    return remesh_reason(displacement, quality, thr) is not None


def _solid_b_transfer(
    old_mesh: QuadraticMesh, b_vertex: np.ndarray, x: np.ndarray, elem: int
) -> np.ndarray:
    """B at x from the old solid.

    Points inside old fluid elements extrapolate from the nearest solid element.
    """
    if old_mesh.subdomain[elem] != SOLID:
        solid = np.flatnonzero(old_mesh.subdomain == SOLID)
        centroids = old_mesh.points[old_mesh.elements[solid, :3]].mean(axis=1)
        elem = int(solid[np.argmin(np.linalg.norm(centroids - x, axis=1))])
    xi, _ = inverse_map(old_mesh.points[old_mesh.elements[elem]], x)
    return interpolate_p1(b_vertex, old_mesh.elements[[elem], :3], xi[None, :])[0]


def transfer_fields(
    old: LocalProblem,
    state: FsiState,
    ale: AleMap,
    w: np.ndarray,
    new: LocalProblem,
    bg: BackgroundFlow,
) -> tuple[FsiState, np.ndarray]:
    """Move u, w and B from the old deformed mesh onto the new reference mesh.

    Raises:
        TransferFailure: a new solid node lies outside the old mesh.
    """
    old_mesh = old.mesh.moved(deformed_coordinates(ale))
    new_mesh = new.mesh
    new_spaces = new.spaces
    out = new_spaces.zero_state()
    w_new = np.zeros((new_mesh.n_nodes, 2))
    solid_nodes = set(new_spaces.solid_nodes.tolist())
    b_vertex = np.zeros((old_mesh.n_vertices, 3))
    b_vertex[old.spaces.stress.entities] = state.b
    b_fill: dict[int, np.ndarray] = {}
    missing: list[int] = []
    hint: Optional[int] = None

    for node in range(new_mesh.n_nodes):
        x = new_mesh.points[node]
        loc = locate_point(old_mesh, x, hint=hint)
        if loc is None:
            if node in solid_nodes:
                raise TransferFailure(f"solid node {node} at {x} is outside the old mesh")
            missing.append(node)
            continue
        hint = loc.element
        row = old_mesh.elements[[loc.element]]
        out.u[node] = interpolate_p2(state.u, row, loc.xi[None, :])[0]
        w_new[node] = interpolate_p2(w, row, loc.xi[None, :])[0]
        if node < new_mesh.n_vertices and node in solid_nodes:
            b_fill[node] = _solid_b_transfer(old_mesh, b_vertex, x, loc.element)

    if missing:
        ids = np.array(missing)
        out.u[ids], _ = evaluate_background(bg, new_mesh.points[ids])
    for vertex, b in b_fill.items():
        out.b[new_spaces.stress.lookup[vertex]] = b

    # mesh velocity vanishes on the new outer boundary, u takes u_gamma there
    outer = np.setdiff1d(new_mesh.boundary_nodes(), new_spaces.solid_nodes)
    w_new[outer] = 0.0
    out = new_spaces.impose(out)
    logger.debug(
        f"[LOCAL] transfer_fields(): nodes={new_mesh.n_nodes} from_background={len(missing)}"
    )
    return out, w_new


def remesh_and_transfer(
    old: LocalProblem,
    loop: LoopState,
    bg: BackgroundFlow,
    channel: GeometryModel,
    channel_bcs: FlowBoundaryConditions,
    spec: LocalDomainSpec,
    *,
    margin: float = 0.0,
    curved: bool = True,
) -> LocalProblem:
    """New local mesh around the current particle position with transferred fields.

    The new reference configuration is the current deformed one, so the ALE map
    restarts at the identity.
    """
    cx, cy = solid_centroid(loop.ale)
    particle = old.particle.moved_to((float(cx), float(cy)))
    fresh = build_local_problem(
        bg,
        channel,
        channel_bcs,
        particle,
        spec,
        old.problem.params,
        margin=margin,
        curved=curved,
        newton=old.problem.newton,
        options=old.problem.options,
    )
    state, w = transfer_fields(old, loop.state, loop.ale, loop.w, fresh, bg)
    fresh.state = state
    fresh.w = w
    fresh.ale = identity_map(fresh.spaces)
    return fresh


@dataclass
class LocalUpdateResult:
    """Trajectory and remesh log of a local-update run."""

    trajectory: TrajectoryRecord
    events: list[RemeshEvent] = field(default_factory=list)
    loop_result: Optional[TimeLoopResult] = None
    background: Optional[BackgroundFlow] = None
    min_quality: Optional[MeshQualityReport] = None

    @property
    def failed(self) -> bool:
        return self.loop_result is not None and self.loop_result.failed


def run_local_update(
    channel: GeometryModel,
    channel_bcs: FlowBoundaryConditions,
    particle: Disk,
    params: PhysicalParams,
    cfg: TimeLoopConfig,
    spec: LocalDomainSpec,
    *,
    thresholds: Optional[RemeshThresholds] = None,
    background: Optional[BackgroundFlow] = None,
    curved: bool = True,
    newton: Optional[NewtonConfig] = None,
    options: Optional[AssemblyOptions] = None,
    scheme: Optional[TimeScheme] = None,
    hooks: Sequence[StepHook] = (),
) -> LocalUpdateResult:
    """Background flow, then FSI steps on local meshes that follow the particle."""
    start_time = time.time()
    thr = thresholds or RemeshThresholds.for_radius(particle.radius)
    bg = background or solve_background_steady(
        channel, channel_bcs, params, curved=curved, newton=newton
    )
    local = build_local_problem(
        bg,
        channel,
        channel_bcs,
        particle,
        spec,
        params,
        margin=thr.max_displacement,
        curved=curved,
        newton=newton,
        options=options,
    )
    result = LocalUpdateResult(trajectory=TrajectoryRecord(), background=bg)
    anchor = np.array(particle.center, dtype=float)
    worst: list[MeshQualityReport] = []

    def remesh_hook(event: StepEvent) -> Optional[LoopState]:
        nonlocal local, anchor
        centroid = solid_centroid(event.loop.ale)
        displacement = float(np.linalg.norm(centroid - anchor))
        quality = mesh_quality(local.mesh.moved(event.deformed))
        worst.append(quality)
        reason = remesh_reason(displacement, quality, thr)
        if reason is None:
            return None
        local = remesh_and_transfer(
            local,
            event.loop,
            bg,
            channel,
            channel_bcs,
            spec,
            margin=thr.max_displacement,
            curved=curved,
        )
        anchor = np.array(local.particle.center, dtype=float)
        result.events.append(
            RemeshEvent(event.step, event.time, float(centroid[0]), float(centroid[1]), reason)
        )
        logger.info(
            f"[LOCAL] remesh step={event.step} t={event.time:.6g} reason={reason} "
            f"center=({centroid[0]:.4f}, {centroid[1]:.4f})"
        )
        return local.loop_state()

    loop_result = run_time_loop(
        local.problem,
        local.state,
        cfg,
        ale=local.ale,
        w0=local.w,
        hooks=[remesh_hook, *hooks],
        scheme=scheme,
    )
    result.trajectory = loop_result.trajectory
    result.loop_result = loop_result
    if worst:
        result.min_quality = min(worst, key=lambda q: q.min_detj_ratio)
    elapsed_ms = (time.time() - start_time) * 1000
    logger.info(
        f"[LOCAL] run_local_update(): steps={loop_result.steps_done} remeshes={len(result.events)} "
        f"failed={loop_result.failed} elapsed={elapsed_ms:.0f}ms"
    )
    return result
