"""Quadratic mesh generation, curve snapping, quality and point location."""

import logging
import math
import time
from pathlib import Path
from typing import Optional

import numpy as np
import triangle

from ale_fsi import config
from ale_fsi.errors import GeometryInvalid, InvertedElement, RefinementStall
from ale_fsi.fem import det2, element_jacobians, p2_basis, triangle_quadrature
from ale_fsi.geometry import (
    CircularArc,
    Curve,
    GeometryModel,
    loop_polygon,
    points_in_polygon,
    validate_geometry,
)
from ale_fsi.models import (
    FLUID,
    LOCAL_EDGES,
    SOLID,
    MeshQualityReport,
    PointLocation,
    QuadraticMesh,
)

logger = logging.getLogger(__name__)

MESH_FORMAT_HEADER = "# ale-fsi quadratic mesh v1"

# Area target uses 0.9 h so that the longest edge of a 20-degree triangle stays below 2 h
_AREA_FACTOR = math.sqrt(3.0) / 4.0 * 0.9**2


def generate_mesh(
    geometry: GeometryModel,
    *,
    curved: bool = True,
    min_angle: float = config.MIN_ANGLE_DEG,
) -> QuadraticMesh:
    """Mesh the geometry with quadratic triangles.

    Particle disks become solid elements. With curved=False the mid-edge nodes stay
    at chord midpoints (straight-sided elements with vertices on the curves).
    """
    start_time = time.time()
    errors = validate_geometry(geometry)
    if errors:
        raise GeometryInvalid("; ".join(errors))

    curves = geometry.curves
    vertices, segments, markers = _planar_graph(geometry, curves)
    data: dict[str, np.ndarray] = {
        "vertices": vertices,
        "segments": segments,
        "segment_markers": markers[:, None],
    }
    if geometry.holes:
        data["holes"] = np.array([_inner_point(loop) for loop in geometry.holes])
    if geometry.particles:
        data["regions"] = np.array(
            [[p.center[0], p.center[1], SOLID, 0.0] for p in geometry.particles]
        )

    size = geometry.size_field
    max_area = _AREA_FACTOR * size.default**2
    result = triangle.triangulate(data, f"pq{min_angle:g}Aa{max_area:.17g}")
    for _ in range(config.MAX_REFINEMENT_ROUNDS):
        verts, tris = result["vertices"], result["triangles"]
        centroids = verts[tris].mean(axis=1)
        target = _AREA_FACTOR * size(centroids) ** 2
        if np.all(_triangle_areas(verts[tris]) <= target * (1.0 + 1e-9)):
            break
        result["triangle_max_area"] = target[:, None]
        result = triangle.triangulate(result, f"rpq{min_angle:g}Aa")
    else:
        raise RefinementStall(
            f"size field not met after {config.MAX_REFINEMENT_ROUNDS} refinement rounds"
        )

    tris = _counter_clockwise(result["vertices"], result["triangles"])
    labels = np.rint(result.get("triangle_attributes", np.zeros((tris.shape[0], 1)))[:, 0])
    subdomain = np.where(labels == SOLID, SOLID, FLUID).astype(np.int8)
    seg = result["segments"]
    seg_tags = [curves[int(m) - 1].tag for m in result["segment_markers"].ravel()]
    mesh = build_quadratic_mesh(result["vertices"], tris, subdomain, seg, seg_tags)
    mesh = snap_boundary_nodes(mesh, geometry, curved=curved)

    quality = mesh_quality(mesh)
    if quality.min_angle < min_angle - 1e-6:
        # sharp input corners and vertices moved onto arcs
        logger.warning(
            f"[MESH] generate_mesh(): minimum angle {quality.min_angle:.2f} below {min_angle}"
        )
    elapsed_ms = (time.time() - start_time) * 1000
    logger.info(
        f"[MESH] generate_mesh(): {mesh.n_elements} elements "
        f"({int(np.sum(mesh.subdomain == SOLID))} solid), {mesh.n_nodes} nodes, "
        f"min_angle={quality.min_angle:.1f} curved={curved} elapsed={elapsed_ms:.0f}ms"
    )
    return mesh


def _planar_graph(
    geometry: GeometryModel, curves: tuple[Curve, ...]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Straight-segment approximation of all curves, with curve markers starting at 1."""
    points: list[np.ndarray] = []
    segments: list[np.ndarray] = []
    markers: list[np.ndarray] = []
    curve_id = 0
    loops = [*geometry.loops, *((p.boundary,) for p in geometry.particles)]
    for loop in loops:
        first = sum(p.shape[0] for p in points)
        loop_points = []
        loop_markers = []
        for curve in loop:
            pts = curve.discretize(geometry.size_field)
            loop_points.append(pts)
            loop_markers.append(np.full(pts.shape[0], curve_id + 1))
            curve_id += 1
        pts = np.concatenate(loop_points)
        n = pts.shape[0]
        idx = first + np.arange(n)
        points.append(pts)
        segments.append(np.stack([idx, first + (np.arange(n) + 1) % n], axis=1))
        markers.append(np.concatenate(loop_markers))
    return (
        np.concatenate(points),
        np.concatenate(segments).astype(np.int32),
        np.concatenate(markers).astype(np.int32),
    )


def _inner_point(loop: tuple[Curve, ...]) -> np.ndarray:
    """A point strictly inside a hole loop."""
    if len(loop) == 1 and isinstance(loop[0], CircularArc):
        return np.asarray(loop[0].center, dtype=float)
    poly = loop_polygon(loop)
    guess = poly.mean(axis=0)
    if points_in_polygon(guess, poly)[0]:
        return guess
    # centroid of an ear that contains no other polygon vertex
    n = poly.shape[0]
    for i in range(n):
        tri = poly[[i - 1, i, (i + 1) % n]]
        c = tri.mean(axis=0)
        if points_in_polygon(c, poly)[0]:
            return c
    raise GeometryInvalid("could not find a point inside a hole")


def _triangle_areas(corners: np.ndarray) -> np.ndarray:
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    ab, ac = b - a, c - a
    return 0.5 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])


def _counter_clockwise(vertices: np.ndarray, tris: np.ndarray) -> np.ndarray:
    tris = np.asarray(tris, dtype=np.int64).copy()
    flip = _triangle_areas(vertices[tris]) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def build_quadratic_mesh(
    vertices: np.ndarray,
    triangles: np.ndarray,
    subdomain: np.ndarray,
    segments: np.ndarray,
    segment_tags: list[str],
) -> QuadraticMesh:
    """Add mid-edge nodes at chord midpoints and derive facet tables."""
    vertices = np.asarray(vertices, dtype=float)
    tris = np.asarray(triangles, dtype=np.int64)
    nv = vertices.shape[0]
    local = np.array(LOCAL_EDGES)
    pairs = np.sort(tris[:, local], axis=2).reshape(-1, 2)
    keys = pairs[:, 0] * nv + pairs[:, 1]
    unique, inverse = np.unique(keys, return_inverse=True)
    edges = np.stack([unique // nv, unique % nv], axis=1)
    element_edges = inverse.reshape(-1, 3)
    counts = np.bincount(inverse, minlength=edges.shape[0])
    if np.any(counts > 2):
        raise GeometryInvalid("non-conforming triangulation: edge shared by 3+ elements")

    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    points = np.concatenate([vertices, midpoints])
    elements = np.concatenate([tris, nv + element_edges], axis=1)

    seg = np.sort(np.asarray(segments, dtype=np.int64), axis=1)
    seg_edges = np.searchsorted(unique, seg[:, 0] * nv + seg[:, 1])
    tag_of = {int(e): t for e, t in zip(seg_edges, segment_tags)}
    boundary = np.flatnonzero(counts == 1)
    boundary_tags = tuple(tag_of.get(int(e), "boundary") for e in boundary)

    labels = np.asarray(subdomain, dtype=np.int8)
    sides = np.full((edges.shape[0], 2), -1, dtype=np.int64)
    seen = np.zeros(edges.shape[0], dtype=np.int64)
    for elem, row in enumerate(element_edges):
        for e in row:
            sides[e, seen[e]] = labels[elem]
            seen[e] += 1
    interface = np.flatnonzero((counts == 2) & (sides[:, 0] != sides[:, 1]))

    return QuadraticMesh(
        points=points,
        n_vertices=nv,
        elements=elements,
        edges=edges,
        element_edges=element_edges,
        subdomain=labels,
        boundary_edges=boundary,
        boundary_tags=boundary_tags,
        interface_edges=interface,
    )


def snap_boundary_nodes(
    mesh: QuadraticMesh, geometry: GeometryModel, *, curved: bool = True
) -> QuadraticMesh:
    """Project facet nodes of tagged boundaries and interfaces onto their curves.

    Vertices always move onto the curve; mid-edge nodes go to the projection of the
    chord midpoint when curved, and to the chord midpoint otherwise.
    """
    by_tag: dict[str, list[Curve]] = {}
    for c in geometry.curves:
        by_tag.setdefault(c.tag, []).append(c)
    facets = list(zip(mesh.boundary_edges.tolist(), mesh.boundary_tags))
    particle_curves = [p.boundary for p in geometry.particles]
    points = mesh.points.copy()
    nv = mesh.n_vertices

    def nearest(curves: list[Curve], p: np.ndarray) -> Curve:
        return min(curves, key=lambda c: c.distance(p))

    snapped: list[tuple[int, Curve]] = []
    for edge, tag in facets:
        if tag in by_tag:
            snapped.append((edge, nearest(by_tag[tag], points[nv + edge])))
    for edge in mesh.interface_edges.tolist():
        if particle_curves:
            snapped.append((edge, nearest(particle_curves, points[nv + edge])))

    for edge, curve in snapped:
        for v in mesh.edges[edge]:
            points[v] = curve.project(points[v])
    for edge, curve in snapped:
        a, b = mesh.edges[edge]
        chord = 0.5 * (points[a] + points[b])
        points[nv + edge] = curve.project(chord) if curved else chord
    # interior mid-edge nodes follow their (possibly moved) vertices
    touched = {edge for edge, _ in snapped}
    moved = np.flatnonzero(np.any(points[:nv] != mesh.points[:nv], axis=1))
    if moved.size:
        moved_set = set(moved.tolist())
        for edge, (a, b) in enumerate(mesh.edges):
            if edge not in touched and (a in moved_set or b in moved_set):
                points[nv + edge] = 0.5 * (points[a] + points[b])

    result = mesh.moved(points)
    det = _quadrature_dets(result)
    if np.any(det <= 0):
        bad = int(np.argmin(det.min(axis=1)))
        raise InvertedElement(f"snapping inverted element {bad}")
    return result


def _quadrature_dets(mesh: QuadraticMesh) -> np.ndarray:
    pts, _ = triangle_quadrature(config.QUADRATURE_DEGREE)
    _, dn = p2_basis(pts)
    return det2(element_jacobians(mesh.points[mesh.elements], dn))


def mesh_quality(mesh: QuadraticMesh) -> MeshQualityReport:
    """Minimum vertex-triangle angle and minimum detJ ratio over quadrature points."""
    corners = mesh.points[mesh.elements[:, :3]]
    angles = _triangle_angles(corners)
    _, weights = triangle_quadrature(config.QUADRATURE_DEGREE)
    det = _quadrature_dets(mesh)
    mean = det @ weights / weights.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mean > 0, det.min(axis=1) / mean, -np.inf)
    element_angle = angles.min(axis=1)
    worst = int(np.lexsort((element_angle, np.round(ratio, 12)))[0])
    return MeshQualityReport(
        min_angle=float(element_angle.min()),
        min_detj_ratio=float(ratio.min()),
        worst_element=worst,
    )


def _triangle_angles(corners: np.ndarray) -> np.ndarray:
    """Interior angles in degrees, shape (n, 3)."""
    out = np.empty(corners.shape[:2])
    for i in range(3):
        a = corners[:, (i + 1) % 3] - corners[:, i]
        b = corners[:, (i + 2) % 3] - corners[:, i]
        cos = np.einsum("ni,ni->n", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out[:, i] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return out


def inverse_map(
    coords: np.ndarray, x: np.ndarray, max_iter: int = 25
) -> tuple[np.ndarray, float]:
    """Reference coordinates of x in one element (Newton, affine initial guess).

    Returns xi and the final mismatch |F_K(xi) - x|.
    """
    v0, v1, v2 = coords[0], coords[1], coords[2]
    affine = np.column_stack([v1 - v0, v2 - v0])
    xi = np.linalg.solve(affine, x - v0)
    scale = max(np.linalg.norm(v1 - v0), np.linalg.norm(v2 - v0))
    gap = math.inf
    for _ in range(max_iter):
        n, dn = p2_basis(xi)
        r = n[0] @ coords - x
        gap = float(np.linalg.norm(r))
        if gap <= 1e-13 * scale:
            break
        jac = coords.T @ dn[0]
        try:
            xi = xi - np.linalg.solve(jac, r)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(xi)) or np.max(np.abs(xi)) > 1e3:
            break
    return xi, gap


def _accept(
    mesh: QuadraticMesh, elem: int, x: np.ndarray, tol: float
) -> tuple[Optional[np.ndarray], float]:
    """xi if x lies in the element (barycentric >= -tol), plus the worst violation."""
    coords = mesh.points[mesh.elements[elem]]
    xi, gap = inverse_map(coords, x)
    lam = np.array([1.0 - xi[0] - xi[1], xi[0], xi[1]])
    edge = np.linalg.norm(coords[1] - coords[0])
    violation = float(-lam.min())
    if violation <= tol and gap <= 1e-10 * edge:
        return xi, violation
    return None, violation if np.isfinite(violation) else math.inf


def locate_point(
    mesh: QuadraticMesh,
    x: np.ndarray,
    hint: Optional[int] = None,
    tol: float = config.BARYCENTRIC_TOLERANCE,
) -> Optional[PointLocation]:
    """Element and reference coordinates containing x, or None when outside.

    Walks from the element of the nearest vertex (or from hint), falls back to a
    scan of elements whose bounding box contains x, and finally clamps points
    within the clamp tolerance of the mesh boundary.
    """
    x = np.asarray(x, dtype=float)
    if hint is None:
        _, vertex = mesh.vertex_tree.query(x)
        hint = mesh.vertex_elements[int(vertex)][0]
    elem = int(hint)
    visited: set[int] = set()
    for _ in range(mesh.n_elements):
        xi, _ = _accept(mesh, elem, x, tol)
        if xi is not None:
            return PointLocation(elem, xi)
        visited.add(elem)
        coords = mesh.points[mesh.elements[elem]]
        xi_raw, _ = inverse_map(coords, x)
        lam = np.array([1.0 - xi_raw[0] - xi_raw[1], xi_raw[0], xi_raw[1]])
        # local edge opposite vertex i is edge (i+1, i+2) -> LOCAL_EDGES index (i+1) % 3
        nxt = int(mesh.neighbors[elem, (int(np.argmin(lam)) + 1) % 3])
        if nxt < 0 or nxt in visited or not np.all(np.isfinite(lam)):
            break
        elem = nxt

    return _scan(mesh, x, tol)


def _scan(mesh: QuadraticMesh, x: np.ndarray, tol: float) -> Optional[PointLocation]:
    pts = mesh.points[mesh.elements]
    lo, hi = pts.min(axis=1), pts.max(axis=1)
    pad = config.CLAMP_TOLERANCE * mesh.bbox_diagonal + 1e-3 * (hi - lo).max(axis=1)[:, None]
    candidates = np.flatnonzero(np.all((x >= lo - pad) & (x <= hi + pad), axis=1))
    best: Optional[tuple[float, int]] = None
    for elem in candidates:
        xi, violation = _accept(mesh, int(elem), x, tol)
        if xi is not None:
            return PointLocation(int(elem), xi)
        if best is None or violation < best[0]:
            best = (violation, int(elem))
    if best is None:
        return None
    # clamp into the closest element when x is within the clamp distance
    elem = best[1]
    coords = mesh.points[mesh.elements[elem]]
    xi, _ = inverse_map(coords, x)
    lam = np.clip(np.array([1.0 - xi[0] - xi[1], xi[0], xi[1]]), 0.0, None)
    lam /= lam.sum()
    clamped = lam[1:]
    n, _ = p2_basis(clamped)
    if np.linalg.norm(n[0] @ coords - x) <= config.CLAMP_TOLERANCE * mesh.bbox_diagonal:
        return PointLocation(elem, clamped)
    return None


def forward_map(mesh: QuadraticMesh, location: PointLocation) -> np.ndarray:
    n, _ = p2_basis(location.xi)
    return np.asarray(n[0] @ mesh.points[mesh.elements[location.element]])


def mesh_area(mesh: QuadraticMesh, label: Optional[int] = None) -> float:
    """Area of the curved elements, optionally of one subdomain."""
    _, weights = triangle_quadrature(config.QUADRATURE_DEGREE)
    det = _quadrature_dets(mesh)
    per_element = det @ weights
    if label is not None:
        per_element = per_element[mesh.subdomain == label]
    return float(per_element.sum())


def write_mesh(mesh: QuadraticMesh, path: Path) -> None:
    """Write the plain-text mesh format described in docs/mesh-format.md."""
    lines = [MESH_FORMAT_HEADER, f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertex_coords.tolist()]
    lines.append(f"midnodes {mesh.n_edges}")
    lines += [
        f"{a} {b} {x!r} {y!r}"
        for (a, b), (x, y) in zip(mesh.edges.tolist(), mesh.midedge_coords.tolist())
    ]
    lines.append(f"elements {mesh.n_elements}")
    lines += [
        " ".join(str(v) for v in row[:3]) + f" {label}"
        for row, label in zip(mesh.elements.tolist(), mesh.subdomain.tolist())
    ]
    lines.append(f"boundary {mesh.boundary_edges.shape[0]}")
    lines += [f"{e} {t}" for e, t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mesh(path: Path) -> QuadraticMesh:
    """Read a mesh written by write_mesh."""
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MESH_FORMAT_HEADER:
        raise ValueError(f"{path} is not an ale-fsi mesh file")
    pos = 1

    def section(name: str) -> list[list[str]]:
        nonlocal pos
        head = lines[pos].split()
        if head[0] != name:
            raise ValueError(f"expected section '{name}' at line {pos + 1}, got '{head[0]}'")
        count = int(head[1])
        rows = [lines[pos + 1 + i].split() for i in range(count)]
        pos += count + 1
        return rows

    vertices = np.array([[float(v) for v in r] for r in section("vertices")]).reshape(-1, 2)
    mid = section("midnodes")
    elem = section("elements")
    bnd = section("boundary")
    tris = np.array([[int(v) for v in r[:3]] for r in elem], dtype=np.int64).reshape(-1, 3)
    labels = np.array([int(r[3]) for r in elem], dtype=np.int8)
    edges = np.array([[int(r[0]), int(r[1])] for r in mid], dtype=np.int64).reshape(-1, 2)
    segments = edges[[int(r[0]) for r in bnd]] if bnd else np.zeros((0, 2), dtype=np.int64)
    mesh = build_quadratic_mesh(vertices, tris, labels, segments, [r[1] for r in bnd])
    points = mesh.points.copy()
    coords = np.array([[float(r[2]), float(r[3])] for r in mid]).reshape(-1, 2)
    nv = mesh.n_vertices
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(mesh.edges.tolist())}
    for (a, b), xy in zip(edges.tolist(), coords):
        points[nv + lookup[(a, b)]] = xy
    return mesh.moved(points)
