"""Parametric geometry: line segments, circular arcs, loops and disks."""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ale_fsi.errors import GeometryInvalid, ProjectionDiverged

logger = logging.getLogger(__name__)

Point = tuple[float, float]

# Tag given to box pieces of a clipped local domain
LOCAL_TAG = "local"

# Relative tolerance for matching curve end points
_JOIN_TOL = 1e-9


class Curve(ABC):
    """Base class for boundary curves parametrized on t in [0, 1]."""

    tag: str

    @abstractmethod
    def point(self, t: np.ndarray) -> np.ndarray:
        """Evaluate the curve at parameters t, shape (n, 2)."""
        ...

    @abstractmethod
    def project(self, p: np.ndarray) -> np.ndarray:
        """Closest point on the curve to p."""
        ...

    @property
    @abstractmethod
    def length(self) -> float: ...

    @abstractmethod
    def reversed(self) -> "Curve": ...

    @abstractmethod
    def sub(self, t0: float, t1: float) -> "Curve":
        """Piece of the curve between two parameters."""
        ...

    @abstractmethod
    def segment_hits(self, a: np.ndarray, b: np.ndarray) -> list[tuple[float, float]]:
        """Crossings with segment a-b as (curve parameter, segment parameter) pairs."""
        ...

    @property
    def start(self) -> np.ndarray:
        return self.point(np.array([0.0]))[0]

    @property
    def end(self) -> np.ndarray:
        return self.point(np.array([1.0]))[0]

    @property
    def min_segments(self) -> int:
        return 1

    def distance(self, p: np.ndarray) -> float:
        return float(np.linalg.norm(self.project(p) - p))

    def sample(self, n: int) -> np.ndarray:
        """n + 1 points including both ends."""
        return self.point(np.linspace(0.0, 1.0, n + 1))

    def discretize(self, size: "SizeField") -> np.ndarray:
        """Points along the curve with spacing from the size field, end point excluded."""
        coarse = self.sample(16)
        h = float(np.min(size(coarse)))
        n = max(self.min_segments, math.ceil(self.length / h))
        return self.sample(n)[:-1]


@dataclass(frozen=True)
class LineSegment(Curve):
    a: Point
    b: Point
    tag: str = "wall"

    def point(self, t: np.ndarray) -> np.ndarray:
        a, b = np.asarray(self.a), np.asarray(self.b)
        return a[None, :] + np.asarray(t, dtype=float)[:, None] * (b - a)[None, :]

    @property
    def length(self) -> float:
        return math.dist(self.a, self.b)

    def project(self, p: np.ndarray) -> np.ndarray:
        a, b = np.asarray(self.a), np.asarray(self.b)
        d = b - a
        s = float(np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0))
        return a + s * d

    def reversed(self) -> "LineSegment":
        return LineSegment(self.b, self.a, self.tag)

    def sub(self, t0: float, t1: float) -> "LineSegment":
        pts = self.point(np.array([t0, t1]))
        return LineSegment(tuple(pts[0]), tuple(pts[1]), self.tag)  # type: ignore[arg-type]

    def segment_hits(self, a: np.ndarray, b: np.ndarray) -> list[tuple[float, float]]:
        p, r = np.asarray(self.a), np.asarray(self.b) - np.asarray(self.a)
        s = b - a
        denom = r[0] * s[1] - r[1] * s[0]
        if abs(denom) < 1e-14 * np.linalg.norm(r) * np.linalg.norm(s):
            return []
        qp = a - p
        t = (qp[0] * s[1] - qp[1] * s[0]) / denom
        u = (qp[0] * r[1] - qp[1] * r[0]) / denom
        if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
            return [(float(np.clip(t, 0, 1)), float(np.clip(u, 0, 1)))]
        return []


@dataclass(frozen=True)
class CircularArc(Curve):
    """Arc from angle theta0 to theta1; theta1 < theta0 runs clockwise."""

    center: Point
    radius: float
    theta0: float = 0.0
    theta1: float = 2.0 * math.pi
    tag: str = "wall"

    @property
    def sweep(self) -> float:
        return self.theta1 - self.theta0

    @property
    def is_full(self) -> bool:
        return abs(abs(self.sweep) - 2.0 * math.pi) < 1e-14

    @property
    def min_segments(self) -> int:
        return max(2, math.ceil(8 * abs(self.sweep) / (2.0 * math.pi)))

    def point(self, t: np.ndarray) -> np.ndarray:
        theta = self.theta0 + np.asarray(t, dtype=float) * self.sweep
        c = np.asarray(self.center)
        return c[None, :] + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius

    def param_of_angle(self, phi: float) -> float:
        """Curve parameter of polar angle phi, may fall outside [0, 1]."""
        rel = (phi - self.theta0) * math.copysign(1.0, self.sweep)
        return (rel % (2.0 * math.pi)) / abs(self.sweep)

    def project(self, p: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center)
        d = np.asarray(p, dtype=float) - c
        dist = float(np.hypot(d[0], d[1]))
        if not np.isfinite(dist) or dist < 1e-14 * self.radius:
            raise ProjectionDiverged(f"point {p} at the center of arc {self.tag}")
        if not self.is_full:
            t = self.param_of_angle(math.atan2(d[1], d[0]))
            if t > 1.0:
                ends = self.point(np.array([0.0, 1.0]))
                gaps = np.linalg.norm(ends - p, axis=1)
                return ends[int(np.argmin(gaps))]
        return c + self.radius * d / dist

    def reversed(self) -> "CircularArc":
        return CircularArc(self.center, self.radius, self.theta1, self.theta0, self.tag)

    def sub(self, t0: float, t1: float) -> "CircularArc":
        return CircularArc(
            self.center,
            self.radius,
            self.theta0 + t0 * self.sweep,
            self.theta0 + t1 * self.sweep,
            self.tag,
        )

    def segment_hits(self, a: np.ndarray, b: np.ndarray) -> list[tuple[float, float]]:
        c = np.asarray(self.center)
        d = b - a
        f = a - c
        qa = float(np.dot(d, d))
        qb = 2.0 * float(np.dot(f, d))
        qc = float(np.dot(f, f)) - self.radius**2
        disc = qb * qb - 4.0 * qa * qc
        if disc <= 0.0:
            return []
        root = math.sqrt(disc)
        hits = []
        for s in ((-qb - root) / (2.0 * qa), (-qb + root) / (2.0 * qa)):
            if not -1e-12 <= s <= 1 + 1e-12:
                continue
            q = a + s * d - c
            t = self.param_of_angle(math.atan2(q[1], q[0]))
            if self.is_full or t <= 1.0 + 1e-12:
                hits.append((min(t, 1.0), float(np.clip(s, 0, 1))))
        return hits


def circle(center: Point, radius: float, tag: str) -> CircularArc:
    return CircularArc(center, radius, 0.0, 2.0 * math.pi, tag)


@dataclass(frozen=True)
class Disk:
    """Solid particle of the initial configuration."""

    center: Point
    radius: float
    tag: str = "particle"

    @property
    def boundary(self) -> CircularArc:
        return circle(self.center, self.radius, self.tag)

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    def moved_to(self, center: Point) -> "Disk":
        return replace(self, center=center)


@dataclass(frozen=True)
class SizeField:
    """Target edge length: a default plus refined disks (cx, cy, radius, size)."""

    default: float
    regions: tuple[tuple[float, float, float, float], ...] = ()

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        h = np.full(pts.shape[0], self.default)
        for cx, cy, radius, size in self.regions:
            inside = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) <= radius
            h[inside] = np.minimum(h[inside], size)
        return h

    @property
    def min_size(self) -> float:
        return min([self.default, *(r[3] for r in self.regions)])


Loop = tuple[Curve, ...]


@dataclass(frozen=True)
class GeometryModel:
    """Fluid region bounded by an outer loop, with holes and particle disks."""

    outer_boundary: Loop
    holes: tuple[Loop, ...] = ()
    particles: tuple[Disk, ...] = ()
    size_field: SizeField = field(default_factory=lambda: SizeField(0.1))

    @property
    def loops(self) -> tuple[Loop, ...]:
        return (self.outer_boundary, *self.holes)

    @property
    def curves(self) -> tuple[Curve, ...]:
        """Every boundary and interface curve, in segment-marker order."""
        found: list[Curve] = []
        for loop in self.loops:
            found.extend(loop)
        found.extend(p.boundary for p in self.particles)
        return tuple(found)

    @property
    def boundary_tags(self) -> set[str]:
        return {c.tag for loop in self.loops for c in loop}

    @property
    def area(self) -> float:
        """Exact fluid plus solid area."""
        total = abs(loop_area(self.outer_boundary))
        return total - sum(abs(loop_area(h)) for h in self.holes)

    def with_particles(self, particles: tuple[Disk, ...]) -> "GeometryModel":
        return replace(self, particles=particles)

    def with_size(self, size_field: SizeField) -> "GeometryModel":
        return replace(self, size_field=size_field)


def loop_polygon(loop: Loop, per_arc: int = 64) -> np.ndarray:
    """Closed polygon approximating a loop, last point not repeated."""
    pieces = []
    for c in loop:
        n = per_arc if isinstance(c, CircularArc) else 1
        pieces.append(c.sample(n)[:-1])
    return np.concatenate(pieces)


def loop_area(loop: Loop) -> float:
    """Signed area, positive for counter-clockwise loops.

    Arcs contribute their exact segment area on top of the chord polygon.
    """
    corners = np.array([c.start for c in loop])
    x, y = corners[:, 0], corners[:, 1]
    area = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    for c in loop:
        if isinstance(c, CircularArc):
            theta = abs(c.sweep)
            area += math.copysign(0.5 * c.radius**2 * (theta - math.sin(theta)), c.sweep)
    return area


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd ray casting test, vectorized over points."""
    pts = np.atleast_2d(points)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    xa, ya = polygon[:, 0][None, :], polygon[:, 1][None, :]
    xb, yb = np.roll(polygon[:, 0], -1)[None, :], np.roll(polygon[:, 1], -1)[None, :]
    crosses = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at = xa + (y - ya) * (xb - xa) / (yb - ya)
    hits = crosses & (x < x_at)
    return np.asarray(np.count_nonzero(hits, axis=1) % 2 == 1)


def _segments_cross(p: np.ndarray) -> bool:
    """True if any two non-adjacent edges of the closed polygon p cross."""
    n = p.shape[0]
    a, b = p, np.roll(p, -1, axis=0)
    for i in range(n):
        j = np.arange(i + 2, n)
        if i == 0:
            j = j[j != n - 1]
        if j.size == 0:
            continue
        d1 = _orient(a[i], b[i], a[j])
        d2 = _orient(a[i], b[i], b[j])
        d3 = _orient_many(a[j], b[j], a[i])
        d4 = _orient_many(a[j], b[j], b[i])
        if np.any((d1 * d2 < 0) & (d3 * d4 < 0)):
            return True
    return False


def _orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[0] - a[0]) * (c[:, 1] - a[1]) - (b[1] - a[1]) * (c[:, 0] - a[0])


def _orient_many(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[:, 0] - a[:, 0]) * (c[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[0] - a[:, 0])


def validate_geometry(geometry: GeometryModel) -> list[str]:
    """Validate loops and particles and return list of errors."""
    errors: list[str] = []
    if not geometry.outer_boundary:
        return ["outer boundary is empty"]
    for k, loop in enumerate(geometry.loops):
        scale = max(c.length for c in loop)
        for i, c in enumerate(loop):
            nxt = loop[(i + 1) % len(loop)]
            if np.linalg.norm(c.end - nxt.start) > _JOIN_TOL * max(scale, 1.0):
                errors.append(f"loop {k} is open between curves {i} and {(i + 1) % len(loop)}")
        if _segments_cross(loop_polygon(loop, per_arc=32)):
            errors.append(f"loop {k} intersects itself")
    if errors:
        return errors

    outer = loop_polygon(geometry.outer_boundary)
    holes = [loop_polygon(h) for h in geometry.holes]
    for k, hole in enumerate(holes):
        if not np.all(points_in_polygon(hole, outer)):
            errors.append(f"hole {k} is not inside the outer boundary")
    all_curves = [c for loop in geometry.loops for c in loop]
    for k, disk in enumerate(geometry.particles):
        center = np.asarray(disk.center, dtype=float)
        if disk.radius <= 0:
            errors.append(f"particle {k} has non-positive radius")
            continue
        if not points_in_polygon(center, outer)[0] or any(
            points_in_polygon(center, h)[0] for h in holes
        ):
            errors.append(f"particle {k} center is outside the fluid region")
            continue
        gap = min(c.distance(center) for c in all_curves)
        if gap <= disk.radius:
            errors.append(f"particle {k} touches the boundary (gap {gap:.3g} <= r)")
        for j, other in enumerate(geometry.particles[:k]):
            if math.dist(disk.center, other.center) <= disk.radius + other.radius:
                errors.append(f"particles {j} and {k} overlap")
    return errors


def oriented_loop(loop: Loop, ccw: bool) -> Loop:
    """Loop reversed if needed so that its orientation matches ccw."""
    if (loop_area(loop) > 0) == ccw:
        return loop
    return tuple(c.reversed() for c in reversed(loop))


def clip_to_box(
    geometry: GeometryModel,
    lower: Point,
    upper: Point,
    keep_point: Point,
) -> GeometryModel:
    """Intersection of the fluid region with an axis-aligned box.

    Channel curves keep their tags; box pieces are tagged ``LOCAL_TAG``. When the
    intersection has several components, the one containing keep_point is kept.
    Particles and size field are not carried over.
    """
    x0, y0 = lower
    x1, y1 = upper
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    box = [LineSegment(corners[i], corners[(i + 1) % 4], LOCAL_TAG) for i in range(4)]
    channel = [oriented_loop(geometry.outer_boundary, ccw=True)]
    channel += [oriented_loop(h, ccw=False) for h in geometry.holes]
    channel_curves = [c for loop in channel for c in loop]
    outer_poly = loop_polygon(channel[0])
    hole_polys = [loop_polygon(h) for h in channel[1:]]
    scale = math.hypot(x1 - x0, y1 - y0)

    def in_box(p: np.ndarray) -> bool:
        return bool(x0 < p[0] < x1 and y0 < p[1] < y1)

    def in_fluid(p: np.ndarray) -> bool:
        if not points_in_polygon(p, outer_poly)[0]:
            return False
        return not any(points_in_polygon(p, h)[0] for h in hole_polys)

    pieces: list[Curve] = []
    for curve in channel_curves:
        cuts = sorted({t for edge in box for t, _ in curve.segment_hits(edge.start, edge.end)})
        pieces += [p for p in _split(curve, cuts) if in_box(_mid(p))]
    for edge in box:
        cuts = sorted(
            {s for c in channel_curves for _, s in c.segment_hits(edge.start, edge.end)}
        )
        pieces += [p for p in _split(edge, cuts) if in_fluid(_mid(p))]

    loops = _chain(pieces, tol=_JOIN_TOL * scale * 1e3)
    areas = [loop_area(loop) for loop in loops]
    keep = np.asarray(keep_point, dtype=float)
    outers = [
        (a, loop)
        for a, loop in zip(areas, loops)
        if a > 0 and points_in_polygon(keep, loop_polygon(loop))[0]
    ]
    if not outers:
        raise GeometryInvalid("clipped region does not contain the particle")
    _, outer = min(outers, key=lambda item: item[0])
    outer_polygon = loop_polygon(outer)
    holes = tuple(
        loop
        for a, loop in zip(areas, loops)
        if a < 0 and points_in_polygon(loop[0].start, outer_polygon)[0]
    )
    logger.debug(
        f"[GEOM] clip_to_box(): {len(pieces)} pieces, {len(loops)} loops, {len(holes)} holes"
    )
    return GeometryModel(outer_boundary=outer, holes=holes, size_field=geometry.size_field)


def _mid(curve: Curve) -> np.ndarray:
    return curve.point(np.array([0.5]))[0]


def _split(curve: Curve, cuts: list[float]) -> list[Curve]:
    bounds = [0.0, *[t for t in cuts if 1e-12 < t < 1 - 1e-12], 1.0]
    return [curve.sub(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b - a > 1e-12]


def _chain(pieces: list[Curve], tol: float) -> list[Loop]:
    """Join oriented pieces end to start into closed loops."""
    unused = list(pieces)
    loops: list[Loop] = []
    while unused:
        loop = [unused.pop(0)]
        while np.linalg.norm(loop[-1].end - loop[0].start) > tol:
            tail = loop[-1].end
            match: Optional[int] = None
            for i, cand in enumerate(unused):
                if np.linalg.norm(cand.start - tail) <= tol:
                    match = i
                    break
            if match is None:
                raise GeometryInvalid("clipped boundary pieces do not close into loops")
            loop.append(unused.pop(match))
        loops.append(_snap_joints(loop))
    return loops


def _snap_joints(loop: list[Curve]) -> Loop:
    """Make consecutive line pieces meet exactly at their shared end points."""
    fixed: list[Curve] = []
    for i, c in enumerate(loop):
        if isinstance(c, LineSegment):
            prev = loop[i - 1]
            nxt = loop[(i + 1) % len(loop)]
            start = prev.end if isinstance(prev, CircularArc) else np.asarray(c.a)
            c = LineSegment(tuple(start), tuple(nxt.start), c.tag)  # type: ignore[arg-type]
        fixed.append(c)
    return tuple(fixed)
