"""Scenario configuration, its INI file format, and the benchmark geometries."""

import configparser
import dataclasses
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from ale_fsi import config
from ale_fsi.assembly import AssemblyOptions
from ale_fsi.fem import FlowBoundaryConditions, VelocityFn, build_spaces
from ale_fsi.geometry import CircularArc, Curve, Disk, GeometryModel, LineSegment, SizeField, circle
from ale_fsi.local_update import LocalUpdateResult, run_local_update
from ale_fsi.mesh import generate_mesh
from ale_fsi.models import (
    BackgroundFlow,
    LocalDomainSpec,
    NewtonConfig,
    PhysicalParams,
    RemeshThresholds,
    TimeLoopConfig,
    TrajectoryRecord,
)
from ale_fsi.problem import FsiProblem
from ale_fsi.timeloop import StepHook, TimeLoopResult, run_time_loop

logger = logging.getLogger(__name__)

INFLOW_TAG = "inflow"
OUTFLOW_TAG = "outflow"
WALL_TAG = "wall"
OBSTACLE_TAG = "obstacle"

GEOMETRY_KINDS = ("double_pillar", "straight", "obstacles", "spiral")

# Pillar centers and radii (x, y, r) of the double-pillar benchmark
DEFAULT_PILLARS = ((1.0, 0.48, 0.15), (1.0, 0.925, 0.035))


def _section(name: str, default: Any) -> Any:
    return field(default=default, metadata={"section": name})


@dataclass(frozen=True)
class ScenarioConfig:
    """Every parameter of one simulation, grouped by INI section."""

    # [geometry]
    kind: str = _section("geometry", "double_pillar")
    width: float = _section("geometry", 1.0)
    length: float = _section("geometry", 1.8)
    pillars: tuple[tuple[float, float, float], ...] = _section("geometry", DEFAULT_PILLARS)
    particle_x: float = _section("geometry", 0.60)
    particle_y: float = _section("geometry", 0.76)
    particle_r: float = _section("geometry", 0.08)
    spiral_inner: float = _section("geometry", 0.6)
    spiral_sweep_deg: float = _section("geometry", 300.0)
    spiral_obstacles: int = _section("geometry", 3)
    obstacle_r: float = _section("geometry", 0.05)
    spiral_particles: int = _section("geometry", 5)
    spiral_fluxes: tuple[float, ...] = _section("geometry", (1.0, 1.5, 3.0))
    # [physics]
    re: float = _section("physics", 3.0)
    e: float = _section("physics", 1e9)
    u0: float = _section("physics", 8.0)
    viscous_form: str = _section("physics", "discrete")
    # [time]
    dt: float = _section("time", 3.0 / 800.0)
    t_end: float = _section("time", 0.75)
    t_star: float = _section("time", 0.375)
    scheme: str = _section("time", "fo")
    # [mesh]
    h: float = _section("mesh", 0.04)
    particle_h: float = _section("mesh", 0.0)  # 0 uses h
    curved: bool = _section("mesh", True)
    min_angle: float = _section("mesh", config.MIN_ANGLE_DEG)
    # [local]
    local: bool = _section("local", False)
    half_width_factor: float = _section("local", config.LOCAL_HALF_WIDTH_FACTOR)
    near_size: float = _section("local", 0.0)  # 0 uses particle_h
    far_size: float = _section("local", 0.0)  # 0 uses h
    remesh_displacement_factor: float = _section("local", config.REMESH_DISPLACEMENT_FACTOR)
    remesh_min_detj_ratio: float = _section("local", config.REMESH_MIN_DETJ_RATIO)
    remesh_min_angle: float = _section("local", config.REMESH_MIN_ANGLE_DEG)
    # [newton]
    abs_tol: float = _section("newton", config.NEWTON_ABS_TOL)
    rel_tol: float = _section("newton", config.NEWTON_REL_TOL)
    max_iter: int = _section("newton", config.NEWTON_MAX_ITER)
    # [output]
    out_dir: str = _section("output", "latest")
    vtk_every: int = _section("output", 0)
    threads: int = _section("output", config.THREADS)

    @property
    def particle(self) -> Disk:
        return Disk((self.particle_x, self.particle_y), self.particle_r)

    @property
    def physical_params(self) -> PhysicalParams:
        return PhysicalParams(re=self.re, e=self.e)

    @property
    def loop_config(self) -> TimeLoopConfig:
        return TimeLoopConfig(self.dt, self.t_end, self.scheme, self.vtk_every)

    @property
    def newton_config(self) -> NewtonConfig:
        return NewtonConfig(abs_tol=self.abs_tol, rel_tol=self.rel_tol, max_iter=self.max_iter)

    @property
    def assembly_options(self) -> AssemblyOptions:
        return AssemblyOptions(viscous_form=self.viscous_form, threads=self.threads)

    @property
    def particle_size(self) -> float:
        return self.particle_h or self.h

    @property
    def local_spec(self) -> LocalDomainSpec:
        return LocalDomainSpec(
            half_width=self.half_width_factor * self.particle_r,
            near_size=self.near_size or self.particle_size,
            far_size=self.far_size or self.h,
        )

    @property
    def thresholds(self) -> RemeshThresholds:
        return RemeshThresholds(
            max_displacement=self.remesh_displacement_factor * self.particle_r,
            min_detj_ratio=self.remesh_min_detj_ratio,
            min_angle=self.remesh_min_angle,
        )

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def background_payload(self) -> dict[str, Any]:
        """Parameters the steady background flow depends on."""
        keys = (
            "kind", "width", "length", "pillars", "spiral_inner", "spiral_sweep_deg",
            "spiral_obstacles", "obstacle_r", "re", "u0", "viscous_form", "h",
            "curved", "min_angle",
        )
        return {k: getattr(self, k) for k in keys}


def validate_scenario(cfg: ScenarioConfig) -> list[str]:
    """Return a list of problems with the scenario, empty when valid."""
    errors = []
    if cfg.kind not in GEOMETRY_KINDS:
        errors.append(f"unknown geometry kind {cfg.kind!r}")
    lengths = {
        "width": cfg.width,
        "length": cfg.length,
        "particle_r": cfg.particle_r,
        "h": cfg.h,
        "dt": cfg.dt,
        "spiral_inner": cfg.spiral_inner,
        "obstacle_r": cfg.obstacle_r,
    }
    errors += [
        f"{name} must be positive, got {value}" for name, value in lengths.items() if not value > 0
    ]
    for i, (_, _, r) in enumerate(cfg.pillars):
        if not r > 0:
            errors.append(f"pillar {i} radius must be positive, got {r}")
    if cfg.re <= 0:
        errors.append(f"re must be positive, got {cfg.re}")
    if cfg.e < 0:
        errors.append(f"e must be non-negative, got {cfg.e}")
    if cfg.scheme not in ("fo", "prk2"):
        errors.append(f"scheme must be 'fo' or 'prk2', got {cfg.scheme!r}")
    if cfg.viscous_form not in ("discrete", "reference"):
        errors.append(f"viscous_form must be 'discrete' or 'reference', got {cfg.viscous_form!r}")
    if cfg.t_end < 0:
        errors.append(f"t_end must be non-negative, got {cfg.t_end}")
    if not 0 < cfg.spiral_sweep_deg < 360:
        errors.append("spiral_sweep_deg must lie in (0, 360)")
    if min(cfg.particle_h, cfg.near_size, cfg.far_size) < 0:
        errors.append("mesh sizes must not be negative")
    if cfg.spiral_particles < 1 or cfg.spiral_obstacles < 0:
        errors.append("spiral counts out of range")
    if cfg.threads < 1:
        errors.append("threads must be at least 1")
    return errors


# INI serialization


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(" ".join(repr(float(v)) for v in row) for row in value)
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def _parse(text: str, kind: Any, name: str) -> Any:
    text = text.strip()
    if kind is bool:
        lowered = text.lower()
        if lowered not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"{name}: not a boolean: {text!r}")
        return lowered in ("true", "yes", "1")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is str:
        return text
    if name == "pillars":
        rows = [r for r in text.split(";") if r.strip()]
        parsed = tuple(tuple(float(v) for v in r.split()) for r in rows)
        if any(len(r) != 3 for r in parsed):
            raise ValueError(f"pillars: expected 'x y r' triples, got {text!r}")
        return parsed
    return tuple(float(v) for v in text.split())


def _field_types() -> dict[str, Any]:
    scalars = (float, int, bool, str)
    return {
        f.name: f.type if f.type in scalars else tuple for f in dataclasses.fields(ScenarioConfig)
    }


def scenario_to_ini(cfg: ScenarioConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for f in dataclasses.fields(cfg):
        section = f.metadata["section"]
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, f.name, _format(getattr(cfg, f.name)))
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def scenario_from_ini(text: str) -> ScenarioConfig:
    """Parse INI text; missing keys keep their defaults, unknown keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    fields = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    types = _field_types()
    values: dict[str, Any] = {}
    for section in parser.sections():
        for name, raw in parser.items(section):
            if name not in fields:
                raise ValueError(f"unknown key {name!r} in section [{section}]")
            if fields[name].metadata["section"] != section:
                raise ValueError(f"key {name!r} belongs in [{fields[name].metadata['section']}]")
            values[name] = _parse(raw, types[name], name)
    return ScenarioConfig(**values)


def save_scenario(cfg: ScenarioConfig, path: Path) -> None:
    path.write_text(scenario_to_ini(cfg), encoding="utf-8")


def load_scenario(path: Path) -> ScenarioConfig:
    cfg = scenario_from_ini(path.read_text(encoding="utf-8"))
    errors = validate_scenario(cfg)
    if errors:
        raise ValueError(f"invalid scenario {path}: " + "; ".join(errors))
    return cfg


# Inflow and geometries


def inflow_profile(y: float, width: float, u0: float) -> tuple[float, float]:
    """Parabolic inflow 0.5 u0 y (W - y) / W^2 along x."""
    return (0.5 * u0 * y * (width - y) / width**2, 0.0)


def segment_inflow(segment: LineSegment, u0: float) -> VelocityFn:
    """Parabolic profile across an inlet segment, along its inward normal."""
    a = np.asarray(segment.a, dtype=float)
    tangent = np.asarray(segment.b, dtype=float) - a
    width = float(np.linalg.norm(tangent))
    inward = np.array([-tangent[1], tangent[0]]) / width

    def velocity(points: np.ndarray) -> np.ndarray:
        s = np.clip((np.atleast_2d(points) - a) @ tangent / width, 0.0, width)
        speed = 0.5 * u0 * s * (width - s) / width**2
        return speed[:, None] * inward[None, :]

    return velocity


def _rectangle(width: float, length: float) -> tuple[Curve, ...]:
    return (
        LineSegment((0.0, 0.0), (length, 0.0), WALL_TAG),
        LineSegment((length, 0.0), (length, width), OUTFLOW_TAG),
        LineSegment((length, width), (0.0, width), WALL_TAG),
        LineSegment((0.0, width), (0.0, 0.0), INFLOW_TAG),
    )


def _sizes(cfg: ScenarioConfig, particles: Sequence[Disk]) -> SizeField:
    regions = tuple(
        (p.center[0], p.center[1], 3.0 * p.radius, cfg.particle_size) for p in particles
    )
    return SizeField(cfg.h, regions)


def spiral_channel(cfg: ScenarioConfig) -> tuple[tuple[Curve, ...], tuple[tuple[Curve, ...], ...]]:
    """Annular sector of one loop with obstacles staggered about its centerline."""
    r_in, w = cfg.spiral_inner, cfg.width
    r_out = r_in + w
    sweep = math.radians(cfg.spiral_sweep_deg)
    end_in = (r_in * math.cos(sweep), r_in * math.sin(sweep))
    end_out = (r_out * math.cos(sweep), r_out * math.sin(sweep))
    outer = (
        LineSegment((r_in, 0.0), (r_out, 0.0), INFLOW_TAG),
        CircularArc((0.0, 0.0), r_out, 0.0, sweep, WALL_TAG),
        LineSegment(end_out, end_in, OUTFLOW_TAG),
        CircularArc((0.0, 0.0), r_in, sweep, 0.0, WALL_TAG),
    )
    holes = []
    for k in range(cfg.spiral_obstacles):
        phi = sweep * (k + 1) / (cfg.spiral_obstacles + 1)
        radius = r_in + w * (0.35 if k % 2 == 0 else 0.65)
        center = (radius * math.cos(phi), radius * math.sin(phi))
        holes.append((circle(center, cfg.obstacle_r, OBSTACLE_TAG),))
    return outer, tuple(holes)


def spiral_release_points(cfg: ScenarioConfig) -> list[Disk]:
    """Particles spread across the inlet, just downstream of it."""
    r_in, w, r = cfg.spiral_inner, cfg.width, cfg.particle_r
    phi = math.radians(10.0)
    radii = np.linspace(r_in + 2.0 * r, r_in + w - 2.0 * r, cfg.spiral_particles)
    return [Disk((float(rr * math.cos(phi)), float(rr * math.sin(phi))), r) for rr in radii]


def spiral_station_angle(cfg: ScenarioConfig) -> float:
    """Polar angle in radians, halfway between the last obstacle and the outlet."""
    n = cfg.spiral_obstacles
    return math.radians(cfg.spiral_sweep_deg) * (n + 0.5) / (n + 1)


def build_channel(cfg: ScenarioConfig) -> GeometryModel:
    """Fluid channel of the scenario without the particle."""
    if cfg.kind == "spiral":
        outer, holes = spiral_channel(cfg)
    else:
        outer = _rectangle(cfg.width, cfg.length)
        if cfg.kind == "straight":
            holes = ()
        elif cfg.kind == "double_pillar":
            holes = tuple((circle((x, y), r, OBSTACLE_TAG),) for x, y, r in cfg.pillars)
        elif cfg.kind == "obstacles":
            # staggered obstacles at fixed fractions of the channel
            spots = ((0.35, 0.3), (0.65, 0.7))
            holes = tuple(
                (circle((cfg.length * fx, cfg.width * fy), cfg.obstacle_r, OBSTACLE_TAG),)
                for fx, fy in spots
            )
        else:
            raise ValueError(f"unknown geometry kind {cfg.kind!r}")
    return GeometryModel(outer_boundary=outer, holes=holes, size_field=SizeField(cfg.h))


def build_geometry(
    cfg: ScenarioConfig, particles: Optional[Sequence[Disk]] = None
) -> GeometryModel:
    """Channel plus particle disks with refined sizing around them."""
    disks = tuple(particles) if particles is not None else (cfg.particle,)
    channel = build_channel(cfg)
    return GeometryModel(channel.outer_boundary, channel.holes, disks, _sizes(cfg, disks))


def channel_conditions(
    cfg: ScenarioConfig, channel: GeometryModel, u0: Optional[float] = None
) -> FlowBoundaryConditions:
    """Parabolic inflow on the inlet, do-nothing outflow, no-slip elsewhere."""
    inlet = next(c for c in channel.outer_boundary if c.tag == INFLOW_TAG)
    assert isinstance(inlet, LineSegment)
    amplitude = cfg.u0 if u0 is None else u0
    return FlowBoundaryConditions({INFLOW_TAG: segment_inflow(inlet, amplitude)}, (OUTFLOW_TAG,))


# Runs


@dataclass
class ScenarioRun:
    """Outcome of one scenario run, global or local-update."""

    cfg: ScenarioConfig
    loop_result: Optional[TimeLoopResult]
    local_result: Optional[LocalUpdateResult] = None
    elapsed_s: float = 0.0

    @property
    def failed(self) -> bool:
        return self.loop_result is None or self.loop_result.failed

    @property
    def trajectory(self) -> TrajectoryRecord:
        assert self.loop_result is not None
        return self.loop_result.trajectory


def run_scenario(
    cfg: ScenarioConfig,
    *,
    hooks: Sequence[StepHook] = (),
    particle: Optional[Disk] = None,
    u0: Optional[float] = None,
    background: Optional[BackgroundFlow] = None,
) -> ScenarioRun:
    """Run one scenario from rest, on the whole channel or with local updating."""
    start_time = time.time()
    errors = validate_scenario(cfg)
    if errors:
        raise ValueError("; ".join(errors))
    disk = particle or cfg.particle
    channel = build_channel(cfg)
    bcs = channel_conditions(cfg, channel, u0)

    if cfg.local:
        local = run_local_update(
            channel,
            bcs,
            disk,
            cfg.physical_params,
            cfg.loop_config,
            cfg.local_spec,
            thresholds=cfg.thresholds,
            background=background,
            curved=cfg.curved,
            newton=cfg.newton_config,
            options=cfg.assembly_options,
            hooks=hooks,
        )
        run = ScenarioRun(cfg, local.loop_result, local)
    else:
        geometry = build_geometry(cfg, [disk])
        mesh = generate_mesh(geometry, curved=cfg.curved, min_angle=cfg.min_angle)
        spaces = build_spaces(mesh, with_solid=True).with_conditions(bcs)
        problem = FsiProblem(spaces, cfg.physical_params, cfg.newton_config, cfg.assembly_options)
        result = run_time_loop(problem, spaces.initial_state(), cfg.loop_config, hooks=hooks)
        run = ScenarioRun(cfg, result)
    run.elapsed_s = time.time() - start_time
    logger.info(
        f"[RUN] run_scenario(): kind={cfg.kind} local={cfg.local} scheme={cfg.scheme} "
        f"dt={cfg.dt:g} h={cfg.h:g} failed={run.failed} elapsed={run.elapsed_s:.1f}s"
    )
    return run
