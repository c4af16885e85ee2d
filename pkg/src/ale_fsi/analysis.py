"""Trajectory errors, observed convergence rates and convergence studies."""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from ale_fsi.errors import EmptyTrajectory, NonPositiveError
from ale_fsi.geometry import Disk
from ale_fsi.local_update import solve_background_steady
from ale_fsi.models import BackgroundFlow, TrajectoryRecord
from ale_fsi.scenario import (
    ScenarioConfig,
    build_channel,
    channel_conditions,
    run_scenario,
    spiral_release_points,
    spiral_station_angle,
)

logger = logging.getLogger(__name__)

STUDY_AXES = ("dt", "h")


@dataclass(frozen=True)
class TrajectoryError:
    """Vertical-position error of a trajectory against a reference."""

    max_error: float  # max over the common times
    at_t_star: float  # at t*, nan when t* is outside both series
    t_star: float


def trajectory_error(
    traj: TrajectoryRecord, ref: TrajectoryRecord, t_star: Optional[float] = None
) -> TrajectoryError:
    """Compare vertical centroid positions, the reference interpolated linearly to traj times.

    Raises:
        EmptyTrajectory: either series has no records.
    """
    if traj.is_empty or ref.is_empty:
        raise EmptyTrajectory("cannot compare an empty trajectory")
    t = np.asarray(traj.t)
    ref_t = np.asarray(ref.t)
    inside = (t >= ref_t[0] - 1e-12) & (t <= ref_t[-1] + 1e-12)
    if not np.any(inside):
        raise EmptyTrajectory("trajectories share no time interval")
    y_ref = np.interp(t[inside], ref_t, np.asarray(ref.y))
    diff = np.abs(np.asarray(traj.y)[inside] - y_ref)

    at_star = math.nan
    star = float(t_star) if t_star is not None else math.nan
    lo, hi = max(t[0], ref_t[0]) - 1e-12, min(t[-1], ref_t[-1]) + 1e-12
    if t_star is not None and lo <= t_star <= hi:
        y_h = float(np.interp(t_star, t, np.asarray(traj.y)))
        y_r = float(np.interp(t_star, ref_t, np.asarray(ref.y)))
        at_star = abs(y_h - y_r)
    return TrajectoryError(float(diff.max()), at_star, star)


def convergence_rate(errors: Sequence[float], steps: Sequence[float]) -> list[float]:
    """Observed orders ln(E_k / E_k+1) / ln(s_k / s_k+1).

    Raises:
        NonPositiveError: an error or step is not positive.
        ValueError: lengths differ or steps do not strictly decrease.
    """
    if len(errors) != len(steps):
        raise ValueError(f"{len(errors)} errors for {len(steps)} steps")
    if any(not e > 0 for e in errors) or any(not s > 0 for s in steps):
        raise NonPositiveError("errors and steps must be positive")
    if any(b >= a for a, b in zip(steps[:-1], steps[1:])):
        raise ValueError("steps must strictly decrease")
    return [
        math.log(errors[k] / errors[k + 1]) / math.log(steps[k] / steps[k + 1])
        for k in range(len(errors) - 1)
    ]


Runner = Callable[[ScenarioConfig], TrajectoryRecord]


def default_runner(cfg: ScenarioConfig) -> TrajectoryRecord:
    run = run_scenario(cfg)
    if run.failed:
        assert run.loop_result is not None
        raise RuntimeError(f"run dt={cfg.dt:g} h={cfg.h:g} failed: {run.loop_result.message}")
    return run.trajectory


def _level_config(base: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "dt":
        return base.replace(dt=value)
    return base.replace(h=value, particle_h=0.0)


def run_convergence_study(
    base: ScenarioConfig,
    axis: str,
    levels: Sequence[float],
    reference_level: Optional[float] = None,
    *,
    runner: Runner = default_runner,
    workers: int = 1,
) -> pd.DataFrame:
    """Run the scenario at each level and tabulate errors and rates.

    The reference is reference_level when given, otherwise the finest level
    (which then gets no row of its own). Columns: level, max_error, rate_max,
    error_t_star, rate_t_star.
    """
    if axis not in STUDY_AXES:
        raise ValueError(f"axis must be one of {STUDY_AXES}, got {axis!r}")
    ordered = sorted(levels, reverse=True)
    if reference_level is None:
        if len(ordered) < 3:
            raise ValueError("a study needs at least 3 levels")
        reference_level, ordered = ordered[-1], ordered[:-1]
    elif len(ordered) < 2:
        raise ValueError("a study needs at least 2 levels besides the reference")

    start_time = time.time()
    configs = [_level_config(base, axis, v) for v in [*ordered, reference_level]]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(runner, configs))
    else:
        trajectories = [runner(c) for c in configs]
    reference = trajectories[-1]

    errors = [trajectory_error(t, reference, base.t_star) for t in trajectories[:-1]]
    max_errors = [e.max_error for e in errors]
    star_errors = [e.at_t_star for e in errors]
    table = pd.DataFrame(
        {
            "level": ordered,
            "max_error": max_errors,
            "rate_max": [math.nan, *_safe_rates(max_errors, ordered)],
            "error_t_star": star_errors,
            "rate_t_star": [math.nan, *_safe_rates(star_errors, ordered)],
        }
    )
    table.attrs.update(axis=axis, reference=reference_level, scheme=base.scheme, curved=base.curved)
    elapsed_ms = (time.time() - start_time) * 1000
    logger.info(
        f"[STUDY] run_convergence_study(): axis={axis} levels={len(ordered)} "
        f"reference={reference_level:g} elapsed={elapsed_ms:.0f}ms"
    )
    return table


def _safe_rates(errors: list[float], steps: list[float]) -> list[float]:
    try:
        return convergence_rate(errors, steps)
    except (NonPositiveError, ValueError):
        logger.warning(f"[STUDY] rates undefined for errors {errors}")
        return [math.nan] * (len(errors) - 1)


SpiralRunner = Callable[[ScenarioConfig, Disk, float], Optional[TrajectoryRecord]]


def _spiral_runner() -> SpiralRunner:
    """Local-update runs sharing one background flow per inflow amplitude.

    A run that aborts yields None.
    """
    backgrounds: dict[float, BackgroundFlow] = {}

    def run(cfg: ScenarioConfig, particle: Disk, u0: float) -> Optional[TrajectoryRecord]:
        channel = build_channel(cfg)
        bcs = channel_conditions(cfg, channel, u0)
        if u0 not in backgrounds:
            backgrounds[u0] = solve_background_steady(
                channel, bcs, cfg.physical_params, curved=cfg.curved, newton=cfg.newton_config
            )
        result = run_scenario(cfg, particle=particle, u0=u0, background=backgrounds[u0])
        if result.failed:
            message = result.loop_result.message if result.loop_result else "no result"
            x, y = particle.center
            logger.warning(f"[SPIRAL] u0={u0:g} particle at ({x:.3f}, {y:.3f}) failed: {message}")
            return None
        return result.trajectory

    return run


def radius_at_angle(traj: TrajectoryRecord, phi: float) -> Optional[float]:
    """Distance from the origin where the path first reaches polar angle phi.

    Angles are unwrapped along the path and counted counterclockwise from +x,
    so phi may exceed pi. None when the path never gets there.
    """
    if traj.is_empty:
        return None
    x, y = np.asarray(traj.x), np.asarray(traj.y)
    theta = np.unwrap(np.arctan2(y, x))
    if theta[0] < 0.0:
        theta += 2.0 * math.pi
    r = np.hypot(x, y)
    hits = np.flatnonzero(theta >= phi)
    if hits.size == 0:
        return None
    k = int(hits[0])
    if k == 0:
        return float(r[0])
    s = (phi - theta[k - 1]) / (theta[k] - theta[k - 1])
    return float(r[k - 1] + s * (r[k] - r[k - 1]))


def run_spiral_demo(
    cfg: ScenarioConfig, *, runner: Optional[SpiralRunner] = None
) -> tuple[pd.DataFrame, list[TrajectoryRecord]]:
    """Release particles across the spiral inlet at each flux level.

    Particles run one at a time. The spread of a flux level is the standard
    deviation of the radii at which the particles cross the measuring station
    near the end of the loop. Failed runs and particles that never reach the
    station are left out. Results are qualitative.
    """
    cfg = cfg.replace(kind="spiral", local=True)
    run = runner or _spiral_runner()
    station = spiral_station_angle(cfg)
    rows = []
    trajectories: list[TrajectoryRecord] = []
    for level, flux in enumerate(cfg.spiral_fluxes):
        radii = []
        for k, particle in enumerate(spiral_release_points(cfg)):
            traj = run(cfg, particle, cfg.u0 * flux)
            if traj is None or traj.is_empty:
                logger.warning(f"[SPIRAL] flux={flux:g} particle={k} produced no trajectory")
                continue
            traj.particle = level * cfg.spiral_particles + k
            trajectories.append(traj)
            radius = radius_at_angle(traj, station)
            if radius is None:
                logger.warning(
                    f"[SPIRAL] flux={flux:g} particle={k} did not reach "
                    f"{math.degrees(station):.1f} deg"
                )
                continue
            radii.append(radius)
        rows.append(
            {
                "flux": flux,
                "particles": len(radii),
                "spread": float(np.std(radii)) if radii else math.nan,
                "qualitative": True,
            }
        )
        logger.info(f"[SPIRAL] flux={flux:g} spread={rows[-1]['spread']:.4e}")
    return pd.DataFrame(rows), trajectories


def spread_decreases(table: pd.DataFrame) -> bool:
    """True when the spread falls strictly as the flux grows."""
    ordered = table.sort_values("flux")["spread"].to_numpy()
    return bool(np.all(np.diff(ordered) < 0))


# Pass windows of the double-pillar benchmark tables
FO_RATE_WINDOW = (0.9, 1.7)
PRK2_RATE_WINDOW = (1.7, 2.4)
CURVED_ERROR_FACTOR = 2.0
CURVED_RATE_MARGIN = 0.3


def _columns(metric: str) -> tuple[str, str]:
    if metric == "max":
        return "max_error", "rate_max"
    if metric == "t_star":
        return "error_t_star", "rate_t_star"
    raise ValueError(f"metric must be 'max' or 't_star', got {metric!r}")


def _rate_problems(
    name: str, table: pd.DataFrame, rate_col: str, window: tuple[float, float]
) -> list[str]:
    rates = table[rate_col].dropna().tolist()
    if not rates:
        return [f"{name}: no observed rates"]
    lo, hi = window
    return [f"{name}: rate {r:.3f} outside [{lo}, {hi}]" for r in rates if not lo <= r <= hi]


def check_time_tables(fo: pd.DataFrame, prk2: pd.DataFrame, metric: str = "max") -> list[str]:
    """Problems with the time tables: rate windows, and PRK2 below FO at every dt."""
    error_col, rate_col = _columns(metric)
    problems = _rate_problems("fo", fo, rate_col, FO_RATE_WINDOW)
    problems += _rate_problems("prk2", prk2, rate_col, PRK2_RATE_WINDOW)
    both = fo.merge(prk2, on="level", suffixes=("_fo", "_prk2"))
    if both.empty:
        problems.append("fo and prk2 tables share no dt level")
    for _, row in both.iterrows():
        e_fo, e_prk2 = row[f"{error_col}_fo"], row[f"{error_col}_prk2"]
        if not e_prk2 < e_fo:
            problems.append(f"dt={row['level']:g}: prk2 error {e_prk2:.3e} >= fo {e_fo:.3e}")
    return problems


def check_space_tables(
    straight: pd.DataFrame, curved: pd.DataFrame, metric: str = "max"
) -> list[str]:
    """Problems with the mesh tables: curved error and mean rate beat straight by a margin."""
    error_col, rate_col = _columns(metric)
    problems: list[str] = []
    both = straight.merge(curved, on="level", suffixes=("_straight", "_curved"))
    if both.empty:
        problems.append("straight and curved tables share no h level")
    for _, row in both.iterrows():
        e_s, e_c = row[f"{error_col}_straight"], row[f"{error_col}_curved"]
        if not e_c * CURVED_ERROR_FACTOR <= e_s:
            problems.append(
                f"h={row['level']:g}: curved error {e_c:.3e} not {CURVED_ERROR_FACTOR:g}x "
                f"below straight {e_s:.3e}"
            )
    mean_s = straight[rate_col].dropna().mean()
    mean_c = curved[rate_col].dropna().mean()
    if not mean_c - mean_s >= CURVED_RATE_MARGIN:
        problems.append(
            f"mean curved rate {mean_c:.3f} not {CURVED_RATE_MARGIN:g} above straight {mean_s:.3f}"
        )
    return problems
