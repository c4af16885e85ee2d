"""Command-line entry point: mesh, background, run, converge and demo-spiral."""

import argparse
import logging
import uuid
from pathlib import Path
from typing import Optional, Sequence

from ale_fsi import config
from ale_fsi.analysis import STUDY_AXES, run_convergence_study, run_spiral_demo, spread_decreases
from ale_fsi.ale import identity_map
from ale_fsi.db import delete_background, init_db, insert_remesh_events
from ale_fsi.errors import FsiError
from ale_fsi.fem import build_spaces
from ale_fsi.local_update import background_cache_key, load_or_solve_background
from ale_fsi.mesh import generate_mesh, mesh_quality, write_mesh
from ale_fsi.models import BackgroundFlow
from ale_fsi.output import (
    write_convergence_table,
    write_diagnostics,
    write_remesh_log,
    write_trajectory,
    write_vtk,
)
from ale_fsi.problem import shift_pressure
from ale_fsi.scenario import (
    ScenarioConfig,
    build_channel,
    build_geometry,
    channel_conditions,
    load_scenario,
    run_scenario,
    validate_scenario,
)
from ale_fsi.schemes import SCHEMES
from ale_fsi.timeloop import LoopState, StepEvent, StepHook

logger = logging.getLogger(__name__)


def _common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="scenario INI file")
    parser.add_argument("--dt", type=float, help="time step")
    parser.add_argument("--scheme", choices=sorted(SCHEMES), help="time scheme")
    parser.add_argument(
        "--mesh-order", type=int, choices=(1, 2), help="geometry order: 1 straight-sided, 2 curved"
    )
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--threads", type=int, help="assembly worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ale-fsi",
        description="Monolithic ALE simulations of particles in 2D channels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="generate and report the scenario mesh")
    _common_options(mesh)

    background = sub.add_parser("background", help="solve or load the steady channel flow")
    _common_options(background)
    background.add_argument("--refresh", action="store_true", help="ignore the cached flow")

    run = sub.add_parser("run", help="run one particle simulation")
    _common_options(run)
    run.add_argument("--local", action="store_true", help="use local domain updating")

    converge = sub.add_parser("converge", help="convergence study in dt or h")
    _common_options(converge)
    converge.add_argument("--axis", choices=STUDY_AXES, default="dt")
    converge.add_argument("--levels", type=float, nargs="+", required=True)
    converge.add_argument("--reference", type=float, help="reference level (default: finest)")
    converge.add_argument("--workers", type=int, default=1, help="parallel runs")

    spiral = sub.add_parser("demo-spiral", help="qualitative focusing demo in a spiral channel")
    _common_options(spiral)
    return parser


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    """Scenario from the INI file (or defaults) with command-line overrides applied."""
    cfg = load_scenario(args.config) if args.config else ScenarioConfig()
    changes: dict[str, object] = {}
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.scheme is not None:
        changes["scheme"] = args.scheme
    if args.mesh_order is not None:
        changes["curved"] = args.mesh_order == 2
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    if args.threads is not None:
        changes["threads"] = args.threads
    if getattr(args, "local", False):
        changes["local"] = True
    return cfg.replace(**changes) if changes else cfg


def _out_dir(cfg: ScenarioConfig) -> Path:
    out = Path(cfg.out_dir)
    return out if out.is_absolute() else config.OUTPUT_DIR / out


def _vtk_hook(cfg: ScenarioConfig, out: Path) -> StepHook:
    def hook(event: StepEvent) -> Optional[LoopState]:
        if event.step % cfg.vtk_every == 0:
            path = out / "vtk" / f"step_{event.step:05d}.vtu"
            state = shift_pressure(event.state, event.loop.ale)
            write_vtk(state, event.loop.ale, path, w=event.loop.w)
        return None

    return hook


def _background(cfg: ScenarioConfig, *, refresh: bool = False) -> BackgroundFlow:
    channel = build_channel(cfg)
    bcs = channel_conditions(cfg, channel)
    key = background_cache_key(cfg.background_payload())
    conn = init_db(config.DB_PATH)
    try:
        if refresh and delete_background(conn, key):
            logger.info("Dropped cached background %s", key[:12])
        return load_or_solve_background(
            conn, key, channel, bcs, cfg.physical_params, curved=cfg.curved
        )
    finally:
        conn.close()


def cmd_mesh(cfg: ScenarioConfig) -> int:
    mesh = generate_mesh(build_geometry(cfg), curved=cfg.curved, min_angle=cfg.min_angle)
    quality = mesh_quality(mesh)
    out = _out_dir(cfg)
    write_mesh(mesh, out / "mesh.txt")
    spaces = build_spaces(mesh)
    write_vtk(spaces.zero_state(), identity_map(spaces), out / "mesh.vtu")
    print(f"nodes={mesh.n_nodes} elements={mesh.n_elements} solid={mesh.has_solid}")
    print(f"min_angle={quality.min_angle:.2f} min_detj_ratio={quality.min_detj_ratio:.3f}")
    print(f"written to {out}")
    return 0


def cmd_background(cfg: ScenarioConfig, refresh: bool) -> int:
    bg = _background(cfg, refresh=refresh)
    spaces = build_spaces(bg.mesh)
    state = spaces.zero_state()
    state.u = bg.u
    state.pf = bg.p
    out = _out_dir(cfg)
    write_vtk(state, identity_map(spaces), out / "background.vtu")
    print(f"steady residual={bg.steady_residual:.3e} max speed={bg.max_speed:.4f}")
    return 0


def cmd_run(cfg: ScenarioConfig) -> int:
    out = _out_dir(cfg)
    hooks = [_vtk_hook(cfg, out)] if cfg.vtk_every > 0 else []
    background = _background(cfg) if cfg.local else None
    run = run_scenario(cfg, hooks=hooks, background=background)
    if run.loop_result is None:
        logger.error("run produced no result")
        return 1
    result = run.loop_result
    write_trajectory(result.trajectory, out / "trajectory.csv")
    write_diagnostics(result.trajectory, result.areas, result.velocities, out / "diagnostics.csv")
    if run.local_result is not None:
        write_remesh_log(run.local_result.events, out / "remesh.csv")
        run_id = uuid.uuid4().hex[:12]
        conn = init_db(config.DB_PATH)
        try:
            insert_remesh_events(conn, run_id, run.local_result.events)
        finally:
            conn.close()
        print(f"run_id={run_id} remeshes={len(run.local_result.events)}")
    print(
        f"steps={result.steps_done} newton={result.newton_iterations} "
        f"retries={result.retries} elapsed={run.elapsed_s:.1f}s"
    )
    if result.failed:
        logger.error(f"run failed: {result.message}")
        return 1
    return 0


def cmd_converge(
    cfg: ScenarioConfig,
    axis: str,
    levels: Sequence[float],
    reference: Optional[float],
    workers: int,
) -> int:
    table = run_convergence_study(cfg, axis, levels, reference, workers=workers)
    path = _out_dir(cfg) / f"convergence_{axis}_{cfg.scheme}.csv"
    write_convergence_table(table, path)
    print(table.to_string(index=False))
    print(f"written to {path}")
    return 0


def cmd_demo_spiral(cfg: ScenarioConfig) -> int:
    table, trajectories = run_spiral_demo(cfg)
    out = _out_dir(cfg)
    write_trajectory(trajectories, out / "spiral_trajectories.csv")
    write_convergence_table(table, out / "spiral_spread.csv", note="qualitative")
    print(table.to_string(index=False))
    print(f"spread decreases with flux: {spread_decreases(table)}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=config.LOG_LEVEL if config.LOG_LEVEL in logging.getLevelNamesMapping() else "INFO",
    )
    errors = config.validate_config()
    if errors:
        for error in errors:
            logger.error(error)
        raise SystemExit(1)

    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (OSError, ValueError) as e:
        logger.error(f"cannot read scenario: {e}")
        return 2
    problems = validate_scenario(cfg)
    if problems:
        for problem in problems:
            logger.error(problem)
        return 2

    try:
        if args.command == "mesh":
            return cmd_mesh(cfg)
        if args.command == "background":
            return cmd_background(cfg, args.refresh)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "converge":
            return cmd_converge(cfg, args.axis, args.levels, args.reference, args.workers)
        return cmd_demo_spiral(cfg)
    except FsiError as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
