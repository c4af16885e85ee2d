#!/usr/bin/env python3
"""Reproduce the double-pillar convergence tables in time and space and check their rates."""

import math
import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import pandas as pd

from ale_fsi.analysis import check_space_tables, check_time_tables, run_convergence_study
from ale_fsi.output import write_convergence_table
from ale_fsi.scenario import ScenarioConfig

# h = 4/100, dt = 3/200 ... 3/800, reference 3/1600
TIME_H = 4.0 / 100.0
TIME_LEVELS = [3.0 / 200.0, 3.0 / 400.0, 3.0 / 800.0]
TIME_REFERENCE = 3.0 / 1600.0

# dt = 3/800, h = 4/100 ... 2/100, reference sqrt(2)/100
SPACE_DT = 3.0 / 800.0
SPACE_LEVELS = [4.0 / 100.0, 2.0 * math.sqrt(2.0) / 100.0, 2.0 / 100.0]
SPACE_REFERENCE = math.sqrt(2.0) / 100.0


def report(title: str, problems: list[str]) -> bool:
    if problems:
        print(f"{title}: FAIL")
        for problem in problems:
            print(f"  - {problem}")
        return False
    print(f"{title}: PASS")
    return True


def run_table(
    cfg: ScenarioConfig, axis: str, levels: list[float], reference: float, path: Path
) -> pd.DataFrame:
    table = run_convergence_study(cfg, axis, levels, reference)
    write_convergence_table(table, path)
    print(table.to_string(index=False))
    print(f"Wrote {path}")
    return table


def main() -> int:
    """Main entry point. Returns 0 when every table is inside its pass window."""
    project_root = Path(__file__).parent.parent
    out_dir = project_root / "data" / "benchmarks"
    out_dir.mkdir(parents=True, exist_ok=True)

    base = ScenarioConfig(kind="double_pillar")
    time_tables = {}
    for scheme in ("fo", "prk2"):
        print(f"Time study, scheme={scheme}...")
        cfg = base.replace(scheme=scheme, h=TIME_H)
        time_tables[scheme] = run_table(
            cfg, "dt", TIME_LEVELS, TIME_REFERENCE, out_dir / f"time_{scheme}.csv"
        )
    time_ok = report("Time tables", check_time_tables(time_tables["fo"], time_tables["prk2"]))

    space_tables = {}
    for curved in (False, True):
        order = 2 if curved else 1
        print(f"Space study, geometry order={order}...")
        cfg = base.replace(scheme="prk2", dt=SPACE_DT, curved=curved)
        space_tables[curved] = run_table(
            cfg, "h", SPACE_LEVELS, SPACE_REFERENCE, out_dir / f"space_order{order}.csv"
        )
    space_ok = report("Space tables", check_space_tables(space_tables[False], space_tables[True]))

    status = 0 if time_ok and space_ok else 1
    print(f"Done! exit status {status}")
    return status


if __name__ == "__main__":
    sys.exit(main())
