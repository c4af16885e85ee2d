"""Tests for the command-line entry point."""

from pathlib import Path
from unittest.mock import MagicMock, patch

import pandas as pd
import pytest

from ale_fsi import cli
from ale_fsi.errors import MeshTangled
from ale_fsi.models import TrajectoryRecord
from ale_fsi.scenario import ScenarioConfig, save_scenario


class TestResolveConfig:
    def test_defaults(self) -> None:
        args = cli.build_parser().parse_args(["run"])
        assert cli.resolve_config(args) == ScenarioConfig()

    def test_overrides(self, tmp_path: Path) -> None:
        args = cli.build_parser().parse_args(
            [
                "run",
                "--dt", "0.01",
                "--scheme", "prk2",
                "--mesh-order", "1",
                "--local",
                "--threads", "2",
                "--out", str(tmp_path),
            ]
        )
        cfg = cli.resolve_config(args)
        assert cfg.dt == 0.01
        assert cfg.scheme == "prk2"
        assert not cfg.curved
        assert cfg.local
        assert cfg.threads == 2
        assert cfg.out_dir == str(tmp_path)

    def test_file_then_overrides(self, tmp_path: Path) -> None:
        path = tmp_path / "scenario.ini"
        save_scenario(ScenarioConfig(kind="straight", re=5.0, dt=0.02), path)
        args = cli.build_parser().parse_args(["mesh", "--config", str(path), "--dt", "0.01"])
        cfg = cli.resolve_config(args)
        assert cfg.kind == "straight"
        assert cfg.re == 5.0
        assert cfg.dt == 0.01

    def test_converge_options(self) -> None:
        args = cli.build_parser().parse_args(
            ["converge", "--axis", "h", "--levels", "0.08", "0.04", "0.02", "--workers", "3"]
        )
        assert args.axis == "h"
        assert args.levels == [0.08, 0.04, 0.02]
        assert args.reference is None
        assert args.workers == 3


class TestMain:
    def test_unknown_scheme_exits(self) -> None:
        with pytest.raises(SystemExit) as exc_info:
            cli.main(["run", "--scheme", "rk4"])
        assert exc_info.value.code == 2

    def test_invalid_scenario(self) -> None:
        assert cli.main(["run", "--dt", "-1"]) == 2

    def test_missing_config_file(self, tmp_path: Path) -> None:
        assert cli.main(["run", "--config", str(tmp_path / "missing.ini")]) == 2

    def test_mesh_command(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        path = tmp_path / "scenario.ini"
        save_scenario(ScenarioConfig(kind="straight", h=0.25), path)
        assert cli.main(["mesh", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "mesh.txt").exists()
        assert (tmp_path / "out" / "mesh.vtu").exists()
        assert "min_angle=" in capsys.readouterr().out

    def test_solver_error_returns_one(self, monkeypatch: pytest.MonkeyPatch) -> None:
        def tangled(cfg: ScenarioConfig) -> int:
            raise MeshTangled("ALE Jacobian -1.0 <= 0 in element 3")

        monkeypatch.setattr(cli, "cmd_mesh", tangled)
        assert cli.main(["mesh"]) == 1

    @patch("ale_fsi.cli.run_convergence_study")
    def test_converge_writes_table(self, mock_study: MagicMock, tmp_path: Path) -> None:
        table = pd.DataFrame({"level": [0.02, 0.01], "max_error": [4e-4, 1e-4]})
        table.attrs.update(axis="dt")
        mock_study.return_value = table

        code = cli.main(
            [
                "converge",
                "--levels", "0.02", "0.01", "0.005",
                "--scheme", "prk2",
                "--out", str(tmp_path),
            ]
        )

        assert code == 0
        cfg, axis, levels, reference = mock_study.call_args.args
        assert cfg.scheme == "prk2"
        assert (axis, levels, reference) == ("dt", [0.02, 0.01, 0.005], None)
        assert (tmp_path / "convergence_dt_prk2.csv").read_text().startswith("# axis=dt\n")

    @patch("ale_fsi.cli.run_spiral_demo")
    def test_demo_spiral_writes_outputs(
        self, mock_demo: MagicMock, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        table = pd.DataFrame({"flux": [1.0, 3.0], "particles": [5, 5], "spread": [0.2, 0.1]})
        mock_demo.return_value = (table, [TrajectoryRecord(t=[0.1], x=[1.0], y=[0.2], particle=3)])

        assert cli.main(["demo-spiral", "--out", str(tmp_path)]) == 0
        assert "spread decreases with flux: True" in capsys.readouterr().out
        assert (tmp_path / "spiral_trajectories.csv").exists()
        assert "# note=qualitative" in (tmp_path / "spiral_spread.csv").read_text()
