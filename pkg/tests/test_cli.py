import dataclasses

import numpy as np
import pytest

from micpsim.cli import main
from micpsim.config import format_config, parse_config, preset
from micpsim.grid import build_domain
from micpsim.vtkio import read_snapshot_field, read_timeseries


@pytest.fixture
def tiny_config(tmp_path):
    """A seconds-scale variant of the 1D layout for CLI round trips."""
    cfg = preset("ex1")
    periods = cfg.schedule.periods
    short = tuple(dataclasses.replace(p, end_time=p.end_time / 100.0)
                  for p in periods)
    cfg = dataclasses.replace(
        cfg,
        domain=dataclasses.replace(cfg.domain, nx=20, dx=5.0),
        reservoir=dataclasses.replace(cfg.reservoir, well_x=2.5),
        leak=dataclasses.replace(cfg.leak, anchor_x=12.5),
        schedule=dataclasses.replace(cfg.schedule, periods=short),
        co2=dataclasses.replace(cfg.co2, duration=3600.0),
        outputs=dataclasses.replace(cfg.outputs, out_dir=str(tmp_path / "out"),
                                    snapshot_cadence=36000.0),
        solver=dataclasses.replace(cfg.solver, dt_max=3600.0),
    )
    path = tmp_path / "tiny.cfg"
    path.write_text(format_config(cfg))
    return path, cfg


class TestPresetCommand:
    def test_preset_round_trips(self, capsys):
        assert main(["preset", "ex1"]) == 0
        text = capsys.readouterr().out
        assert parse_config(text) == preset("ex1")

    def test_unknown_preset_is_usage_error(self, capsys):
        assert main(["preset", "ex7"]) == 2


class TestRunMicp:
    def test_run_and_outputs(self, tiny_config, capsys, tmp_path):
        path, cfg = tiny_config
        assert main(["run-micp", str(path)]) == 0
        out = capsys.readouterr().out
        assert "ledger" in out
        assert "min K/K0" in out
        out_dir = tmp_path / "out"
        finals = list(out_dir.glob("micp_final.vtk"))
        assert finals
        assert (out_dir / "micp_diagnostics.csv").exists()
        t, cols = read_timeseries(out_dir / "micp_diagnostics.csv")
        assert t.size > 0
        assert "newton_iterations" in cols

    def test_missing_config_file(self, capsys):
        assert main(["run-micp", "/does/not/exist.cfg"]) == 2

    def test_invalid_config(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("[kinetics]\nrho_b = frog\n")
        assert main(["run-micp", str(path)]) == 2
        assert "error: config" in capsys.readouterr().err

    def test_solver_failure_exit_code(self, tmp_path, capsys):
        cfg = preset("ex1")
        cfg = dataclasses.replace(
            cfg,
            domain=dataclasses.replace(cfg.domain, nx=10, dx=10.0),
            reservoir=dataclasses.replace(cfg.reservoir, well_x=5.0),
            leak=None,
            solver=dataclasses.replace(cfg.solver, newton_max_iter=1,
                                       dt_init=3600.0, dt_min=3600.0,
                                       dt_max=3600.0),
            outputs=dataclasses.replace(cfg.outputs,
                                        out_dir=str(tmp_path / "out")),
        )
        path = tmp_path / "fail.cfg"
        path.write_text(format_config(cfg))
        assert main(["run-micp", str(path)]) == 3
        assert "solver-failure" in capsys.readouterr().err
        assert (tmp_path / "out" / "micp_last_good.vtk").exists()


class TestRunCo2:
    def test_missing_snapshot_path(self, tiny_config, capsys):
        path, _ = tiny_config
        assert main(["run-co2", str(path), "--perm-from", "/nope.vtk"]) == 2

    def test_untreated_then_treated(self, tiny_config, capsys, tmp_path):
        path, cfg = tiny_config
        assert main(["run-micp", str(path)]) == 0
        capsys.readouterr()
        assert main(["run-co2", str(path)]) == 0
        out = capsys.readouterr().out
        assert "peak normalized leakage flux" in out
        out_dir = tmp_path / "out"
        snap = out_dir / "micp_final.vtk"
        assert main(["run-co2", str(path), "--perm-from", str(snap)]) == 0
        assert (out_dir / "co2_final_treated.vtk").exists()
        # the treated permeability actually differs from the pristine field
        grid = build_domain(cfg.domain, cfg.leak, cfg.reservoir, cfg.rock)
        K = read_snapshot_field(snap, "K", grid)
        assert np.any(K < grid.perm0)


class TestVerify:
    def test_verify_passes(self, capsys):
        assert main(["verify", "--seed", "3"]) == 0
        out = capsys.readouterr().out
        assert "all checks passed" in out
        assert out.count("PASS") >= 7


class TestDeterminism:
    def test_identical_runs_identical_csv_bytes(self, tiny_config, tmp_path,
                                                capsys):
        path, _ = tiny_config
        assert main(["run-micp", str(path), "--out", str(tmp_path / "a")]) == 0
        assert main(["run-micp", str(path), "--out", str(tmp_path / "b")]) == 0
        csv_a = (tmp_path / "a" / "micp_diagnostics.csv").read_bytes()
        csv_b = (tmp_path / "b" / "micp_diagnostics.csv").read_bytes()
        assert csv_a == csv_b
        vtk_a = (tmp_path / "a" / "micp_final.vtk").read_bytes()
        vtk_b = (tmp_path / "b" / "micp_final.vtk").read_bytes()
        assert vtk_a == vtk_b


class TestUsage:
    def test_no_command(self, capsys):
        assert main([]) == 2

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 2
