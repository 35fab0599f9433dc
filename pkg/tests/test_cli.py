"""Tests for the command-line interface."""

import io
import json
import logging
import sys

import pytest

from cli import create_parser, main
from core import EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, configure_logging


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


class TestParser:
    """Argument parsing"""

    def test_global_flags_after_subcommand(self):
        args = create_parser().parse_args(["optimize", "s.json", "--out", "x", "--format", "csv"])
        assert args.scenario_path == "s.json"
        assert args.out == "x"
        assert args.format == "csv"

    def test_global_flags_before_subcommand(self):
        args = create_parser().parse_args(["--out", "y", "invert", "--k", "1", "--mu", "1", "--u", "0.5"])
        assert args.out == "y"
        assert args.format == "json"

    def test_lambda_flag(self):
        args = create_parser().parse_args(["uniform", "--k", "1", "--mu", "1", "--lambda", "0.5", "--degree", "4"])
        assert args.lam == 0.5

    def test_missing_required_flag(self):
        with pytest.raises(SystemExit) as info:
            main(["invert", "--k", "2"])
        assert info.value.code == 2

    def test_bad_format(self):
        with pytest.raises(SystemExit) as info:
            main(["invert", "--k", "2", "--mu", "1", "--u", "0.4", "--format", "xml"])
        assert info.value.code == 2


class TestInlineCommands:
    """invert and uniform"""

    def test_invert(self, tmp_path, capsys):
        code, out, _ = run(capsys, "invert", "--k", "2", "--mu", "1", "--u", "0.4", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert "y = 1.000000" in out
        payload = json.loads((tmp_path / "invert.json").read_text(encoding="utf-8"))
        assert payload["result"]["y"] == pytest.approx(1.0, abs=1e-9)
        assert payload["command"] == "invert"
        meta = json.loads((tmp_path / "invert.meta.json").read_text(encoding="utf-8"))
        assert meta["argv"][:3] == ["invert", "--k", "2"]

    def test_invert_csv(self, tmp_path, capsys):
        code, _, _ = run(capsys, "invert", "--k", "1", "--mu", "1", "--u", "0.5",
                         "--out", str(tmp_path), "--format", "csv")
        assert code == EXIT_OK
        text = (tmp_path / "invert.csv").read_text(encoding="utf-8")
        assert text.startswith("key,value\n")
        assert "result.y,1.0\n" in text

    def test_uniform(self, tmp_path, capsys):
        code, out, _ = run(capsys, "uniform", "--k", "1", "--mu", "1", "--lambda", "0.5", "--degree", "4",
                           "--out", str(tmp_path))
        assert code == EXIT_OK
        assert "y = 1.000000" in out
        assert "x = 0.125000" in out

    def test_occupancy_above_cap(self, tmp_path, capsys):
        code, _, err = run(capsys, "invert", "--k", "2", "--mu", "1", "--u", "0.9995", "--out", str(tmp_path))
        assert code == EXIT_VALIDATION
        assert "Error:" in err
        assert "exceeds the cap" in err
        assert not (tmp_path / "invert.json").exists()

    def test_unstable_uniform(self, tmp_path, capsys):
        code, _, err = run(capsys, "uniform", "--k", "2", "--mu", "1", "--lambda", "2", "--degree", "3",
                           "--out", str(tmp_path))
        assert code == EXIT_NUMERIC
        assert "Error:" in err


class TestScenarioCommands:
    """Commands that read a scenario file"""

    def test_scenario_required(self, tmp_path, capsys):
        code, _, err = run(capsys, "optimize", "--out", str(tmp_path))
        assert code == EXIT_VALIDATION
        assert "scenario file is required" in err

    def test_network_needs_direction(self, tmp_path, capsys):
        code, _, err = run(capsys, "network", "--out", str(tmp_path))
        assert code == EXIT_VALIDATION
        assert "network solve" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "optimize", str(tmp_path / "absent.json"), "--out", str(tmp_path))
        assert code == EXIT_VALIDATION
        assert "cannot read" in err

    def test_network_estimate(self, tmp_path, capsys, mission_path):
        code, out, _ = run(capsys, "network", "estimate", str(mission_path), "--out", str(tmp_path))
        assert code == EXIT_OK
        assert "Mode: estimate" in out
        assert "mission_18th:" in out
        payload = json.loads((tmp_path / "network_estimate.json").read_text(encoding="utf-8"))
        assert payload["flows"]["mode"] == "estimate"
        assert len(payload["flows"]["blocks"]) == 12

    def test_scenario_flag(self, tmp_path, capsys, mission_path):
        code, _, _ = run(capsys, "optimize", "--scenario", str(mission_path), "--out", str(tmp_path))
        assert code == EXIT_OK
        assert (tmp_path / "optimize.json").exists()
        assert (tmp_path / "optimize.meta.json").exists()

    def test_infeasible_cap(self, tmp_path, capsys):
        scenario = write_json(tmp_path / "scenario.json", {
            "blocks": [
                {"id": "a", "k": 2, "mu": 1.0, "observed_u": 0.6, "price": 2.0, "cap": 0.0},
                {"id": "b", "k": 2, "mu": 1.0, "observed_u": 0.4, "price": 2.0},
            ],
            "edges": [{"from": "a", "to": "b"}, {"from": "b", "to": "a"}],
            "elasticity": {"alpha": 0.1, "p_max": 5.0},
        })
        code, _, err = run(capsys, "optimize", scenario, "--out", str(tmp_path / "out"))
        assert code == EXIT_NUMERIC
        assert "block 'a'" in err
        assert "infeasible" in err

    def test_schema_error(self, tmp_path, capsys):
        scenario = write_json(tmp_path / "scenario.json", {"blocks": [], "edges": [], "colour": "red"})
        code, _, err = run(capsys, "network", "solve", scenario, "--out", str(tmp_path))
        assert code == EXIT_VALIDATION
        assert "colour" in err

    def test_plot_arrival_curves(self, tmp_path, capsys, mission_path):
        code, out, _ = run(capsys, "plot", str(mission_path), "--kind", "arrival_curves", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert "Wrote 1 files" in out
        assert (tmp_path / "arrival_curves.csv").exists()

    def test_plot_all(self, tmp_path, capsys, mission_path):
        code, _, _ = run(capsys, "plot", str(mission_path), "--out", str(tmp_path))
        assert code == EXIT_OK
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["arrival_curves.csv", "before_after.csv", "cruising_share.csv"]

    def test_bad_service_distribution(self, tmp_path, capsys, ring4_path):
        code, _, err = run(capsys, "simulate", str(ring4_path), "--service", "lognormal:abc", "--out", str(tmp_path))
        assert code == EXIT_VALIDATION
        assert "coefficient of variation" in err

    @pytest.mark.slow
    def test_simulate_overrides(self, tmp_path, capsys, ring4_path):
        code, out, _ = run(capsys, "simulate", str(ring4_path), "--horizon", "300", "--warmup", "50",
                           "--seed", "3", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert "from seed 3" in out
        payload = json.loads((tmp_path / "simulate.json").read_text(encoding="utf-8"))
        assert payload["simulation"]["seed"] == 3
        assert payload["simulation"]["balanced"] is True


class TestLogging:
    """Log handler bound to the current stderr"""

    def test_rebinds_after_stderr_closed(self, monkeypatch):
        first = io.StringIO()
        monkeypatch.setattr(sys, "stderr", first)
        configure_logging("WARNING")
        first.close()

        second = io.StringIO()
        monkeypatch.setattr(sys, "stderr", second)
        configure_logging("WARNING")
        logging.getLogger("core.network").warning("still logging")
        assert "still logging" in second.getvalue()
        handlers = [h for h in logging.getLogger("core").handlers if getattr(h, "_curbflow", False)]
        assert len(handlers) == 1

    def test_level_from_environment(self, monkeypatch):
        monkeypatch.setenv("CURBFLOW_LOG", "debug")
        assert configure_logging() == logging.DEBUG
        monkeypatch.setenv("CURBFLOW_LOG", "chatty")
        assert configure_logging() == logging.WARNING

    def test_consecutive_commands(self, tmp_path, capsys):
        for _ in range(2):
            code, out, _ = run(capsys, "invert", "--k", "2", "--mu", "1", "--u", "0.4", "--out", str(tmp_path))
            assert code == EXIT_OK
            assert "y = 1.000000" in out
