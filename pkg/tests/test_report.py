"""Tests for report orchestration, normalization and output files."""

import csv
import json
import math

import numpy as np
import pytest

from core import (
    OutputFormat,
    PlotKind,
    Report,
    ReportError,
    Scenario,
    SolveMode,
    StreetGraph,
    build_report,
    emit_plot_data,
    invert_summary,
    parse_scenario,
    report_payload,
    uniform_summary,
    write_output,
)
from core.inversion import default_curve_grid
from core.report import normalize, render_payload, solve_network

PAIR = {
    "name": "pair",
    "blocks": [
        {"id": "a", "k": 2, "mu": 1.0, "lambda": 0.5, "observed_u": 0.6, "price": 2.0, "through_traffic": 20.0},
        {"id": "b", "k": 2, "mu": 1.0, "lambda": 0.5, "observed_u": 0.4, "price": 2.0},
    ],
    "edges": [{"from": "a", "to": "b"}, {"from": "b", "to": "a"}],
    "elasticity": {"value": -0.4, "anchor": True, "p_min": 0.5, "p_max": 10.0},
}


@pytest.fixture
def pair():
    return parse_scenario(json.loads(json.dumps(PAIR)))


@pytest.fixture
def empty():
    return Scenario(name="empty", blocks=[], graph=StreetGraph(nodes=[], edges=[]))


class TestSummaries:
    """Inline-flag commands"""

    def test_invert(self):
        result = invert_summary(2, 1.0, 0.4)
        assert result["y"] == pytest.approx(1.0, abs=1e-9)
        assert result["blocking"] == pytest.approx(0.2, abs=1e-9)
        assert result["dy_du"] > 0
        assert result["d2y_du2"] > 0

    def test_invert_zero_occupancy(self):
        result = invert_summary(3, 1.0, 0.0)
        assert result["y"] == 0.0
        assert result["dy_du"] is None

    def test_uniform(self):
        result = uniform_summary(1, 1.0, 0.5, 4)
        assert result["y"] == pytest.approx(1.0, abs=1e-10)
        assert result["x"] == pytest.approx(0.125, abs=1e-10)
        assert result["blocking"] == pytest.approx(0.5, abs=1e-10)
        assert result["residual"] < 1e-10


class TestNormalize:
    """JSON-ready values"""

    def test_rounds_to_twelve_digits(self):
        assert normalize(1 / 3) == 0.333333333333
        assert normalize(2.0 / 3.0 * 1e6) == 666666.666667

    @pytest.mark.parametrize("value", [math.inf, -math.inf, math.nan])
    def test_non_finite_to_none(self, value):
        assert normalize(value) is None

    def test_containers(self):
        value = {("a", "b"): np.float64(0.1), "mode": SolveMode.FORWARD, "flags": (True, 3, None)}
        assert normalize(value) == {"a->b": 0.1, "mode": "forward", "flags": [True, 3, None]}

    def test_render_is_deterministic(self):
        payload = normalize({"b": 1.0, "a": {"d": [1, 2], "c": "x"}})
        text = render_payload(payload)
        assert text == render_payload(dict(reversed(list(payload.items()))))
        assert text.index('"a"') < text.index('"b"')

    def test_render_csv_flattens(self):
        text = render_payload({"a": {"b": 1.5}, "c": [1, 2], "d": [{"e": 1}]}, OutputFormat.CSV)
        rows = list(csv.reader(text.splitlines()))
        assert rows[0] == ["key", "value"]
        assert ["a.b", "1.5"] in rows
        assert ["c", "[1, 2]"] in rows
        assert ["d[0].e", "1"] in rows


class TestBuildReport:
    """Solve orchestration"""

    def test_auto_mode_prefers_estimation(self, pair):
        report = build_report(pair, "network")
        assert report.flows.mode is SolveMode.ESTIMATE
        assert set(report.cruising) == {"a"}
        assert report.summary["total_rejection"] == pytest.approx(report.flows.total_rejection)

    def test_forward_mode(self, pair):
        report = build_report(pair, "network", mode=SolveMode.FORWARD)
        assert report.flows.mode is SolveMode.FORWARD
        assert report.flows.converged

    def test_needs_rates_or_occupancies(self):
        data = json.loads(json.dumps(PAIR))
        del data["blocks"][0]["lambda"]
        del data["blocks"][1]["observed_u"]
        with pytest.raises(ReportError, match="observed_u"):
            solve_network(parse_scenario(data))

    def test_empty_scenario(self, empty):
        with pytest.raises(ReportError, match="no blocks"):
            build_report(empty, "report")

    def test_pricing_summary(self, pair):
        report = build_report(pair, "optimize", optimize=True)
        pricing = report.summary["pricing"]
        assert pricing["priced_blocks"] == 2
        assert pricing["capped_blocks"] == []
        # No caps: the optimizer drops both prices to the floor of the range
        assert report.pricing.prices["a"] == pytest.approx(0.5)
        assert pricing["price_changes"]["a"] == pytest.approx(-1.5)
        assert pricing["serviced_after"] > pricing["serviced_before"]

    def test_uniform_cap_recorded(self, pair):
        report = build_report(pair, "optimize", optimize=True, uniform_cap=0.05)
        assert report.summary["uniform_cap"] == 0.05
        assert report.pricing.caps == {"a": 0.05, "b": 0.05}
        for i in ("a", "b"):
            assert report.pricing.rejections[i] <= 0.05 + 1e-9


class TestOutputFiles:
    """write_output and the metadata sidecar"""

    def test_payload_carries_scenario(self, pair):
        payload = report_payload(build_report(pair, "network"))
        assert payload["command"] == "network"
        assert len(payload["scenario_hash"]) == 64
        assert set(payload["flows"]["blocks"]) == {"a", "b"}
        assert "lambda_inferred" in payload["flows"]["blocks"]["a"]
        assert payload["flows"]["edges"].keys() >= {"a->b", "b->a"}

    def test_write_json_with_sidecar(self, tmp_path, pair):
        payload = report_payload(build_report(pair, "network"))
        target = write_output(payload, tmp_path / "out", "network_estimate", argv=["network", "estimate"])
        assert target.name == "network_estimate.json"
        assert json.loads(target.read_text(encoding="utf-8")) == payload
        meta = json.loads((tmp_path / "out" / "network_estimate.meta.json").read_text(encoding="utf-8"))
        assert meta["argv"] == ["network", "estimate"]
        assert meta["output"] == "network_estimate.json"
        assert meta["scenario_hash"] == payload["scenario_hash"]
        assert "timestamp" in meta
        assert "timestamp" not in target.read_text(encoding="utf-8")

    def test_write_csv(self, tmp_path):
        target = write_output({"result": {"y": 1.0}}, tmp_path, "invert", OutputFormat.CSV)
        assert target.read_text(encoding="utf-8") == "key,value\nresult.y,1.0\n"
        meta = json.loads((tmp_path / "invert.meta.json").read_text(encoding="utf-8"))
        assert "scenario_hash" not in meta


class TestPlotData:
    """Plot-ready CSV series"""

    def test_arrival_curves(self, tmp_path, pair):
        report = Report(command="plot", scenario=pair)
        paths = emit_plot_data(report, PlotKind.ARRIVAL_CURVES, tmp_path, ks=(1, 10))
        assert [p.name for p in paths] == ["arrival_curves.csv"]
        with open(paths[0], newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2 * len(default_curve_grid())
        assert set(rows[0]) == {"k", "u", "y"}

    def test_all_follows_report_contents(self, tmp_path, pair):
        report = build_report(pair, "plot", optimize=True)
        names = [p.name for p in emit_plot_data(report, PlotKind.ALL, tmp_path)]
        assert names == ["arrival_curves.csv", "cruising_share.csv", "before_after.csv"]

    def test_before_after_rows(self, tmp_path, pair):
        report = build_report(pair, "plot", optimize=True)
        (path,) = emit_plot_data(report, PlotKind.BEFORE_AFTER, tmp_path)
        with open(path, newline="", encoding="utf-8") as f:
            rows = {r["id"]: r for r in csv.DictReader(f)}
        assert float(rows["a"]["occupancy_before"]) == pytest.approx(0.6)
        assert float(rows["a"]["price_before"]) == 2.0

    @pytest.mark.parametrize("kind", [PlotKind.BEFORE_AFTER, PlotKind.SIMULATION])
    def test_missing_solve(self, tmp_path, pair, kind):
        report = build_report(pair, "plot")
        with pytest.raises(ReportError):
            emit_plot_data(report, kind, tmp_path)

    def test_empty_scenario(self, tmp_path, empty):
        with pytest.raises(ReportError, match="at least one block"):
            emit_plot_data(Report(command="plot", scenario=empty), PlotKind.ALL, tmp_path)
