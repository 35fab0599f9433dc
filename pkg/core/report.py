"""
report.py - Solve Orchestration and Output

Responsibilities:
- run the solvers a command needs and collect their results into a Report
- summaries for the inline-flag commands (invert, uniform)
- write machine-readable output (json or csv) with a timestamped sidecar
- write plot-ready CSV series, optionally rendered to SVG
"""

from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence
import csv
import io
import json
import logging
import math

from .errors import ReportError
from .inversion import (
    arrival_curvature,
    arrival_curve,
    arrival_sensitivity,
    default_curve_grid,
    invert_occupancy,
    solve_uniform,
)
from .loss_queue import erlang_blocking
from .models_net import (
    CruisingShare,
    NetworkFlows,
    OccupancyTarget,
    PricingSolution,
    QueueParams,
    SolveMode,
)
from .network import cruising_shares, estimate_from_occupancy, forward_solve
from .pricing import baseline_rejection, optimize_prices
from .scenario_io import Scenario, scenario_hash
from .simulate import SimConfig, SimResult, replicate

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
SIGNIFICANT_DIGITS = 12
DEFAULT_CURVE_KS = (1, 5, 10, 20)


class OutputFormat(Enum):
    JSON = "json"
    CSV = "csv"


class PlotKind(Enum):
    """Plot-data series"""
    ARRIVAL_CURVES = "arrival_curves"
    CRUISING_SHARE = "cruising_share"
    BEFORE_AFTER = "before_after"
    SIMULATION = "simulation"
    ALL = "all"


@dataclass
class Report:
    """Everything one command computed, plus the scenario it came from"""
    command: str
    scenario: Optional[Scenario] = None
    flows: Optional[NetworkFlows] = None
    pricing: Optional[PricingSolution] = None
    baseline: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)
    simulation: Optional[SimResult] = None
    cruising: Dict[str, CruisingShare] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def add_warnings(self, messages: Iterable[str]) -> None:
        for msg in messages:
            if msg not in self.warnings:
                self.warnings.append(msg)


# ------------------------------------------------------------ inline commands

def invert_summary(k: int, mu: float, u: float) -> Dict[str, Any]:
    """Arrival rate and its derivatives for one occupancy"""
    params = QueueParams(k=k, mu=mu)
    target = OccupancyTarget(u)
    y = invert_occupancy(params, target)
    result = {"k": params.k, "mu": params.mu, "u": target.u, "y": y,
              "blocking": erlang_blocking(params, y), "dy_du": None, "d2y_du2": None}
    if target.u > 0:
        result["dy_du"] = arrival_sensitivity(params, target)
        result["d2y_du2"] = arrival_curvature(params, target)
    return result


def uniform_summary(k: int, mu: float, lam: float, degree: int) -> Dict[str, Any]:
    """Per-node solution of a uniform network"""
    params = QueueParams(k=k, mu=mu)
    sol = solve_uniform(params, lam, degree)
    blocking = erlang_blocking(params, sol.y)
    return {"k": params.k, "mu": params.mu, "lambda": sol.lam, "degree": sol.degree,
            "y": sol.y, "x": sol.per_neighbor_rejection, "blocking": blocking,
            "residual": abs(sol.y * (1.0 - blocking) - sol.lam)}


# -------------------------------------------------------------- orchestration

def solve_network(scenario: Scenario, mode: Optional[SolveMode] = None) -> NetworkFlows:
    """
    Forward solve or estimation, whichever the scenario supports

    Without an explicit mode, observed occupancies win over exogenous rates.
    """
    if not scenario.blocks:
        raise ReportError(f"scenario '{scenario.name}' has no blocks")
    if mode is None:
        if all(b.observed_u is not None for b in scenario.blocks):
            mode = SolveMode.ESTIMATE
        elif all(b.lam is not None for b in scenario.blocks):
            mode = SolveMode.FORWARD
        else:
            raise ReportError("every block needs observed_u (estimation) or lambda (forward solve)")
    if mode is SolveMode.ESTIMATE:
        return estimate_from_occupancy(scenario.graph, scenario.blocks)
    return forward_solve(scenario.graph, scenario.blocks, scenario.solver)


def _simulation_blocks(scenario: Scenario, flows: Optional[NetworkFlows]):
    """Blocks with exogenous rates, inferred ones filled in from an estimation"""
    blocks = []
    for b in scenario.blocks:
        if b.lam is None:
            if flows is None or b.id not in flows.lambda_inferred:
                raise ReportError(f"block '{b.id}': simulation needs lambda or an estimation solve")
            b = replace(b, lam=flows.lambda_inferred[b.id])
        blocks.append(b)
    return blocks


def _baseline(scenario: Scenario, flows: Optional[NetworkFlows], ids: Iterable[str]) -> Dict[str, Dict[str, Optional[float]]]:
    out = {}
    for block_id in ids:
        b = scenario.block(block_id)
        if b.observed_u is not None:
            u = b.observed_u
            rejection = baseline_rejection(b)
        elif flows is not None:
            u = flows.occupancy[block_id]
            rejection = flows.rejection_out[block_id]
        else:
            u, rejection = None, None
        out[block_id] = {"occupancy": u, "rejection": rejection, "price": b.price}
    return out


def _pricing_summary(scenario: Scenario, report: Report) -> Dict[str, Any]:
    sol = report.pricing
    priced = list(sol.prices)
    capped = [i for i in priced if sol.caps.get(i) is not None]

    def serviced(values: Dict[str, Optional[float]]) -> float:
        return sum(values[i] * scenario.block(i).params.capacity for i in priced if values.get(i) is not None)

    before_u = {i: report.baseline[i]["occupancy"] for i in priced}
    before_g = {i: report.baseline[i]["rejection"] for i in priced}
    summary = {
        "priced_blocks": len(priced),
        "capped_blocks": capped,
        "serviced_before": serviced(before_u),
        "serviced_after": serviced(sol.occupancies),
        "rejection_before": sum(v for v in before_g.values() if v is not None),
        "rejection_after": sol.total_rejection,
        "capped_rejection_before": sum(before_g[i] for i in capped if before_g[i] is not None),
        "capped_rejection_after": sum(sol.rejections[i] for i in capped),
        "price_changes": {
            i: sol.prices[i] - report.baseline[i]["price"]
            for i in priced if report.baseline[i]["price"] is not None
        },
    }
    return summary


def build_report(scenario: Scenario, command: str, mode: Optional[SolveMode] = None,
                 optimize: bool = False, uniform_cap: Optional[float] = None,
                 simulate: bool = False, sim_config: Optional[SimConfig] = None,
                 network: bool = True) -> Report:
    """
    Run the solves a command asks for

    Args:
        scenario: Loaded scenario
        command: Command name recorded in the report
        mode: Network solve direction (None picks from the data)
        optimize: Solve the pricing problem
        uniform_cap: Same congestion cap for every priced block
        simulate: Run the simulator (replications per the config)
        sim_config: Overrides the scenario's sim section
        network: Run the network solve (simulation-only commands may skip it)

    Returns:
        Report
    """
    if not scenario.blocks:
        raise ReportError(f"scenario '{scenario.name}' has no blocks")
    report = Report(command=command, scenario=scenario)
    report.add_warnings(scenario.warnings)

    if network or optimize:
        report.flows = solve_network(scenario, mode)
        report.add_warnings(report.flows.warnings)
        report.cruising = cruising_shares(report.flows, scenario.blocks)
        report.summary["total_rejection"] = report.flows.total_rejection
        for share in report.cruising.values():
            if share.out_of_range:
                report.add_warnings([f"block '{share.block_id}': modelled cruising exceeds observed through traffic"])

    if optimize:
        problem = scenario.pricing_problem(uniform_cap)
        report.pricing = optimize_prices(problem)
        report.add_warnings(report.pricing.warnings)
        report.baseline = _baseline(scenario, report.flows, report.pricing.prices)
        report.summary["pricing"] = _pricing_summary(scenario, report)
        if uniform_cap is not None:
            report.summary["uniform_cap"] = uniform_cap

    if simulate:
        config = sim_config or scenario.sim or SimConfig()
        report.simulation = replicate(scenario.graph, _simulation_blocks(scenario, report.flows), config)
        report.add_warnings(report.simulation.warnings)
        if report.flows is not None:
            gaps = {
                i: abs(report.simulation.occupancy[i] - report.flows.occupancy[i]) / report.flows.occupancy[i]
                for i in report.flows.occupancy if report.flows.occupancy[i] > 0
            }
            report.summary["simulation_relative_gap"] = gaps

    return report


# ------------------------------------------------------------------ payloads

def _edge_key(key) -> str:
    return f"{key[0]}->{key[1]}" if isinstance(key, tuple) else str(key)


def normalize(value: Any) -> Any:
    """JSON-ready copy: floats to 12 significant digits, non-finite to None, enums to values"""
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}")
    if isinstance(value, dict):
        return {_edge_key(k): normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalize(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return normalize(value.item())
    return str(value)


def _flows_payload(flows: NetworkFlows) -> Dict[str, Any]:
    per_block = {}
    for node in flows.y:
        row = {
            "y": flows.y[node],
            "occupancy": flows.occupancy[node],
            "rejection_out": flows.rejection_out[node],
            "rejection_in": flows.rejection_in[node],
        }
        if flows.mode is SolveMode.ESTIMATE:
            row["lambda_inferred"] = flows.lambda_inferred[node]
            row["clamped"] = flows.clamped.get(node, 0.0)
        per_block[node] = row
    return {
        "mode": flows.mode,
        "converged": flows.converged,
        "iterations": flows.iterations,
        "residual": flows.residual,
        "total_rejection": flows.total_rejection,
        "blocks": per_block,
        "edges": flows.edge_flow,
    }


def _pricing_payload(sol: PricingSolution) -> Dict[str, Any]:
    return {
        "objective": sol.objective,
        "kkt_residual": sol.kkt_residual,
        "closed_form_gap": sol.closed_form_gap,
        "iterations": sol.iterations,
        "excluded": sol.excluded,
        "total_rejection": sol.total_rejection,
        "blocks": {
            i: {"price": sol.prices[i], "floor": sol.floors[i], "occupancy": sol.occupancies[i],
                "rejection": sol.rejections[i], "cap": sol.caps[i]}
            for i in sol.prices
        },
    }


def _simulation_payload(sim: SimResult) -> Dict[str, Any]:
    return {
        "seed": sim.seed,
        "replications": sim.replications,
        "end_time": sim.end_time,
        "arrivals": sim.arrivals,
        "parked": sim.parked,
        "circulating": sim.circulating,
        "hop_capped": sim.hop_capped,
        "exited": sim.exited,
        "balanced": sim.balanced,
        "hop_counts": {str(h): n for h, n in sim.hop_counts.items()},
        "blocks": {
            i: {"occupancy": sim.occupancy[i], "occupancy_ci": sim.occupancy_ci[i],
                "blocking": sim.blocking[i], "rejection_rate": sim.rejection_rate[i]}
            for i in sim.occupancy
        },
        "edges": sim.edge_flow,
    }


def report_payload(report: Report) -> Dict[str, Any]:
    """Machine-readable form of a report (no timestamps)"""
    payload: Dict[str, Any] = {"command": report.command, "version": TOOL_VERSION,
                               "summary": report.summary, "warnings": report.warnings}
    if report.scenario is not None:
        payload["scenario"] = report.scenario.to_dict()
        payload["scenario_hash"] = scenario_hash(report.scenario)
        if report.scenario.calibration:
            payload["calibration"] = report.scenario.calibration
        if report.scenario.caps:
            payload["caps"] = report.scenario.caps
    if report.flows is not None:
        payload["flows"] = _flows_payload(report.flows)
    if report.cruising:
        payload["cruising_share"] = {
            i: {"share": c.share, "rejection_inflow": c.rejection_inflow,
                "through_traffic": c.through_traffic, "out_of_range": c.out_of_range}
            for i, c in report.cruising.items()
        }
    if report.pricing is not None:
        payload["pricing"] = _pricing_payload(report.pricing)
        payload["baseline"] = report.baseline
    if report.simulation is not None:
        payload["simulation"] = _simulation_payload(report.simulation)
    return normalize(payload)


def _flatten(prefix: str, value: Any, rows: List[List[str]]) -> None:
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], rows)
    elif isinstance(value, list) and any(isinstance(v, (dict, list)) for v in value):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append([prefix, json.dumps(value, sort_keys=True)])


def render_payload(payload: Dict[str, Any], fmt: OutputFormat = OutputFormat.JSON) -> str:
    """Serialize a normalized payload deterministically"""
    if fmt is OutputFormat.JSON:
        return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"
    rows: List[List[str]] = []
    _flatten("", payload, rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    writer.writerows(rows)
    return buf.getvalue()


def write_output(payload: Dict[str, Any], out_dir: Path, command: str,
                 fmt: OutputFormat = OutputFormat.JSON, argv: Optional[Sequence[str]] = None) -> Path:
    """
    Write <command>.json|csv and the <command>.meta.json sidecar

    Returns:
        Path of the primary output file
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{command}.{fmt.value}"
    with open(target, "w", encoding="utf-8", newline="") as f:
        f.write(render_payload(payload, fmt))

    meta = {
        "command": command,
        "argv": list(argv) if argv is not None else [],
        "timestamp": datetime.now().isoformat(timespec="seconds"),
        "version": TOOL_VERSION,
        "output": target.name,
    }
    if "scenario_hash" in payload:
        meta["scenario_hash"] = payload["scenario_hash"]
    with open(out_dir / f"{command}.meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, ensure_ascii=False, indent=2, sort_keys=True)
    logger.info("wrote %s", target)
    return target


# ---------------------------------------------------------------- plot data

def arrival_curve_rows(ks: Sequence[int] = DEFAULT_CURVE_KS, mu: float = 1.0,
                       grid: Optional[Sequence[float]] = None) -> List[Dict[str, float]]:
    """Rows (k, u, y) of the occupancy -> arrival curves"""
    grid = list(grid) if grid is not None else default_curve_grid()
    rows = []
    for k in ks:
        for u, y in zip(grid, arrival_curve(QueueParams(k=k, mu=mu), grid)):
            rows.append({"k": k, "u": u, "y": y})
    return rows


def _cruising_rows(report: Report) -> List[Dict[str, Any]]:
    if report.flows is None:
        raise ReportError("cruising share needs a network solve")
    if not report.cruising:
        raise ReportError("cruising share needs blocks with through_traffic")
    return [{"id": c.block_id, "rejection_inflow": c.rejection_inflow, "through_traffic": c.through_traffic,
             "share": c.share, "out_of_range": int(c.out_of_range)} for c in report.cruising.values()]


def _before_after_rows(report: Report) -> List[Dict[str, Any]]:
    if report.pricing is None:
        raise ReportError("before/after series need a pricing solve")
    sol = report.pricing
    rows = []
    for i in sol.prices:
        before = report.baseline.get(i, {})
        price_before = before.get("price")
        rows.append({
            "id": i,
            "occupancy_before": before.get("occupancy"),
            "occupancy_after": sol.occupancies[i],
            "rejection_before": before.get("rejection"),
            "rejection_after": sol.rejections[i],
            "price_before": price_before,
            "price_after": sol.prices[i],
            "price_change": None if price_before is None else sol.prices[i] - price_before,
        })
    return rows


def _simulation_rows(report: Report) -> List[Dict[str, Any]]:
    if report.simulation is None:
        raise ReportError("simulation series need a simulation run")
    sim = report.simulation
    rows = []
    for i in sim.occupancy:
        analytic = report.flows.occupancy.get(i) if report.flows is not None else None
        rows.append({"id": i, "analytic_u": analytic, "simulated_u": sim.occupancy[i],
                     "ci_half_width": sim.occupancy_ci[i], "blocking": sim.blocking[i]})
    return rows


def _write_rows(path: Path, rows: List[Dict[str, Any]]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else normalize(v)) for k, v in row.items()})
    return path


def _render_svg(kind: PlotKind, rows: List[Dict[str, Any]], path: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    if kind is PlotKind.ARRIVAL_CURVES:
        for k in sorted({r["k"] for r in rows}):
            pts = [r for r in rows if r["k"] == k]
            ax.plot([r["u"] for r in pts], [r["y"] / k for r in pts], label=f"k = {k}")
        ax.set_xlabel("occupancy u")
        ax.set_ylabel("total arrival rate per stall (1/h)")
        ax.legend()
    elif kind is PlotKind.CRUISING_SHARE:
        ax.bar([r["id"] for r in rows], [100 * r["share"] for r in rows])
        ax.set_ylabel("through traffic searching for parking (%)")
    elif kind is PlotKind.BEFORE_AFTER:
        ids = [r["id"] for r in rows]
        xs = range(len(ids))
        ax.bar([x - 0.2 for x in xs], [r["occupancy_before"] or 0.0 for r in rows], width=0.4, label="before")
        ax.bar([x + 0.2 for x in xs], [r["occupancy_after"] for r in rows], width=0.4, label="after")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(ids, rotation=45, ha="right")
        ax.set_ylabel("occupancy")
        ax.legend()
    else:
        ids = [r["id"] for r in rows]
        ax.errorbar(ids, [r["simulated_u"] for r in rows], yerr=[r["ci_half_width"] or 0.0 for r in rows],
                    fmt="o", label="simulated")
        if all(r["analytic_u"] is not None for r in rows):
            ax.plot(ids, [r["analytic_u"] for r in rows], "x", label="analytic")
        ax.set_ylabel("occupancy")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def emit_plot_data(report: Report, kind: PlotKind, out_dir: Path, svg: bool = False,
                   ks: Sequence[int] = DEFAULT_CURVE_KS) -> List[Path]:
    """
    Write plot-ready CSV series

    Args:
        report: Report holding the solves the series need
        kind: One series, or ALL for every series the report supports
        out_dir: Output directory
        svg: Also render each series with matplotlib
        ks: Stall counts for the arrival curves

    Returns:
        Paths written

    Raises:
        ReportError: empty scenario, or the requested series lacks its solve
    """
    if report.scenario is None or not report.scenario.blocks:
        raise ReportError("plot data needs a scenario with at least one block")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    builders = {
        PlotKind.ARRIVAL_CURVES: lambda: arrival_curve_rows(ks),
        PlotKind.CRUISING_SHARE: lambda: _cruising_rows(report),
        PlotKind.BEFORE_AFTER: lambda: _before_after_rows(report),
        PlotKind.SIMULATION: lambda: _simulation_rows(report),
    }
    if kind is PlotKind.ALL:
        kinds = [PlotKind.ARRIVAL_CURVES]
        if report.cruising:
            kinds.append(PlotKind.CRUISING_SHARE)
        if report.pricing is not None:
            kinds.append(PlotKind.BEFORE_AFTER)
        if report.simulation is not None:
            kinds.append(PlotKind.SIMULATION)
    else:
        kinds = [kind]

    written = []
    for k in kinds:
        rows = builders[k]()
        path = _write_rows(out_dir / f"{k.value}.csv", rows)
        written.append(path)
        if svg:
            written.append(_render_svg(k, rows, out_dir / f"{k.value}.svg"))
    logger.info("wrote %d plot files to %s", len(written), out_dir)
    return written


__all__ = [
    "TOOL_VERSION",
    "OutputFormat",
    "PlotKind",
    "Report",
    "invert_summary",
    "uniform_summary",
    "solve_network",
    "build_report",
    "normalize",
    "report_payload",
    "render_payload",
    "write_output",
    "arrival_curve_rows",
    "emit_plot_data",
]
