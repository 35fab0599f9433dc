"""
scenario_io.py - Scenario Files

Reads a scenario (JSON plus optional blocks.csv / edges.csv), calibrates the
demand models, resolves congestion caps and runs the graph checks. Writes the
canonical inline form back out so a scenario can be re-run from a report.

Scenario JSON keys:
- name, units
- blocks_csv | blocks        block table (CSV header id,k,mu,lambda,observed_u,price,through_traffic,cap)
- edges_csv | edges          routing table (CSV header from,to,weight; blank weight = even split)
- elasticity                 {"alpha": a} or {"value": e, "reference": "observed" | {"price": p, "occupancy": u}}
                             plus optional "anchor", "p_min", "p_max"
- caps                       {"relative_to_baseline": f, "blocks": [...]}
- objective                  "stalls" | "uniform"
- sim, solver                SimConfig / SolverOptions fields
"""

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import csv
import hashlib
import json
import logging
import math

from .errors import InvalidInputError, ScenarioError
from .graph_checks import validate_graph
from .models_net import (
    BlockFace,
    Edge,
    ElasticityModel,
    GraphReport,
    ObjectiveWeighting,
    PricedBlock,
    PricingProblem,
    QueueParams,
    SolverOptions,
    StreetGraph,
)
from .pricing import anchored_model, calibrate_alpha, relative_caps
from .simulate import ServiceDist, SimConfig

logger = logging.getLogger(__name__)

BLOCKS_HEADER = ["id", "k", "mu", "lambda", "observed_u", "price", "through_traffic", "cap"]
EDGES_HEADER = ["from", "to", "weight"]
TOP_LEVEL_KEYS = {
    "name", "units", "blocks", "blocks_csv", "edges", "edges_csv",
    "elasticity", "caps", "objective", "sim", "solver",
}
BLOCK_KEYS = set(BLOCKS_HEADER) | {"alpha"}
DEFAULT_UNITS = "vehicles/hour"


@dataclass
class Scenario:
    """A parsed, calibrated scenario"""
    name: str
    blocks: List[BlockFace]
    graph: StreetGraph
    units: str = DEFAULT_UNITS
    models: Dict[str, ElasticityModel] = field(default_factory=dict)
    caps: Dict[str, float] = field(default_factory=dict)
    calibration: Dict[str, Dict[str, float]] = field(default_factory=dict)
    elasticity_spec: Optional[Dict[str, Any]] = None
    caps_spec: Optional[Dict[str, Any]] = None
    objective: ObjectiveWeighting = ObjectiveWeighting.STALLS
    sim: Optional[SimConfig] = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    graph_report: GraphReport = field(default_factory=GraphReport)
    warnings: List[str] = field(default_factory=list)
    source: Optional[Path] = None

    def block(self, block_id: str) -> BlockFace:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise InvalidInputError(f"unknown block '{block_id}'")

    @property
    def by_id(self) -> Dict[str, BlockFace]:
        return {b.id: b for b in self.blocks}

    def pricing_problem(self, uniform_cap: Optional[float] = None) -> PricingProblem:
        """
        Pricing problem over every block with a demand model

        Args:
            uniform_cap: When given, the same cap for every priced block

        Returns:
            PricingProblem
        """
        if not self.models:
            raise InvalidInputError("scenario has no elasticity section; nothing to price")
        entries = []
        for b in self.blocks:
            model = self.models.get(b.id)
            if model is None:
                continue
            cap = uniform_cap if uniform_cap is not None else self.caps.get(b.id)
            entries.append(PricedBlock(block=b, model=model, cap=cap))
        return PricingProblem(entries=entries, weighting=self.objective)

    def to_dict(self) -> Dict[str, Any]:
        """Canonical inline form; reloading it reproduces this scenario"""
        data: Dict[str, Any] = {
            "name": self.name,
            "units": self.units,
            "blocks": [_block_to_dict(b) for b in self.blocks],
            "edges": [
                {"from": e.source, "to": e.target, **({"weight": e.weight} if e.weight is not None else {})}
                for e in self.graph.edges
            ],
            "objective": self.objective.value,
            "solver": {"damping": self.solver.damping, "tol": self.solver.tol, "max_iter": self.solver.max_iter},
        }
        if self.elasticity_spec is not None:
            data["elasticity"] = self.elasticity_spec
        if self.caps_spec is not None:
            data["caps"] = self.caps_spec
        if self.sim is not None:
            data["sim"] = _sim_to_dict(self.sim)
        return data


def _block_to_dict(b: BlockFace) -> Dict[str, Any]:
    row: Dict[str, Any] = {"id": b.id, "k": b.params.k, "mu": b.params.mu}
    optional = {
        "lambda": b.lam,
        "observed_u": b.observed_u,
        "price": b.price,
        "through_traffic": b.through_traffic,
        "cap": b.congestion_cap,
        "alpha": b.alpha,
    }
    row.update({key: value for key, value in optional.items() if value is not None})
    return row


def _sim_to_dict(config: SimConfig) -> Dict[str, Any]:
    data = {f.name: getattr(config, f.name) for f in fields(config)}
    data["service_dist"] = config.service_dist.label()
    if data["max_hops"] is None:
        del data["max_hops"]
    return data


def scenario_hash(scenario: Scenario) -> str:
    """sha256 of the canonical form, keys sorted, compact separators"""
    text = json.dumps(scenario.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_scenario(scenario: Scenario, path: Union[str, Path]) -> Path:
    """Write the canonical inline form as JSON"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario.to_dict(), f, ensure_ascii=False, indent=2, sort_keys=True)
    return path


# ------------------------------------------------------------------ parsing

def _number(value: Any, where: Dict[str, Any], name: str, optional: bool = True) -> Optional[float]:
    if value is None or (isinstance(value, str) and value.strip() == ""):
        if optional:
            return None
        raise ScenarioError("value is required", field=name, **where)
    if isinstance(value, bool):
        raise ScenarioError(f"expected a number, got {value!r}", field=name, **where)
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"expected a number, got {value!r}", field=name, **where) from None
    if math.isnan(number):
        raise ScenarioError("NaN is not allowed", field=name, **where)
    return number


def _parse_block(row: Dict[str, Any], where: Dict[str, Any]) -> BlockFace:
    unknown = set(row) - BLOCK_KEYS
    if unknown:
        raise ScenarioError(f"unknown block field(s): {', '.join(sorted(unknown))}", field=sorted(unknown)[0], **where)
    block_id = str(row.get("id") or "").strip()
    if not block_id:
        raise ScenarioError("block id is required", field="id", **where)

    k = _number(row.get("k"), where, "k", optional=False)
    if k != int(k) or k < 1:
        raise ScenarioError(f"stall count must be a positive integer, got {row.get('k')!r}", field="k", **where)
    mu = _number(row.get("mu"), where, "mu", optional=False)
    try:
        params = QueueParams(k=int(k), mu=mu)
    except InvalidInputError as e:
        raise ScenarioError(str(e), field="mu", **where) from None

    values = {name: _number(row.get(name), where, name)
              for name in ("lambda", "observed_u", "price", "through_traffic", "cap", "alpha")}
    for name, value in values.items():
        if value is not None and value < 0:
            raise ScenarioError(f"must be nonnegative, got {value}", field=name, **where)
    try:
        return BlockFace(
            id=block_id,
            params=params,
            lam=values["lambda"],
            observed_u=values["observed_u"],
            price=values["price"],
            alpha=values["alpha"],
            congestion_cap=values["cap"],
            through_traffic=values["through_traffic"],
        )
    except InvalidInputError as e:
        raise ScenarioError(str(e), field="observed_u", **where) from None


def _read_csv(path: Path, header: List[str]) -> List[tuple]:
    """Rows of a CSV with an exact header, paired with their line numbers"""
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read file: {e.strerror}", path=str(path)) from None
    with f:
        reader = csv.DictReader(f)
        if reader.fieldnames != header:
            raise ScenarioError(
                f"header must be exactly '{','.join(header)}', got '{','.join(reader.fieldnames or [])}'",
                path=str(path), line=1,
            )
        rows = []
        for row in reader:
            if None in row:
                raise ScenarioError("too many columns", path=str(path), line=reader.line_num)
            rows.append((reader.line_num, row))
        return rows


def _load_blocks(data: Dict[str, Any], base: Path, path: Path) -> List[BlockFace]:
    if "blocks_csv" in data and "blocks" in data:
        raise ScenarioError("give either 'blocks' or 'blocks_csv', not both", path=str(path), field="blocks")
    if "blocks_csv" in data:
        csv_path = base / str(data["blocks_csv"])
        return [_parse_block(row, {"path": str(csv_path), "line": line})
                for line, row in _read_csv(csv_path, BLOCKS_HEADER)]
    rows = data.get("blocks", [])
    if not isinstance(rows, list):
        raise ScenarioError("must be a list of block objects", path=str(path), field="blocks")
    blocks = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise ScenarioError(f"entry {i} must be an object", path=str(path), field="blocks")
        blocks.append(_parse_block(row, {"path": f"{path} blocks[{i}]"}))
    return blocks


def _parse_edge(row: Dict[str, Any], where: Dict[str, Any]) -> Edge:
    source = str(row.get("from") or "").strip()
    target = str(row.get("to") or "").strip()
    if not source:
        raise ScenarioError("edge source is required", field="from", **where)
    if not target:
        raise ScenarioError("edge target is required", field="to", **where)
    return Edge(source=source, target=target, weight=_number(row.get("weight"), where, "weight"))


def _load_edges(data: Dict[str, Any], base: Path, path: Path) -> List[Edge]:
    if "edges_csv" in data and "edges" in data:
        raise ScenarioError("give either 'edges' or 'edges_csv', not both", path=str(path), field="edges")
    if "edges_csv" in data:
        csv_path = base / str(data["edges_csv"])
        return [_parse_edge(row, {"path": str(csv_path), "line": line})
                for line, row in _read_csv(csv_path, EDGES_HEADER)]
    rows = data.get("edges", [])
    if not isinstance(rows, list):
        raise ScenarioError("must be a list of edge objects", path=str(path), field="edges")
    edges = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or set(row) - set(EDGES_HEADER):
            raise ScenarioError(f"entry {i} must be an object with keys from/to/weight", path=str(path), field="edges")
        edges.append(_parse_edge(row, {"path": f"{path} edges[{i}]"}))
    return edges


def _demand_p_max(block_id: str, p_max: Optional[float], intercept: float, alpha: float) -> Optional[float]:
    """Scenario-wide p_max, lowered to the block's zero-demand price"""
    if p_max is None or alpha <= 0 or p_max <= intercept / alpha:
        return p_max
    logger.info("block '%s': p_max lowered from %g to %g where demand reaches zero",
                block_id, p_max, intercept / alpha)
    return intercept / alpha


def _calibrate(scenario: Scenario, spec: Dict[str, Any], path: Path) -> None:
    """Build a demand model per block from the elasticity section"""
    where = {"path": str(path)}
    if not isinstance(spec, dict):
        raise ScenarioError("must be an object", field="elasticity", **where)
    unknown = set(spec) - {"alpha", "value", "reference", "anchor", "p_min", "p_max"}
    if unknown:
        raise ScenarioError(f"unknown key(s): {', '.join(sorted(unknown))}", field="elasticity", **where)
    if ("alpha" in spec) == ("value" in spec):
        raise ScenarioError("give exactly one of 'alpha' (slope) or 'value' (elasticity)", field="elasticity", **where)

    anchor = bool(spec.get("anchor", False))
    p_min = _number(spec.get("p_min", 0.0), where, "elasticity.p_min")
    p_max = _number(spec.get("p_max"), where, "elasticity.p_max")
    reference = spec.get("reference", "observed")

    for b in scenario.blocks:
        if b.alpha is not None:
            alpha = b.alpha
            p0, u0 = b.price, b.observed_u
        elif "alpha" in spec:
            alpha = _number(spec["alpha"], where, "elasticity.alpha", optional=False)
            p0, u0 = b.price, b.observed_u
        else:
            value = _number(spec["value"], where, "elasticity.value", optional=False)
            if reference == "observed":
                p0, u0 = b.price, b.observed_u
            elif isinstance(reference, dict):
                p0 = _number(reference.get("price"), where, "elasticity.reference.price", optional=False)
                u0 = _number(reference.get("occupancy"), where, "elasticity.reference.occupancy", optional=False)
            else:
                raise ScenarioError("reference must be 'observed' or {price, occupancy}", field="elasticity.reference", **where)
            if p0 is None or u0 is None or p0 <= 0:
                msg = f"block '{b.id}': no positive reference price and occupancy; not priced"
                scenario.warnings.append(msg)
                logger.warning(msg)
                continue
            try:
                alpha = calibrate_alpha(value, p0, u0)
            except InvalidInputError as e:
                raise ScenarioError(f"block '{b.id}': {e}", field="elasticity", **where) from None

        try:
            if anchor:
                if p0 is None or u0 is None:
                    raise InvalidInputError("anchoring needs the block's price and observed_u")
                model = anchored_model(alpha, p0, u0, p_min=p_min,
                                       p_max=_demand_p_max(b.id, p_max, u0 + alpha * p0, alpha))
            else:
                model = ElasticityModel(alpha=alpha, p_min=p_min, p_max=_demand_p_max(b.id, p_max, 1.0, alpha))
        except InvalidInputError as e:
            raise ScenarioError(f"block '{b.id}': {e}", field="elasticity", **where) from None
        scenario.models[b.id] = model
        scenario.calibration[b.id] = {"alpha": model.alpha, "intercept": model.intercept,
                                      "p_min": model.p_min, "p_max": model.p_max}


def _resolve_caps(scenario: Scenario, spec: Optional[Dict[str, Any]], path: Path) -> None:
    for b in scenario.blocks:
        if b.congestion_cap is not None:
            scenario.caps[b.id] = b.congestion_cap
    if spec is None:
        return
    where = {"path": str(path)}
    if not isinstance(spec, dict) or set(spec) - {"relative_to_baseline", "blocks"}:
        raise ScenarioError("must be an object with 'relative_to_baseline' and optional 'blocks'", field="caps", **where)
    fraction = _number(spec.get("relative_to_baseline"), where, "caps.relative_to_baseline", optional=False)
    ids = spec.get("blocks") or [b.id for b in scenario.blocks if b.id in scenario.models]
    known = scenario.by_id
    missing = [i for i in ids if i not in known]
    if missing:
        raise ScenarioError(f"unknown block(s): {', '.join(missing)}", field="caps.blocks", **where)
    try:
        scenario.caps.update(relative_caps([known[i] for i in ids], fraction, scenario.models))
    except InvalidInputError as e:
        raise ScenarioError(str(e), field="caps", **where) from None


def _section(data: Dict[str, Any], key: str, cls, path: Path):
    raw = data.get(key)
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ScenarioError("must be an object", path=str(path), field=key)
    raw = dict(raw)
    try:
        if cls is SimConfig and "service_dist" in raw:
            raw["service_dist"] = ServiceDist.parse(str(raw["service_dist"]))
        return cls(**raw)
    except TypeError as e:
        raise ScenarioError(f"unknown setting: {e}", path=str(path), field=key) from None
    except InvalidInputError as e:
        raise ScenarioError(str(e), path=str(path), field=key) from None


def parse_scenario(data: Dict[str, Any], path: Union[str, Path] = "<scenario>",
                   base: Optional[Path] = None) -> Scenario:
    """
    Build a Scenario from already-decoded JSON

    Args:
        data: Decoded scenario object
        path: Source name used in error messages
        base: Directory that CSV paths are relative to

    Returns:
        Scenario with models, caps and graph findings attached
    """
    path = Path(path)
    base = base or path.parent
    if not isinstance(data, dict):
        raise ScenarioError("top level must be a JSON object", path=str(path))
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise ScenarioError(f"unknown key(s): {', '.join(sorted(unknown))}", path=str(path), field=sorted(unknown)[0])

    blocks = _load_blocks(data, base, path)
    edges = _load_edges(data, base, path)
    graph = StreetGraph(nodes=[b.id for b in blocks], edges=edges)

    report = validate_graph(graph)
    if report.errors:
        raise ScenarioError("; ".join(i.message for i in report.errors), path=str(path), field="edges")

    try:
        objective = ObjectiveWeighting(data.get("objective", ObjectiveWeighting.STALLS.value))
    except ValueError:
        raise ScenarioError("must be 'stalls' or 'uniform'", path=str(path), field="objective") from None

    scenario = Scenario(
        name=str(data.get("name") or path.stem),
        units=str(data.get("units") or DEFAULT_UNITS),
        blocks=blocks,
        graph=graph,
        objective=objective,
        sim=_section(data, "sim", SimConfig, path),
        solver=_section(data, "solver", SolverOptions, path) or SolverOptions(),
        graph_report=report,
        source=path,
    )
    for issue in report.warnings:
        scenario.warnings.append(issue.message)

    if "elasticity" in data:
        scenario.elasticity_spec = data["elasticity"]
        _calibrate(scenario, data["elasticity"], path)
    if "caps" in data:
        scenario.caps_spec = data["caps"]
    _resolve_caps(scenario, data.get("caps"), path)

    logger.info("loaded scenario '%s': %d blocks, %d edges, %d priced",
                scenario.name, len(blocks), len(edges), len(scenario.models))
    return scenario


def load_scenario(path: Union[str, Path]) -> Scenario:
    """
    Read a scenario JSON file and its companion CSVs

    Raises:
        ScenarioError: unreadable or malformed file, schema violation or a
            structurally invalid street graph
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read file: {e.strerror}", path=str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e.msg}", path=str(path), line=e.lineno) from None
    return parse_scenario(data, path, path.parent)


__all__ = [
    "BLOCKS_HEADER",
    "EDGES_HEADER",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "write_scenario",
    "scenario_hash",
]
