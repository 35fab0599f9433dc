"""
models_net.py - Core Data Structure Definitions

Contains:
- QueueParams / LossProfile: one block-face as an Erlang loss queue
- OccupancyTarget / UniformSolution: inputs and outputs of the inversion module
- BlockFace / Edge / StreetGraph: the street network
- GraphIssue / GraphReport: structural validation findings
- NetworkFlows / CruisingShare: network solve results
- ElasticityModel / PricedBlock / PricingProblem / PricingSolution: price control
- SolverOptions: fixed-point iteration settings
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple
import math

from .errors import InvalidInputError


# Occupancies above this are rejected: the arrival rate needed diverges as u -> 1.
U_CAP = 0.999


class IssueKind(Enum):
    """Graph validation finding kinds"""
    DUPLICATE_NODE = "duplicate_node"
    SELF_LOOP = "self_loop"
    DANGLING_ENDPOINT = "dangling_endpoint"
    NEGATIVE_WEIGHT = "negative_weight"
    NON_STOCHASTIC = "non_stochastic"
    SINK_NODE = "sink_node"
    DISCONNECTED = "disconnected"


# Findings that make a graph unusable; the rest are warnings.
BLOCKING_ISSUES = {
    IssueKind.DUPLICATE_NODE,
    IssueKind.SELF_LOOP,
    IssueKind.DANGLING_ENDPOINT,
    IssueKind.NEGATIVE_WEIGHT,
    IssueKind.NON_STOCHASTIC,
}


class ObjectiveWeighting(Enum):
    """How block occupancies are aggregated in the pricing objective"""
    STALLS = "stalls"      # sum of k_i * U_i: occupied stalls
    UNIFORM = "uniform"    # plain sum of U_i


class SolveMode(Enum):
    """Which direction a network solve ran"""
    FORWARD = "forward"        # exogenous demand -> flows
    ESTIMATE = "estimate"      # observed occupancy -> flows


@dataclass(frozen=True)
class QueueParams:
    """One block-face: stall count and per-stall service rate (1/hour)"""
    k: int
    mu: float

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"stall count k must be a positive integer, got {self.k!r}")
        if not math.isfinite(self.mu) or self.mu <= 0:
            raise InvalidInputError(f"service rate mu must be positive, got {self.mu!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def capacity(self) -> float:
        """Largest sustainable parking rate k*mu"""
        return self.k * self.mu


@dataclass(frozen=True)
class LossProfile:
    """Stationary behaviour of one loss queue at total arrival rate y"""
    y: float
    pi: Tuple[float, ...]
    blocking: float
    occupancy: float

    @property
    def rejection_rate(self) -> float:
        """Rate at which arriving drivers find the block full"""
        return self.y * self.blocking


@dataclass(frozen=True)
class OccupancyTarget:
    """An occupancy level u in [0, U_CAP]"""
    u: float

    def __post_init__(self):
        if not math.isfinite(self.u) or self.u < 0 or self.u >= 1:
            raise InvalidInputError(f"occupancy must lie in [0, 1), got {self.u!r}")
        if self.u > U_CAP:
            raise InvalidInputError(
                f"occupancy {self.u} exceeds the cap {U_CAP}: the arrival rate needed "
                f"to sustain it grows without bound as occupancy approaches 1"
            )
        object.__setattr__(self, "u", float(self.u))


@dataclass(frozen=True)
class UniformSolution:
    """Per-node solution of a d-regular network of identical blocks"""
    y: float                         # total arrival rate
    per_neighbor_rejection: float    # x, rejections sent along each out-edge
    degree: int                      # d
    lam: float                       # exogenous rate it was solved for


@dataclass
class BlockFace:
    """One side of a street between intersections"""
    id: str
    params: QueueParams
    lam: Optional[float] = None              # exogenous arrivals (vehicles/hour)
    observed_u: Optional[float] = None       # observed occupancy
    price: Optional[float] = None            # posted price (dollars/hour)
    alpha: Optional[float] = None            # demand slope (occupancy per dollar)
    congestion_cap: Optional[float] = None   # x-bar (vehicles/hour)
    through_traffic: Optional[float] = None  # observed through traffic (vehicles/hour)

    def __post_init__(self):
        for name in ("lam", "price", "alpha", "congestion_cap", "through_traffic"):
            value = getattr(self, name)
            if value is not None and (math.isnan(value) or value < 0):
                raise InvalidInputError(f"block '{self.id}': {name} must be nonnegative, got {value!r}")
        if self.observed_u is not None:
            try:
                OccupancyTarget(self.observed_u)
            except InvalidInputError as e:
                raise InvalidInputError(f"block '{self.id}': {e}") from None


@dataclass(frozen=True)
class Edge:
    """Directed block-face adjacency; weight None means 'split the remainder evenly'"""
    source: str
    target: str
    weight: Optional[float] = None


@dataclass
class StreetGraph:
    """Directed block-face graph with rejection-routing weights"""
    nodes: List[str] = field(default_factory=list)
    edges: List[Edge] = field(default_factory=list)

    def out_edges(self, node: str) -> List[Edge]:
        """Edges leaving a node, in declaration order"""
        return [e for e in self.edges if e.source == node]

    def resolved_weights(self) -> Dict[Tuple[str, str], float]:
        """
        Routing weight per edge with blanks filled in

        Blank weights on a node share whatever mass the explicit weights leave,
        so a node with only blank weights splits its rejections uniformly.
        """
        by_source: Dict[str, List[Edge]] = {}
        for e in self.edges:
            by_source.setdefault(e.source, []).append(e)

        weights: Dict[Tuple[str, str], float] = {}
        for source, out in by_source.items():
            explicit = sum(e.weight for e in out if e.weight is not None)
            blanks = [e for e in out if e.weight is None]
            share = max(0.0, 1.0 - explicit) / len(blanks) if blanks else 0.0
            for e in out:
                key = (e.source, e.target)
                weights[key] = weights.get(key, 0.0) + (e.weight if e.weight is not None else share)
        return weights


@dataclass
class GraphIssue:
    """Single validation finding"""
    kind: IssueKind
    message: str
    node: Optional[str] = None

    @property
    def is_blocking(self) -> bool:
        return self.kind in BLOCKING_ISSUES


@dataclass
class GraphReport:
    """Result of validate_graph; report-only, never raises"""
    issues: List[GraphIssue] = field(default_factory=list)

    @property
    def errors(self) -> List[GraphIssue]:
        return [i for i in self.issues if i.is_blocking]

    @property
    def warnings(self) -> List[GraphIssue]:
        return [i for i in self.issues if not i.is_blocking]

    @property
    def is_clean(self) -> bool:
        return not self.issues

    def add(self, kind: IssueKind, message: str, node: Optional[str] = None) -> None:
        self.issues.append(GraphIssue(kind=kind, message=message, node=node))

    def kinds(self) -> List[IssueKind]:
        return [i.kind for i in self.issues]


@dataclass
class SolverOptions:
    """Damped fixed-point iteration settings"""
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 100_000

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise InvalidInputError(f"damping must lie in (0, 1], got {self.damping}")
        if self.tol <= 0:
            raise InvalidInputError(f"tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise InvalidInputError(f"max_iter must be at least 1, got {self.max_iter}")


@dataclass
class NetworkFlows:
    """Per-node and per-edge flows of a solved network (all rates per hour)"""
    mode: SolveMode
    y: Dict[str, float] = field(default_factory=dict)
    occupancy: Dict[str, float] = field(default_factory=dict)
    rejection_out: Dict[str, float] = field(default_factory=dict)
    rejection_in: Dict[str, float] = field(default_factory=dict)
    edge_flow: Dict[Tuple[str, str], float] = field(default_factory=dict)
    lambda_inferred: Dict[str, float] = field(default_factory=dict)
    clamped: Dict[str, float] = field(default_factory=dict)  # node -> negative residual that was clamped
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0
    warnings: List[str] = field(default_factory=list)

    @property
    def total_rejection(self) -> float:
        return sum(self.rejection_out.values())

    def add_warning(self, msg: str) -> None:
        self.warnings.append(msg)


@dataclass
class CruisingShare:
    """Fraction of a block's through traffic made up of rejected drivers"""
    block_id: str
    rejection_inflow: float
    through_traffic: float
    share: float
    out_of_range: bool = False


@dataclass(frozen=True)
class ElasticityModel:
    """
    Linear demand U(p) = intercept - alpha * p on [p_min, p_max]

    intercept defaults to 1, the unanchored form. p_max defaults to the
    price where demand reaches zero.
    """
    alpha: float
    p_min: float = 0.0
    p_max: Optional[float] = None
    intercept: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidInputError(f"elasticity slope must be nonnegative, got {self.alpha!r}")
        if self.p_min < 0:
            raise InvalidInputError(f"p_min must be nonnegative, got {self.p_min}")
        if not 0 < self.intercept <= 2:
            raise InvalidInputError(f"demand intercept must lie in (0, 2], got {self.intercept}")
        if self.p_max is None:
            zero_demand = self.intercept / self.alpha if self.alpha > 0 else math.inf
            object.__setattr__(self, "p_max", max(self.p_min, zero_demand))
        if self.p_max < self.p_min:
            raise InvalidInputError(f"p_max ({self.p_max}) is below p_min ({self.p_min})")
        if self.alpha > 0 and self.intercept - self.alpha * self.p_max < -1e-12:
            raise InvalidInputError(
                f"p_max {self.p_max} drives demand negative; it must not exceed "
                f"{self.intercept / self.alpha:.6g}"
            )

    @property
    def effective_p_min(self) -> float:
        """Lowest price at which demand is not clipped at U_CAP"""
        if self.alpha <= 0:
            return self.p_min
        return min(self.p_max, max(self.p_min, (self.intercept - U_CAP) / self.alpha))


@dataclass
class PricedBlock:
    """One entry of a pricing problem"""
    block: BlockFace
    model: ElasticityModel
    cap: Optional[float] = None   # None means uncapped

    @property
    def id(self) -> str:
        return self.block.id


@dataclass
class PricingProblem:
    """Congestion-constrained occupancy maximization over block prices"""
    entries: List[PricedBlock] = field(default_factory=list)
    weighting: ObjectiveWeighting = ObjectiveWeighting.STALLS
    step_fraction: float = 0.1
    tol: float = 1e-10
    max_iter: int = 100_000

    def weight(self, entry: PricedBlock) -> float:
        if self.weighting is ObjectiveWeighting.STALLS:
            return float(entry.block.params.k)
        return 1.0


@dataclass
class PricingSolution:
    """Optimal prices and the occupancies/rejections they produce"""
    prices: Dict[str, float] = field(default_factory=dict)
    occupancies: Dict[str, float] = field(default_factory=dict)
    rejections: Dict[str, float] = field(default_factory=dict)
    floors: Dict[str, float] = field(default_factory=dict)
    caps: Dict[str, Optional[float]] = field(default_factory=dict)
    objective: float = 0.0
    kkt_residual: float = 0.0
    closed_form_gap: float = 0.0
    iterations: int = 0
    excluded: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def total_rejection(self) -> float:
        return sum(self.rejections.values())

    def add_warning(self, msg: str) -> None:
        self.warnings.append(msg)
