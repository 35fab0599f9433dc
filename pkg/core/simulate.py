"""
simulate.py - Discrete-Event Network Simulator

Event-driven check of the analytic model: Poisson arrivals at every block, a
driver parks if a stall is free and otherwise drives on to a neighbouring
block (chosen by routing weight) and tries again.

Responsibilities:
- SimConfig / ServiceDist / SimResult
- run: one seeded replication on a simpy event loop
- replicate: independent seeds, optionally in worker processes, aggregated
"""

from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple
import logging
import math

import numpy as np
import simpy
from scipy import stats

from .errors import InvalidInputError, SimulationOverloadError
from .graph_checks import validate_graph
from .models_net import BlockFace, StreetGraph
from .network import BlocksLike, order_blocks

logger = logging.getLogger(__name__)


class ServiceKind(Enum):
    """Parking duration families, all with mean 1/mu"""
    EXPONENTIAL = "exponential"
    DETERMINISTIC = "deterministic"
    LOGNORMAL = "lognormal"


@dataclass(frozen=True)
class ServiceDist:
    """Parking duration distribution; cv only matters for lognormal"""
    kind: ServiceKind = ServiceKind.EXPONENTIAL
    cv: float = 1.0

    def __post_init__(self):
        if self.cv <= 0:
            raise InvalidInputError(f"coefficient of variation must be positive, got {self.cv}")

    @classmethod
    def parse(cls, text: str) -> "ServiceDist":
        """'exponential', 'deterministic', 'lognormal' or 'lognormal:<cv>'"""
        name, _, cv = text.strip().lower().partition(":")
        try:
            kind = ServiceKind(name)
        except ValueError:
            choices = ", ".join(k.value for k in ServiceKind)
            raise InvalidInputError(f"unknown service distribution '{text}' (choose from {choices})") from None
        if not cv:
            return cls(kind=kind)
        try:
            value = float(cv)
        except ValueError:
            raise InvalidInputError(f"coefficient of variation in '{text}' must be a number") from None
        if not math.isfinite(value):
            raise InvalidInputError(f"coefficient of variation in '{text}' must be finite")
        return cls(kind=kind, cv=value)

    def label(self) -> str:
        if self.kind is ServiceKind.LOGNORMAL:
            return f"lognormal:{self.cv:g}"
        return self.kind.value

    def sample(self, rng: np.random.Generator, mean: float) -> float:
        if self.kind is ServiceKind.EXPONENTIAL:
            return float(rng.exponential(mean))
        if self.kind is ServiceKind.DETERMINISTIC:
            return mean
        sigma2 = math.log1p(self.cv * self.cv)
        return float(rng.lognormal(math.log(mean) - 0.5 * sigma2, math.sqrt(sigma2)))


@dataclass
class SimConfig:
    """Simulation settings (hours)"""
    horizon: float = 1000.0
    warmup: float = 100.0
    seed: int = 0
    service_dist: ServiceDist = field(default_factory=ServiceDist)
    edge_delay: float = 1.0 / 60.0
    max_hops: Optional[int] = None
    replications: int = 1
    batches: int = 20
    overload_factor: float = 100.0
    workers: int = 1

    def __post_init__(self):
        if not self.horizon > self.warmup >= 0:
            raise InvalidInputError(f"need horizon > warmup >= 0, got horizon={self.horizon}, warmup={self.warmup}")
        if self.edge_delay <= 0:
            raise InvalidInputError(f"edge_delay must be positive, got {self.edge_delay}")
        if self.max_hops is not None and self.max_hops < 0:
            raise InvalidInputError(f"max_hops must be nonnegative, got {self.max_hops}")
        if self.replications < 1:
            raise InvalidInputError(f"replications must be at least 1, got {self.replications}")
        if self.batches < 2:
            raise InvalidInputError(f"batches must be at least 2, got {self.batches}")
        if self.workers < 1:
            raise InvalidInputError(f"workers must be at least 1, got {self.workers}")


@dataclass
class SimResult:
    """Measured performance of one run or an aggregate of runs"""
    occupancy: Dict[str, float] = field(default_factory=dict)
    occupancy_ci: Dict[str, float] = field(default_factory=dict)   # 95% half-width
    blocking: Dict[str, float] = field(default_factory=dict)
    rejection_rate: Dict[str, float] = field(default_factory=dict)
    edge_flow: Dict[Tuple[str, str], float] = field(default_factory=dict)
    hop_counts: Dict[int, int] = field(default_factory=dict)
    arrivals: int = 0
    parked: int = 0
    circulating: int = 0
    hop_capped: int = 0
    exited: int = 0
    end_time: float = 0.0
    seed: int = 0
    replications: int = 1
    overloaded: bool = False
    warnings: List[str] = field(default_factory=list)

    @property
    def balanced(self) -> bool:
        """Every generated driver is accounted for"""
        return self.arrivals == self.parked + self.circulating + self.hop_capped + self.exited


def _half_width(samples: np.ndarray) -> float:
    n = len(samples)
    if n < 2:
        return float("nan")
    sd = float(np.std(samples, ddof=1))
    return float(stats.t.ppf(0.975, n - 1) * sd / math.sqrt(n))


class _Network:
    """State of one replication"""

    def __init__(self, graph: StreetGraph, blocks: List[BlockFace], config: SimConfig):
        self.config = config
        self.env = simpy.Environment()
        self.rng = np.random.default_rng(config.seed)
        self.stop = self.env.event()

        self.ids = [b.id for b in blocks]
        self.k = [b.params.k for b in blocks]
        self.mean_service = [1.0 / b.params.mu for b in blocks]
        self.lam = [float(b.lam) for b in blocks]
        index = {node: i for i, node in enumerate(self.ids)}
        self.targets: List[List[int]] = [[] for _ in blocks]
        weights: List[List[float]] = [[] for _ in blocks]
        for (src, tgt), w in graph.resolved_weights().items():
            if w > 0:
                self.targets[index[src]].append(index[tgt])
                weights[index[src]].append(w)
        self.cum_weights = [np.cumsum(w) for w in weights]

        n = len(blocks)
        self.busy = [0] * n
        self.last_change = [0.0] * n
        self.window = config.horizon - config.warmup
        self.batch_width = self.window / config.batches
        self.batch_area = np.zeros((n, config.batches))
        self.attempts = [0] * n
        self.rejections = [0] * n
        self.edge_counts: Counter = Counter()
        self.hops: Counter = Counter()

        self.arrivals = 0
        self.parked = 0
        self.circulating = 0
        self.hop_capped = 0
        self.exited = 0
        self.bound = config.overload_factor * sum(self.k)
        self.overloaded = False

    # -------------------------------------------------------------- accounting

    def _integrate(self, i: int, now: float) -> None:
        """Add busy-stall area of block i over [last_change, now] to the batches"""
        a = max(self.last_change[i], self.config.warmup)
        b = min(now, self.config.horizon)
        level = self.busy[i]
        self.last_change[i] = now
        if level == 0 or b <= a:
            return
        w, start, last = self.batch_width, self.config.warmup, self.config.batches - 1
        while a < b:
            j = min(int((a - start) / w), last)
            edge = b if j == last else min(b, start + (j + 1) * w)
            if edge <= a:
                # a sits on a batch boundary
                j += 1
                edge = b if j == last else min(b, start + (j + 1) * w)
            self.batch_area[i, j] += level * (edge - a)
            a = edge

    def _measuring(self) -> bool:
        return self.env.now >= self.config.warmup

    def _route(self, i: int) -> Optional[int]:
        cum = self.cum_weights[i]
        if len(cum) == 0:
            return None
        pick = int(np.searchsorted(cum, self.rng.random() * cum[-1], side="right"))
        return self.targets[i][min(pick, len(cum) - 1)]

    # --------------------------------------------------------------- processes

    def source(self, i: int):
        rate = self.lam[i]
        while True:
            yield self.env.timeout(self.rng.exponential(1.0 / rate))
            self.env.process(self.driver(i))

    def driver(self, node: int):
        self.arrivals += 1
        hops = 0
        while True:
            measuring = self._measuring()
            if measuring:
                self.attempts[node] += 1
            if self.busy[node] < self.k[node]:
                self._integrate(node, self.env.now)
                self.busy[node] += 1
                self.parked += 1
                self.hops[hops] += 1
                yield self.env.timeout(self.config.service_dist.sample(self.rng, self.mean_service[node]))
                self._integrate(node, self.env.now)
                self.busy[node] -= 1
                return

            if measuring:
                self.rejections[node] += 1
            nxt = self._route(node)
            if nxt is None:
                self.exited += 1
                self.hops[hops] += 1
                return
            if self.config.max_hops is not None and hops >= self.config.max_hops:
                self.hop_capped += 1
                self.hops[hops] += 1
                return
            if measuring:
                self.edge_counts[(node, nxt)] += 1

            self.circulating += 1
            if self.circulating > self.bound and not self.stop.triggered:
                self.overloaded = True
                self.stop.succeed()
            yield self.env.timeout(self.config.edge_delay)
            self.circulating -= 1
            hops += 1
            node = nxt

    def clock(self):
        yield self.env.timeout(self.config.horizon)
        if not self.stop.triggered:
            self.stop.succeed()

    # ------------------------------------------------------------------ driver

    def run(self) -> SimResult:
        for i, rate in enumerate(self.lam):
            if rate > 0:
                self.env.process(self.source(i))
        self.env.process(self.clock())
        self.env.run(until=self.stop)
        return self.collect()

    def collect(self) -> SimResult:
        end = self.env.now
        for i in range(len(self.ids)):
            self._integrate(i, end)

        measured = max(0.0, min(end, self.config.horizon) - self.config.warmup)
        result = SimResult(
            arrivals=self.arrivals,
            parked=self.parked,
            circulating=self.circulating,
            hop_capped=self.hop_capped,
            exited=self.exited,
            end_time=end,
            seed=self.config.seed,
            overloaded=self.overloaded,
            hop_counts=dict(sorted(self.hops.items())),
        )
        full_batches = int(round(measured / self.batch_width, 9)) if measured > 0 else 0
        for i, node in enumerate(self.ids):
            if measured > 0:
                result.occupancy[node] = float(self.batch_area[i].sum() / (self.k[i] * measured))
                means = self.batch_area[i, :full_batches] / (self.k[i] * self.batch_width)
                result.occupancy_ci[node] = _half_width(means)
                result.rejection_rate[node] = self.rejections[i] / measured
            else:
                result.occupancy[node] = float("nan")
                result.occupancy_ci[node] = float("nan")
                result.rejection_rate[node] = float("nan")
            result.blocking[node] = self.rejections[i] / self.attempts[i] if self.attempts[i] else 0.0
        for (src, tgt), count in sorted(self.edge_counts.items()):
            result.edge_flow[(self.ids[src], self.ids[tgt])] = count / measured if measured > 0 else float("nan")
        return result


def run(graph: StreetGraph, blocks: BlocksLike, config: Optional[SimConfig] = None) -> SimResult:
    """
    Simulate one replication

    Args:
        graph: Street graph
        blocks: Block faces with exogenous rates
        config: Simulation settings

    Returns:
        SimResult; identical inputs and seed give an identical result

    Raises:
        SimulationOverloadError: circulating drivers exceeded the watchdog
            bound; the partial result is attached
    """
    config = config or SimConfig()
    report = validate_graph(graph)
    if report.errors:
        raise InvalidInputError("street graph is invalid: " + "; ".join(i.message for i in report.errors))
    ordered = order_blocks(graph, blocks)
    for b in ordered:
        if b.lam is None:
            raise InvalidInputError(f"block '{b.id}': exogenous rate lambda is required for simulation")

    state = _Network(graph, ordered, config)
    result = state.run()
    for issue in report.warnings:
        result.warnings.append(issue.message)

    if result.overloaded:
        msg = (f"simulation stopped at t={result.end_time:.4g}h: {state.circulating} drivers circulating "
               f"exceeds {config.overload_factor:g} x total stalls; demand is beyond what the network can park")
        result.warnings.append(msg)
        logger.warning(msg)
        raise SimulationOverloadError(msg, partial=result)

    logger.info("simulated %d drivers over %.4gh (seed %d): %d parked, %d circulating",
                result.arrivals, result.end_time, config.seed, result.parked, result.circulating)
    return result


def _run_seeded(args) -> SimResult:
    graph, blocks, config = args
    return run(graph, blocks, config)


def _mean_dict(results: List[SimResult], name: str) -> Dict:
    keys = list(getattr(results[0], name).keys())
    for r in results[1:]:
        keys.extend(k for k in getattr(r, name) if k not in keys)
    return {key: float(np.mean([getattr(r, name).get(key, 0.0) for r in results])) for key in keys}


def replicate(graph: StreetGraph, blocks: BlocksLike, config: Optional[SimConfig] = None) -> SimResult:
    """
    Run seeds seed..seed+r-1 and aggregate

    Occupancy CI half-widths are taken across replication means. With
    config.workers > 1 the replications run in separate processes.

    Args:
        graph: Street graph
        blocks: Block faces with exogenous rates
        config: Simulation settings; replications = 1 is a plain run

    Returns:
        Aggregated SimResult
    """
    config = config or SimConfig()
    if config.replications == 1:
        return run(graph, blocks, config)

    jobs = [(graph, blocks, replace(config, seed=config.seed + r, replications=1))
            for r in range(config.replications)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_seeded, jobs))
    else:
        results = [_run_seeded(job) for job in jobs]

    hops: Counter = Counter()
    for r in results:
        hops.update(r.hop_counts)

    agg = SimResult(
        occupancy=_mean_dict(results, "occupancy"),
        blocking=_mean_dict(results, "blocking"),
        rejection_rate=_mean_dict(results, "rejection_rate"),
        edge_flow=_mean_dict(results, "edge_flow"),
        hop_counts=dict(sorted(hops.items())),
        arrivals=sum(r.arrivals for r in results),
        parked=sum(r.parked for r in results),
        circulating=sum(r.circulating for r in results),
        hop_capped=sum(r.hop_capped for r in results),
        exited=sum(r.exited for r in results),
        end_time=results[0].end_time,
        seed=config.seed,
        replications=config.replications,
    )
    for node in agg.occupancy:
        agg.occupancy_ci[node] = _half_width(np.array([r.occupancy[node] for r in results]))
    for r in results:
        agg.warnings.extend(w for w in r.warnings if w not in agg.warnings)
    logger.info("aggregated %d replications from seed %d", config.replications, config.seed)
    return agg


__all__ = [
    "ServiceKind",
    "ServiceDist",
    "SimConfig",
    "SimResult",
    "run",
    "replicate",
]
