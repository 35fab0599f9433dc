"""
network.py - Rejection-Circulation Network

Responsibilities:
- routing matrix from a validated street graph
- forward solve: exogenous demand -> total arrivals and rejection flows
- estimation: observed occupancy -> total arrivals, cruising and inferred demand
- cruising share of observed through traffic
"""

from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union
import logging

import numpy as np

from .errors import ConvergenceError, InstabilityError, InvalidInputError
from .graph_checks import validate_graph
from .inversion import invert_occupancy
from .models_net import (
    BlockFace,
    CruisingShare,
    GraphReport,
    NetworkFlows,
    SolveMode,
    SolverOptions,
    StreetGraph,
)

logger = logging.getLogger(__name__)

BlocksLike = Union[Sequence[BlockFace], Mapping[str, BlockFace]]


def order_blocks(graph: StreetGraph, blocks: BlocksLike) -> List[BlockFace]:
    """Blocks in graph.nodes order; every node needs a block"""
    by_id = dict(blocks) if isinstance(blocks, Mapping) else {b.id: b for b in blocks}
    ordered = []
    for node in graph.nodes:
        if node not in by_id:
            raise InvalidInputError(f"block '{node}' is in the graph but has no parameters")
        ordered.append(by_id[node])
    return ordered


def _require_valid(graph: StreetGraph) -> GraphReport:
    report = validate_graph(graph)
    if report.errors:
        details = "; ".join(i.message for i in report.errors)
        raise InvalidInputError(f"street graph is invalid: {details}")
    return report


def routing_matrix(graph: StreetGraph) -> Tuple[List[str], np.ndarray]:
    """
    Dense routing matrix R with R[j, i] = weight of edge j -> i

    Args:
        graph: Street graph (blank weights resolved)

    Returns:
        (node ids in row order, R)
    """
    ids = list(graph.nodes)
    index = {node: i for i, node in enumerate(ids)}
    R = np.zeros((len(ids), len(ids)))
    for (src, tgt), w in graph.resolved_weights().items():
        if src in index and tgt in index:
            R[index[src], index[tgt]] += w
    return ids, R


def blocking_vector(ks: np.ndarray, mus: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Erlang B for every block at once; the recursion stops at each block's own k"""
    rho = y / mus
    b = np.ones_like(rho)
    for j in range(1, int(ks.max(initial=0)) + 1):
        a = rho * b
        b = np.where(j <= ks, a / (j + a), b)
    return b


def _fill_flows(flows: NetworkFlows, ids: List[str], R: np.ndarray,
                y: np.ndarray, rejection: np.ndarray, occ: np.ndarray) -> np.ndarray:
    inflow = R.T @ rejection
    for i, node in enumerate(ids):
        flows.y[node] = float(y[i])
        flows.occupancy[node] = float(occ[i])
        flows.rejection_out[node] = float(rejection[i])
        flows.rejection_in[node] = float(inflow[i])
    for j, src in enumerate(ids):
        for i, tgt in enumerate(ids):
            if R[j, i] > 0:
                flows.edge_flow[(src, tgt)] = float(R[j, i] * rejection[j])
    return inflow


def _carry_graph_warnings(flows: NetworkFlows, report: GraphReport) -> None:
    for issue in report.warnings:
        flows.add_warning(issue.message)
        logger.warning(issue.message)


def forward_solve(graph: StreetGraph, blocks: BlocksLike,
                  options: Optional[SolverOptions] = None) -> NetworkFlows:
    """
    Damped fixed point of y = lambda + R^T (y * B(y))

    Args:
        graph: Street graph
        blocks: Block faces with exogenous rates, keyed or listed by id
        options: Damping, tolerance and iteration cap

    Returns:
        NetworkFlows in FORWARD mode

    Raises:
        InstabilityError: total demand not below total capacity
        ConvergenceError: no convergence within max_iter
    """
    options = options or SolverOptions()
    report = _require_valid(graph)
    ordered = order_blocks(graph, blocks)
    for b in ordered:
        if b.lam is None:
            raise InvalidInputError(f"block '{b.id}': exogenous rate lambda is required for a forward solve")

    ids, R = routing_matrix(graph)
    lam = np.array([b.lam for b in ordered], dtype=float)
    ks = np.array([b.params.k for b in ordered], dtype=int)
    mus = np.array([b.params.mu for b in ordered], dtype=float)
    capacity = float(np.sum(ks * mus))
    if lam.sum() >= capacity:
        raise InstabilityError(
            f"total exogenous demand {lam.sum():.6g}/h is not below total capacity {capacity:.6g}/h; "
            f"this screen is necessary but not sufficient for a solution to exist"
        )

    flows = NetworkFlows(mode=SolveMode.FORWARD)
    _carry_graph_warnings(flows, report)

    theta = options.damping
    y = lam.copy()
    residual = float("inf")
    for iteration in range(1, options.max_iter + 1):
        target = lam + R.T @ (y * blocking_vector(ks, mus, y))
        residual = float(np.max(np.abs(target - y), initial=0.0))
        if residual <= options.tol:
            y = target
            break
        y = (1.0 - theta) * y + theta * target
    else:
        raise ConvergenceError(
            f"forward solve did not converge in {options.max_iter} iterations "
            f"(last update {residual:.3e}); the network may be overloaded",
            last_iterate={node: float(v) for node, v in zip(ids, y)},
            residual=residual,
            iterations=options.max_iter,
        )

    blocking = blocking_vector(ks, mus, y)
    rejection = y * blocking
    occ = y * (1.0 - blocking) / (ks * mus)
    _fill_flows(flows, ids, R, y, rejection, occ)
    flows.converged = True
    flows.iterations = iteration
    flows.residual = residual
    logger.info("forward solve converged in %d iterations (residual %.3e, total rejection %.6g/h)",
                iteration, residual, flows.total_rejection)
    return flows


def estimate_from_occupancy(graph: StreetGraph, blocks: BlocksLike) -> NetworkFlows:
    """
    Invert every block's observed occupancy and back out demand

    Args:
        graph: Street graph
        blocks: Block faces with observed_u

    Returns:
        NetworkFlows in ESTIMATE mode; negative inferred demand is clamped to
        zero and recorded in `clamped` with its magnitude
    """
    report = _require_valid(graph)
    ordered = order_blocks(graph, blocks)
    ids, R = routing_matrix(graph)

    y = np.zeros(len(ordered))
    occ = np.zeros(len(ordered))
    for i, b in enumerate(ordered):
        if b.observed_u is None:
            raise InvalidInputError(f"block '{b.id}': observed occupancy is required for estimation")
        try:
            y[i] = invert_occupancy(b.params, b.observed_u)
        except InvalidInputError as e:
            raise InvalidInputError(f"block '{b.id}': {e}") from None
        occ[i] = b.observed_u

    carried = np.array([b.observed_u * b.params.capacity for b in ordered])
    rejection = np.maximum(y - carried, 0.0)

    flows = NetworkFlows(mode=SolveMode.ESTIMATE)
    _carry_graph_warnings(flows, report)
    inflow = _fill_flows(flows, ids, R, y, rejection, occ)

    for i, node in enumerate(ids):
        lam = float(y[i] - inflow[i])
        if lam < 0:
            flows.clamped[node] = -lam
            msg = (f"block '{node}': inferred exogenous demand {lam:.6g}/h is negative; "
                   f"clamped to 0 (observed occupancies are inconsistent with the routing)")
            flows.add_warning(msg)
            logger.warning(msg)
            lam = 0.0
        flows.lambda_inferred[node] = lam

    logger.info("estimated %d blocks, total cruising %.6g/h", len(ids), flows.total_rejection)
    return flows


def cruising_share(flows: NetworkFlows, block: BlockFace) -> CruisingShare:
    """
    Fraction of a block's through traffic that is rejected drivers

    Args:
        flows: Solved network
        block: Block with observed through_traffic

    Returns:
        CruisingShare clamped to [0, 1]; out_of_range set when the model
        predicts more cruising than was observed
    """
    if block.through_traffic is None or block.through_traffic <= 0:
        raise InvalidInputError(f"block '{block.id}': a positive through_traffic is required")
    if block.id not in flows.rejection_in:
        raise InvalidInputError(f"block '{block.id}' is not part of the solved network")

    inflow = flows.rejection_in[block.id]
    raw = inflow / block.through_traffic
    out_of_range = raw > 1.0
    if out_of_range:
        logger.warning("block '%s': modelled cruising %.6g/h exceeds observed through traffic %.6g/h",
                       block.id, inflow, block.through_traffic)
    return CruisingShare(
        block_id=block.id,
        rejection_inflow=inflow,
        through_traffic=block.through_traffic,
        share=min(1.0, max(0.0, raw)),
        out_of_range=out_of_range,
    )


def cruising_shares(flows: NetworkFlows, blocks: BlocksLike) -> Dict[str, CruisingShare]:
    """Cruising share of every block that reports through traffic"""
    values = blocks.values() if isinstance(blocks, Mapping) else blocks
    return {b.id: cruising_share(flows, b) for b in values
            if b.through_traffic is not None and b.through_traffic > 0}
