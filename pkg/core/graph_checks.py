"""
graph_checks.py - Street Graph Checks

Structural checks run before any network solve. Findings are collected into a
GraphReport; nothing here raises.
"""

from collections import Counter
from typing import Dict, List, Tuple
import logging

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .models_net import Edge, GraphReport, IssueKind, StreetGraph

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-9


def check_node_ids(graph: StreetGraph, report: GraphReport) -> None:
    """Duplicate block ids"""
    for node, count in Counter(graph.nodes).items():
        if count > 1:
            report.add(IssueKind.DUPLICATE_NODE, f"block id '{node}' appears {count} times", node)


def check_edges(graph: StreetGraph, report: GraphReport) -> None:
    """Self-loops, unknown endpoints and negative weights"""
    known = set(graph.nodes)
    for e in graph.edges:
        if e.source == e.target:
            report.add(IssueKind.SELF_LOOP, f"edge {e.source} -> {e.target} is a self-loop", e.source)
        for end in (e.source, e.target):
            if end not in known:
                report.add(
                    IssueKind.DANGLING_ENDPOINT,
                    f"edge {e.source} -> {e.target} references unknown block '{end}'",
                    end,
                )
        if e.weight is not None and (np.isnan(e.weight) or e.weight < 0):
            report.add(
                IssueKind.NEGATIVE_WEIGHT,
                f"edge {e.source} -> {e.target} has negative weight {e.weight}",
                e.source,
            )


def check_rows(graph: StreetGraph, report: GraphReport) -> None:
    """
    Row-stochastic routing and sink nodes

    A row with blank weights is stochastic as long as its explicit weights do
    not already exceed 1; a row of explicit weights must sum to 1.
    """
    rows: Dict[str, List[Edge]] = {node: [] for node in graph.nodes}
    for e in graph.edges:
        rows.setdefault(e.source, []).append(e)

    for node in dict.fromkeys(graph.nodes):
        out = rows.get(node, [])
        if not out:
            report.add(
                IssueKind.SINK_NODE,
                f"block '{node}' has no out-edges; its rejected drivers leave the network",
                node,
            )
            continue
        explicit = sum(e.weight for e in out if e.weight is not None)
        has_blank = any(e.weight is None for e in out)
        if has_blank:
            ok = explicit <= 1.0 + STOCHASTIC_TOL
        else:
            ok = abs(explicit - 1.0) <= STOCHASTIC_TOL
        if not ok:
            report.add(
                IssueKind.NON_STOCHASTIC,
                f"out-weights of block '{node}' sum to {explicit:.6g}, expected 1",
                node,
            )


def weak_components(graph: StreetGraph) -> Tuple[int, np.ndarray]:
    """
    Weakly connected components over known nodes

    Returns:
        (component count, label per node in graph.nodes order)
    """
    index = {node: i for i, node in enumerate(dict.fromkeys(graph.nodes))}
    pairs = [(index[e.source], index[e.target]) for e in graph.edges
             if e.source in index and e.target in index]
    n = len(index)
    if n == 0:
        return 0, np.zeros(0, dtype=int)
    rows = np.array([p[0] for p in pairs], dtype=int)
    cols = np.array([p[1] for p in pairs], dtype=int)
    adjacency = csr_matrix((np.ones(len(pairs)), (rows, cols)), shape=(n, n))
    return connected_components(adjacency, directed=True, connection="weak")


def check_connectivity(graph: StreetGraph, report: GraphReport) -> None:
    """Flag graphs that split into several weakly connected pieces"""
    count, labels = weak_components(graph)
    if count <= 1:
        return
    nodes = list(dict.fromkeys(graph.nodes))
    groups: Dict[int, List[str]] = {}
    for node, label in zip(nodes, labels):
        groups.setdefault(int(label), []).append(node)
    listing = "; ".join("{" + ", ".join(g) + "}" for g in groups.values())
    report.add(IssueKind.DISCONNECTED, f"street graph has {count} disconnected components: {listing}")


def validate_graph(graph: StreetGraph) -> GraphReport:
    """
    Run every structural check

    Args:
        graph: Street graph

    Returns:
        GraphReport; empty for a clean graph
    """
    report = GraphReport()
    check_node_ids(graph, report)
    check_edges(graph, report)
    check_rows(graph, report)
    check_connectivity(graph, report)
    for issue in report.issues:
        logger.debug("graph check: %s (%s)", issue.message, issue.kind.value)
    return report
