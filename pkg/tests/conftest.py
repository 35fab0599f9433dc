"""Shared fixtures for the curbflow test suite."""

from pathlib import Path
from typing import List

import pytest

from core import BlockFace, Edge, QueueParams, StreetGraph

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


def ring_graph(ids: List[str], both_ways: bool = True) -> StreetGraph:
    """Cycle over ids; both_ways makes every node degree 2"""
    edges = []
    n = len(ids)
    for i, node in enumerate(ids):
        edges.append(Edge(node, ids[(i + 1) % n]))
        if both_ways and n > 2:
            edges.append(Edge(node, ids[(i - 1) % n]))
    return StreetGraph(nodes=list(ids), edges=edges)


def make_blocks(ids: List[str], k: int = 1, mu: float = 1.0, **values) -> List[BlockFace]:
    return [BlockFace(id=i, params=QueueParams(k=k, mu=mu), **values) for i in ids]


@pytest.fixture
def two_cycle():
    """Two blocks sending every rejection to each other"""
    graph = ring_graph(["a", "b"])
    blocks = make_blocks(["a", "b"], k=1, mu=1.0, lam=0.5)
    return graph, blocks


@pytest.fixture
def mission_path() -> Path:
    return SCENARIOS / "mission" / "scenario.json"


@pytest.fixture
def ring4_path() -> Path:
    return SCENARIOS / "ring4" / "scenario.json"
