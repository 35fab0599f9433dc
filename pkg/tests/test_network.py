"""Tests for graph checks, forward solves, estimation and cruising share."""

from dataclasses import replace

import numpy as np
import pytest

from conftest import make_blocks, ring_graph
from core import (
    BlockFace,
    ConvergenceError,
    Edge,
    InstabilityError,
    InvalidInputError,
    IssueKind,
    QueueParams,
    SolveMode,
    SolverOptions,
    StreetGraph,
    cruising_share,
    cruising_shares,
    estimate_from_occupancy,
    forward_solve,
    routing_matrix,
    solve_uniform,
    validate_graph,
)


def random_network(rng: np.random.Generator):
    """Strongly connected random graph with stable, moderately loaded blocks"""
    n = int(rng.integers(2, 13))
    ids = [f"n{i}" for i in range(n)]
    edges = [Edge(ids[i], ids[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and j != (i + 1) % n and rng.random() < 0.25:
                edges.append(Edge(ids[i], ids[j]))
    graph = StreetGraph(nodes=ids, edges=edges)
    blocks = []
    for node in ids:
        params = QueueParams(k=int(rng.integers(1, 15)), mu=float(rng.uniform(0.5, 2.0)))
        lam = float(rng.uniform(0.1, 0.6)) * params.capacity
        blocks.append(BlockFace(id=node, params=params, lam=lam))
    return graph, blocks


class TestValidateGraph:
    """Structural checks; reports, never raises."""

    def test_clean_ring(self):
        report = validate_graph(ring_graph(["a", "b", "c", "d"]))
        assert report.is_clean

    def test_duplicate_node(self):
        graph = StreetGraph(nodes=["a", "a", "b"], edges=[Edge("a", "b"), Edge("b", "a")])
        assert IssueKind.DUPLICATE_NODE in validate_graph(graph).kinds()

    def test_self_loop(self):
        graph = StreetGraph(nodes=["a", "b"], edges=[Edge("a", "a"), Edge("a", "b"), Edge("b", "a")])
        report = validate_graph(graph)
        assert IssueKind.SELF_LOOP in report.kinds()
        assert report.errors

    def test_dangling_endpoint(self):
        graph = StreetGraph(nodes=["a", "b"], edges=[Edge("a", "b"), Edge("b", "zzz")])
        report = validate_graph(graph)
        assert IssueKind.DANGLING_ENDPOINT in report.kinds()
        assert any("zzz" in i.message for i in report.errors)

    def test_negative_weight(self):
        graph = StreetGraph(nodes=["a", "b"], edges=[Edge("a", "b", -0.5), Edge("b", "a")])
        assert IssueKind.NEGATIVE_WEIGHT in validate_graph(graph).kinds()

    def test_non_stochastic_row(self):
        graph = StreetGraph(nodes=["a", "b", "c"], edges=[
            Edge("a", "b", 0.5), Edge("a", "c", 0.2), Edge("b", "a"), Edge("c", "a"),
        ])
        report = validate_graph(graph)
        assert [i.node for i in report.issues if i.kind is IssueKind.NON_STOCHASTIC] == ["a"]

    def test_blank_weights_fill_remainder(self):
        graph = StreetGraph(nodes=["a", "b", "c"], edges=[
            Edge("a", "b", 0.7), Edge("a", "c"), Edge("b", "a"), Edge("c", "a"),
        ])
        assert validate_graph(graph).is_clean
        assert graph.resolved_weights()[("a", "c")] == pytest.approx(0.3)

    def test_sink_is_warning(self):
        graph = StreetGraph(nodes=["a", "b"], edges=[Edge("a", "b")])
        report = validate_graph(graph)
        assert report.kinds() == [IssueKind.SINK_NODE]
        assert not report.errors

    def test_disconnected(self):
        graph = StreetGraph(nodes=["a", "b", "c", "d"], edges=[
            Edge("a", "b"), Edge("b", "a"), Edge("c", "d"), Edge("d", "c"),
        ])
        report = validate_graph(graph)
        assert report.kinds() == [IssueKind.DISCONNECTED]
        assert "2 disconnected components" in report.issues[0].message

    def test_weak_connectivity_is_enough(self):
        """A one-way chain ending in a sink is still one component."""
        graph = StreetGraph(nodes=["a", "b", "c"], edges=[Edge("a", "b"), Edge("b", "c")])
        assert IssueKind.DISCONNECTED not in validate_graph(graph).kinds()


class TestRoutingMatrix:

    def test_uniform_split(self):
        ids, R = routing_matrix(ring_graph(["a", "b", "c", "d"]))
        assert ids == ["a", "b", "c", "d"]
        assert R.sum(axis=1) == pytest.approx([1.0] * 4)
        assert R[0, 1] == pytest.approx(0.5)
        assert R[0, 3] == pytest.approx(0.5)
        assert R[0, 2] == 0.0


class TestForwardSolve:
    """Exogenous demand -> flows."""

    def test_two_cycle(self, two_cycle):
        """Symmetric two-node cycle reduces to the uniform solution with d = 1."""
        graph, blocks = two_cycle
        flows = forward_solve(graph, blocks)
        assert flows.mode is SolveMode.FORWARD
        assert flows.converged
        assert flows.y["a"] == pytest.approx(1.0, abs=1e-8)
        assert flows.y["b"] == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("n,k,lam", [(4, 1, 0.5), (4, 3, 2.0), (6, 5, 4.0)])
    def test_symmetric_ring_matches_uniform(self, n, k, lam):
        ids = [f"b{i}" for i in range(n)]
        graph = ring_graph(ids)
        blocks = make_blocks(ids, k=k, mu=1.0, lam=lam)
        flows = forward_solve(graph, blocks, SolverOptions(tol=1e-13))
        expected = solve_uniform(QueueParams(k=k, mu=1.0), lam, 2)
        for node in ids:
            assert flows.y[node] == pytest.approx(expected.y, abs=1e-8)
            assert flows.edge_flow[(node, ids[(ids.index(node) + 1) % n])] == pytest.approx(
                expected.per_neighbor_rejection, abs=1e-8)

    def test_flow_conservation(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            graph, blocks = random_network(rng)
            flows = forward_solve(graph, blocks, SolverOptions(tol=1e-12))
            for b in blocks:
                assert flows.y[b.id] == pytest.approx(b.lam + flows.rejection_in[b.id], abs=1e-6)
            # without sinks every driver eventually parks
            carried = sum(flows.y[b.id] - flows.rejection_out[b.id] for b in blocks)
            assert carried == pytest.approx(sum(b.lam for b in blocks), abs=1e-6)

    def test_damping_does_not_change_solution(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            graph, blocks = random_network(rng)
            solutions = [forward_solve(graph, blocks, SolverOptions(damping=theta, tol=1e-12))
                         for theta in (0.3, 0.5, 0.8)]
            for b in blocks:
                values = [s.y[b.id] for s in solutions]
                assert max(values) - min(values) <= 1e-8 * max(1.0, values[0])

    def test_more_demand_never_lowers_arrivals(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            graph, blocks = random_network(rng)
            base = forward_solve(graph, blocks, SolverOptions(tol=1e-12))
            i = int(rng.integers(len(blocks)))
            bumped = list(blocks)
            bumped[i] = replace(blocks[i], lam=blocks[i].lam * 1.2)
            more = forward_solve(graph, bumped, SolverOptions(tol=1e-12))
            assert more.y[blocks[i].id] > base.y[blocks[i].id]
            for b in blocks:
                assert more.y[b.id] >= base.y[b.id] - 1e-9

    def test_accepts_mapping(self, two_cycle):
        graph, blocks = two_cycle
        flows = forward_solve(graph, {b.id: b for b in blocks})
        assert set(flows.y) == {"a", "b"}

    def test_sink_drivers_leave(self):
        graph = StreetGraph(nodes=["a", "b"], edges=[Edge("a", "b")])
        blocks = make_blocks(["a", "b"], k=1, mu=1.0, lam=0.5)
        flows = forward_solve(graph, blocks)
        assert flows.y["a"] == pytest.approx(0.5, abs=1e-12)
        assert flows.rejection_in["b"] == pytest.approx(0.5 * 0.5 / 1.5, abs=1e-10)
        assert any("no out-edges" in w for w in flows.warnings)

    def test_unstable(self):
        graph = ring_graph(["a", "b"])
        blocks = make_blocks(["a", "b"], k=1, mu=1.0, lam=1.0)
        with pytest.raises(InstabilityError):
            forward_solve(graph, blocks)

    def test_convergence_error_carries_iterate(self, two_cycle):
        graph, blocks = two_cycle
        with pytest.raises(ConvergenceError) as info:
            forward_solve(graph, blocks, SolverOptions(max_iter=2))
        assert set(info.value.last_iterate) == {"a", "b"}
        assert info.value.iterations == 2
        assert info.value.residual > 0

    def test_invalid_graph(self):
        graph = StreetGraph(nodes=["a", "b"], edges=[Edge("a", "c"), Edge("b", "a")])
        with pytest.raises(InvalidInputError, match="unknown block 'c'"):
            forward_solve(graph, make_blocks(["a", "b"], lam=0.1))

    def test_missing_lambda(self, two_cycle):
        graph, _ = two_cycle
        with pytest.raises(InvalidInputError, match="lambda"):
            forward_solve(graph, make_blocks(["a", "b"]))

    def test_missing_block(self, two_cycle):
        graph, blocks = two_cycle
        with pytest.raises(InvalidInputError, match="no parameters"):
            forward_solve(graph, blocks[:1])


class TestEstimate:
    """Observed occupancy -> flows."""

    def test_round_trip(self):
        """forward_solve -> estimate_from_occupancy recovers demand."""
        rng = np.random.default_rng(5)
        for _ in range(50):
            graph, blocks = random_network(rng)
            forward = forward_solve(graph, blocks, SolverOptions(tol=1e-13))
            observed = [
                BlockFace(id=b.id, params=b.params, observed_u=forward.occupancy[b.id]) for b in blocks
            ]
            est = estimate_from_occupancy(graph, observed)
            assert est.mode is SolveMode.ESTIMATE
            assert not est.clamped
            for b in blocks:
                assert est.lambda_inferred[b.id] == pytest.approx(b.lam, abs=1e-6)
                assert est.y[b.id] == pytest.approx(forward.y[b.id], abs=1e-6)

    def test_negative_demand_clamped(self):
        """A quiet block next to a saturated one cannot absorb all the spill."""
        graph = ring_graph(["hot", "quiet"])
        blocks = [
            BlockFace(id="hot", params=QueueParams(k=2, mu=1.0), observed_u=0.95),
            BlockFace(id="quiet", params=QueueParams(k=2, mu=1.0), observed_u=0.1),
        ]
        flows = estimate_from_occupancy(graph, blocks)
        assert flows.lambda_inferred["quiet"] == 0.0
        assert flows.clamped["quiet"] > 0
        assert any("clamped" in w for w in flows.warnings)

    def test_needs_observations(self, two_cycle):
        graph, blocks = two_cycle
        with pytest.raises(InvalidInputError, match="observed occupancy"):
            estimate_from_occupancy(graph, blocks)


class TestCruisingShare:

    def test_one_third(self):
        graph = StreetGraph(nodes=["src", "dst"], edges=[Edge("src", "dst"), Edge("dst", "src")])
        flows = forward_solve(graph, make_blocks(["src", "dst"], k=1, mu=1.0, lam=0.5))
        inflow = flows.rejection_in["dst"]
        block = BlockFace(id="dst", params=QueueParams(k=1, mu=1.0), through_traffic=3 * inflow)
        share = cruising_share(flows, block)
        assert share.share == pytest.approx(1 / 3)
        assert not share.out_of_range

    def test_out_of_range_is_clamped(self, two_cycle):
        graph, blocks = two_cycle
        flows = forward_solve(graph, blocks)
        block = BlockFace(id="a", params=QueueParams(k=1, mu=1.0), through_traffic=0.1)
        share = cruising_share(flows, block)
        assert share.share == 1.0
        assert share.out_of_range

    def test_needs_through_traffic(self, two_cycle):
        graph, blocks = two_cycle
        flows = forward_solve(graph, blocks)
        with pytest.raises(InvalidInputError, match="through_traffic"):
            cruising_share(flows, blocks[0])

    def test_shares_skip_blocks_without_counts(self, two_cycle):
        graph, blocks = two_cycle
        flows = forward_solve(graph, blocks)
        blocks[1].through_traffic = 2.0
        assert list(cruising_shares(flows, blocks)) == ["b"]
