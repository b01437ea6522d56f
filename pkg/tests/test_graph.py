import io

import numpy as np
import pytest

from folkrec.graph import BipartiteGraph, build_graphs, dump_edges, norm_coefficient

from synth import random_bipartite_pair


class TestNormCoefficient:
    @pytest.mark.parametrize("deg_a,deg_b,expected", [(1, 1, 1.0), (4, 1, 0.5), (3, 12, 1.0 / 6.0)])
    def test_values(self, deg_a, deg_b, expected):
        assert norm_coefficient(deg_a, deg_b) == pytest.approx(expected, abs=1e-15)

    def test_zero_degree_rejected(self):
        with pytest.raises(ValueError):
            norm_coefficient(0, 3)


class TestBuildGraphs:
    def test_edges_are_binary(self):
        # two triples with the same (u, t) leave a single tagging edge
        triples = np.array([[0, 0, 0], [0, 0, 1]])
        graphs = build_graphs(triples, 1, 2, 1)
        assert graphs.tagging.n_edges == 1
        assert graphs.tagged.n_edges == 2

    def test_unit_degree_coefficient(self):
        graphs = build_graphs(np.array([[0, 0, 0]]), 1, 1, 1)
        _, coeffs = graphs.tagging.left_neighbors(0)
        assert coeffs[0] == 1.0

    def test_degree_four_coefficient(self):
        # u0 tags 4 distinct tags; each tag used by the single user
        triples = np.array([[0, t, 0] for t in range(4)])
        graphs = build_graphs(triples, 1, 1, 4)
        _, coeffs = graphs.tagging.left_neighbors(0)
        assert np.allclose(coeffs, 0.5)

    def test_coefficient_matches_scalar_formula(self):
        rng = np.random.default_rng(0)
        _, _, n_tags, ut, _ = random_bipartite_pair(rng)
        graph = BipartiteGraph.from_edges(ut[:, 0].max() + 1, n_tags, ut[:, 0], ut[:, 1])
        left, right, coeffs = graph.edge_arrays()
        for a, b, c in zip(left, right, coeffs):
            assert c == norm_coefficient(int(graph.left_deg[a]), int(graph.right_deg[b]))

    def test_isolated_nodes_allowed(self):
        graphs = build_graphs(np.array([[0, 0, 0]]), 3, 3, 3)
        assert graphs.tagging.left_deg.tolist() == [1, 0, 0]
        neighbors, _ = graphs.tagging.left_neighbors(2)
        assert neighbors.size == 0

    def test_duplicate_edges_rejected(self):
        with pytest.raises(ValueError):
            BipartiteGraph.from_edges(2, 2, np.array([0, 0]), np.array([1, 1]))


class TestGraphInvariants:
    @pytest.mark.parametrize("seed", range(8))
    def test_transpose_consistency(self, seed):
        rng = np.random.default_rng(seed)
        n_users, n_items, n_tags, ut, it = random_bipartite_pair(rng, max_nodes=30)
        graphs = build_graphs(_triples_from(ut, it), n_users, n_items, n_tags)
        for graph in (graphs.tagging, graphs.tagged):
            left_edges = set()
            for a in range(graph.n_left):
                neighbors, _ = graph.left_neighbors(a)
                left_edges.update((a, int(b)) for b in neighbors)
            right_edges = set()
            for b in range(graph.n_right):
                neighbors, _ = graph.right_neighbors(b)
                right_edges.update((int(a), b) for a in neighbors)
            assert left_edges == right_edges

    @pytest.mark.parametrize("seed", range(8))
    def test_degree_sum_identity(self, seed):
        rng = np.random.default_rng(100 + seed)
        n_users, n_items, n_tags, ut, it = random_bipartite_pair(rng, max_nodes=30)
        graphs = build_graphs(_triples_from(ut, it), n_users, n_items, n_tags)
        for graph in (graphs.tagging, graphs.tagged):
            assert graph.left_deg.sum() == graph.n_edges
            assert graph.right_deg.sum() == graph.n_edges

    def test_neighbor_lists_sorted_unique(self):
        rng = np.random.default_rng(9)
        n_users, n_items, n_tags, ut, it = random_bipartite_pair(rng, max_nodes=30)
        graphs = build_graphs(_triples_from(ut, it), n_users, n_items, n_tags)
        for graph in (graphs.tagging, graphs.tagged):
            for a in range(graph.n_left):
                neighbors, _ = graph.left_neighbors(a)
                assert np.all(np.diff(neighbors) > 0)

    def test_regular_graph_coefficients_sum_to_one(self):
        # complete bipartite 3x3: every node has degree 3, one aggregation
        # step over coefficients sums to 3 * (1/3) = 1
        triples = np.array([[u, t, u] for u in range(3) for t in range(3)])
        graphs = build_graphs(triples, 3, 3, 3)
        for a in range(3):
            _, coeffs = graphs.tagging.left_neighbors(a)
            assert coeffs.sum() == pytest.approx(1.0, abs=1e-12)


def _triples_from(ut: np.ndarray, it: np.ndarray) -> np.ndarray:
    """Stitch user-tag and item-tag edge lists into triples inducing them.

    Only used to produce inputs for build_graphs whose induced edges are a
    superset union; for transpose/degree invariants the exact triples do
    not matter, so pair each edge with entity 0 on the missing side.
    """
    rows = [(int(u), int(t), 0) for u, t in ut] + [(0, int(t), int(i)) for i, t in it]
    return np.asarray(sorted(set(rows)), dtype=np.int64)


class TestDump:
    def test_dump_format_and_precision(self):
        graphs = build_graphs(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]]), 3, 1, 1)
        out = io.StringIO()
        dump_edges(graphs, out)
        lines = out.getvalue().splitlines()
        assert len(lines) == 4  # 3 tagging edges + 1 tagged edge
        side, a, b, coeff = lines[0].split("\t")
        assert side == "tagging"
        # 1/sqrt(1*3) printed at 17 significant digits round-trips exactly
        assert float(coeff) == 1.0 / np.sqrt(3.0)
