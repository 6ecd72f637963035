import numpy as np
import pytest

from conftest import random_er_graph
from liftwave.graphs import (
    GraphError,
    build_graph,
    clustering_coefficient,
    load_edge_list,
    normalized_laplacian,
    permute_graph,
    reorder_graph,
)


class TestBuildGraph:
    def test_single_unit_edge(self):
        g = build_graph([(0, 1)], 2)
        assert np.array_equal(g.adjacency().toarray(), [[0, 1], [1, 0]])

    def test_symmetric_duplicate_merges_by_sum(self):
        g = build_graph([(0, 1), (1, 0)], 2)
        assert np.array_equal(g.adjacency().toarray(), [[0, 2], [2, 0]])

    def test_karate_degree(self, karate):
        assert karate.num_nodes == 34
        assert karate.num_edges == 78
        # node 0 has 16 incident edges in the published list
        assert karate.degrees(weighted=False)[0] == 16

    def test_self_loop_rejected(self):
        with pytest.raises(GraphError):
            build_graph([(1, 1)], 3)

    def test_index_out_of_range(self):
        with pytest.raises(GraphError):
            build_graph([(0, 5)], 3)

    def test_negative_weight(self):
        with pytest.raises(GraphError):
            build_graph([(0, 1, -2.0)], 3)


class TestNormalizedLaplacian:
    def test_two_node_unit_edge(self):
        lap = normalized_laplacian(build_graph([(0, 1)], 2))
        assert np.allclose(lap.toarray(), [[1, -1], [-1, 1]], atol=0)

    def test_edgeless_graph_is_identity(self):
        lap = normalized_laplacian(build_graph([], 3))
        assert np.array_equal(lap.toarray(), np.eye(3))

    def test_karate_spectrum_in_range(self, karate):
        vals = np.linalg.eigvalsh(normalized_laplacian(karate).toarray())
        assert vals[-1] <= 2 + 1e-10
        assert vals[0] >= -1e-10
        # frozen from an independent unweighted-Laplacian eigensolve
        assert vals[-1] == pytest.approx(1.7146113474736235, abs=1e-10)

    def test_symmetric_and_psd_on_random_graphs(self, rng):
        for _ in range(10):
            g = random_er_graph(int(rng.integers(3, 30)), 0.3, rng)
            lap = normalized_laplacian(g).toarray()
            assert np.array_equal(lap, lap.T)
            assert np.linalg.eigvalsh(lap)[0] >= -1e-10

    def test_regular_graph_row_sums(self):
        # cycle is 2-regular: rows of D^{-1/2} W D^{-1/2} sum to 1
        g = build_graph([(i, (i + 1) % 8) for i in range(8)], 8)
        lap = normalized_laplacian(g).toarray()
        walk = np.eye(8) - lap
        assert np.max(np.abs(walk.sum(axis=1) - 1)) <= 1e-12

    def test_permutation_consistency(self, rng):
        g = random_er_graph(12, 0.4, rng)
        perm = rng.permutation(12)
        mat = np.zeros((12, 12))
        mat[perm, np.arange(12)] = 1.0
        lap = normalized_laplacian(g).toarray()
        lap_p = normalized_laplacian(permute_graph(g, perm)).toarray()
        assert np.max(np.abs(lap_p - mat @ lap @ mat.T)) <= 1e-12

    def test_isolated_node_row(self):
        lap = normalized_laplacian(build_graph([(0, 1)], 3)).toarray()
        assert np.array_equal(lap[2], [0, 0, 1])


class TestClusteringCoefficient:
    def test_triangle(self):
        g = build_graph([(0, 1), (1, 2), (0, 2)], 3)
        assert clustering_coefficient(g, 0) == 1.0

    def test_path_midpoint(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        assert clustering_coefficient(g, 1) == 0.0

    def test_low_degree_is_zero(self):
        g = build_graph([(0, 1)], 2)
        assert clustering_coefficient(g, 0) == 0.0

    def test_karate_node0_brute_force(self, karate):
        nbrs = set(karate.neighbors(0).tolist())
        pairs = [(u, v) for u in nbrs for v in nbrs if u < v]
        edges = {(int(a), int(b)) for a, b in zip(karate.src, karate.dst)}
        triangles = sum((u, v) in edges for u, v in pairs)
        k = len(nbrs)
        expected = 2 * triangles / (k * (k - 1))
        assert expected == 0.15  # frozen from the enumeration above
        assert clustering_coefficient(karate, 0) == pytest.approx(expected, abs=0)


class TestPermuteReorder:
    def test_reorder_inverts_permute(self, rng):
        g = random_er_graph(9, 0.4, rng)
        order = rng.permutation(9)
        g2 = reorder_graph(g, order)
        w = g.adjacency().toarray()
        w2 = g2.adjacency().toarray()
        assert np.array_equal(w2, w[np.ix_(order, order)])

    def test_features_follow_nodes(self, rng):
        feats = rng.normal(size=(5, 3))
        g = build_graph([(0, 1), (2, 3)], 5, node_features=feats, node_labels=np.arange(5))
        perm = np.array([4, 3, 2, 1, 0])
        gp = permute_graph(g, perm)
        for old in range(5):
            assert np.array_equal(gp.node_features[perm[old]], feats[old])
            assert gp.node_labels[perm[old]] == old


class TestEdgeListIO:
    def test_roundtrip_with_comments(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("# demo\n0 1\n1 2 2.5\n\n2 0  # inline\n")
        g = load_edge_list(path)
        assert g.num_nodes == 3
        w = g.adjacency().toarray()
        assert w[1, 2] == 2.5 and w[0, 1] == 1.0 and w[0, 2] == 1.0

    def test_one_based_flag(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("1 2\n2 3\n")
        g = load_edge_list(path, one_based=True)
        assert g.num_nodes == 3
        assert g.adjacency().toarray()[0, 1] == 1.0
