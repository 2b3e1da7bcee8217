"""Hypergraph construction, expansions, shift operators, and .hg round trips."""

import itertools

import numpy as np
import pytest

from hennkit.errors import AssumptionError, ConfigError
from hennkit.hypergraph import (
    GSO_KINDS,
    Hypergraph,
    ShiftOperator,
    bipartite_expansion,
    clique_expansion,
    degree_matrices,
    gso,
    incidence,
    line_graph,
    load_hg,
    normalized_adjacency,
    normalized_laplacian,
    raw_line_operator,
    save_hg,
    star_expansion,
)
from hennkit.spectral import eigendecompose

# The running example: 7 nodes, e1 = {v1..v4}, e2 = {v4, v6, v7}, e3 = {v4, v5}
FIG_EDGES = [[0, 1, 2, 3], [3, 5, 6], [3, 4]]


def fig_hypergraph():
    return Hypergraph(7, FIG_EDGES)


class TestHypergraphValidation:
    def test_duplicate_node_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            Hypergraph(3, [[0, 0, 1]])

    def test_singleton_edge_rejected(self):
        with pytest.raises(ConfigError, match="cardinality"):
            Hypergraph(3, [[0], [1, 2]])

    def test_out_of_range_index_rejected(self):
        with pytest.raises(ConfigError, match="outside"):
            Hypergraph(3, [[0, 3]])

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(ConfigError, match="positive"):
            Hypergraph(2, [[0, 1]], [0.0])

    def test_uncovered_node_rejected(self):
        with pytest.raises(ConfigError, match="no hyperedge"):
            Hypergraph(4, [[0, 1]])

    def test_counts(self):
        h = fig_hypergraph()
        assert (h.n, h.m) == (7, 3)


class TestIncidence:
    def test_two_edge_chain(self):
        h = Hypergraph(3, [[0, 1], [1, 2]])
        assert np.array_equal(incidence(h), [[1, 0], [1, 1], [0, 1]])

    def test_single_triangle_edge(self):
        h = Hypergraph(3, [[0, 1, 2]])
        assert np.array_equal(incidence(h), [[1], [1], [1]])

    def test_block_diagonal(self):
        h = Hypergraph(4, [[0, 1], [2, 3]])
        assert np.array_equal(incidence(h), [[1, 0], [1, 0], [0, 1], [0, 1]])

    def test_column_sums_are_cardinalities(self):
        h = fig_hypergraph()
        assert np.array_equal(incidence(h).sum(axis=0), [4, 3, 2])


class TestExpansions:
    def test_single_hyperedge_clique(self):
        h = Hypergraph(3, [[0, 1, 2]])
        expected = np.ones((3, 3)) - np.eye(3)
        assert np.array_equal(clique_expansion(h), expected)

    def test_parallel_edges_add_weights(self):
        h = Hypergraph(2, [[0, 1], [0, 1]], [1.0, 2.0])
        # oracle: dense B W B^T with the diagonal removed
        b = incidence(h)
        oracle = b @ np.diag(h.weights) @ b.T
        np.fill_diagonal(oracle, 0.0)
        assert np.array_equal(clique_expansion(h), oracle)
        assert clique_expansion(h)[0, 1] == 3.0

    def test_fig_clique_contains_fake_triangle(self):
        a = clique_expansion(fig_hypergraph())
        # the clique on {v4, v6, v7} from e2 is indistinguishable from a hyperedge
        for i, j in [(3, 5), (3, 6), (5, 6)]:
            assert a[i, j] > 0

    def test_line_graph_chain(self):
        h = Hypergraph(3, [[0, 1], [1, 2]])
        b = incidence(h)
        oracle = b.T @ b
        np.fill_diagonal(oracle, 0.0)
        assert np.array_equal(line_graph(h), oracle)
        assert line_graph(h)[0, 1] == 1.0

    def test_line_graph_disjoint_is_empty(self):
        h = Hypergraph(4, [[0, 1], [2, 3]])
        assert np.all(line_graph(h) == 0)

    def test_fig_line_graph_is_triangle(self):
        a = line_graph(fig_hypergraph())
        assert np.array_equal(a > 0, np.ones((3, 3), dtype=bool) ^ np.eye(3, dtype=bool))

    def test_bipartite_single_edge_is_path(self):
        h = Hypergraph(2, [[0, 1]])
        a = bipartite_expansion(h)
        # node0 - e0 - node1: vertices (n0, n1, e0)
        expected = np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0]], dtype=float)
        assert np.array_equal(a, expected)

    def test_bipartite_fig_counts(self):
        a = bipartite_expansion(fig_hypergraph())
        assert a.shape == (10, 10)
        # oracle: number of incidence ones
        assert np.count_nonzero(a) // 2 == int(incidence(fig_hypergraph()).sum())

    def test_star_single_edge(self):
        a, pairs = star_expansion(Hypergraph(2, [[0, 1]]))
        assert len(pairs) == 2
        assert a.sum() == 2  # one undirected edge


class TestGso:
    def test_clique_henn_single_edge(self):
        s = gso(Hypergraph(2, [[0, 1]]), "clique-henn")
        assert np.allclose(s.matrix, [[1, 1], [1, 1]])
        assert np.allclose(np.linalg.eigvalsh(s.matrix), [0, 2])

    def test_hgnn_single_edge(self):
        s = gso(Hypergraph(2, [[0, 1]]), "hgnn")
        assert np.allclose(s.matrix, [[0.5, 0.5], [0.5, 0.5]])
        assert np.allclose(np.linalg.eigvalsh(s.matrix), [0, 1])

    def test_dense_formula_oracle(self):
        h = fig_hypergraph()
        b = incidence(h)
        w = np.diag(h.weights)
        dv = np.diag(b @ h.weights)
        oracle = np.linalg.inv(np.sqrt(dv)) @ b @ w @ b.T @ np.linalg.inv(np.sqrt(dv))
        assert np.allclose(gso(h, "clique-henn").matrix, oracle)

    def test_line_henn_matches_raw_for_unit_weights(self):
        h = fig_hypergraph()
        assert np.allclose(gso(h, "line-henn").matrix, raw_line_operator(h))

    def test_line_henn_symmetric_for_nonuniform_weights(self):
        h = Hypergraph(4, [[0, 1, 2], [1, 2, 3], [0, 3]], [1.0, 2.0, 5.0])
        raw = raw_line_operator(h)
        assert not np.allclose(raw, raw.T)  # the one-sided form is asymmetric
        s = gso(h, "line-henn")
        assert np.array_equal(s.matrix, s.matrix.T)

    def test_hgnn_plus_coincides_with_hgnn(self):
        # similarity symmetrization of D_v^{-1} B W D_e^{-1} B^T lands on hgnn
        h = fig_hypergraph()
        assert np.array_equal(gso(h, "hgnn-plus").matrix, gso(h, "hgnn").matrix)

    @pytest.mark.parametrize("kind", ["clique-henn", "line-henn", "hgnn", "hgnn-plus"])
    def test_symmetric_psd_all_kinds(self, kind):
        h = Hypergraph(5, [[0, 1, 2], [2, 3], [3, 4], [0, 4, 1]], [0.5, 2.0, 1.0, 3.0])
        s = gso(h, kind)
        assert np.array_equal(s.matrix, s.matrix.T)
        vals = np.linalg.eigvalsh(s.matrix)
        assert vals[0] >= -1e-9 * max(vals[-1], 1.0)

    @pytest.mark.parametrize("kind", ["clique-henn", "line-henn", "hgnn"])
    def test_node_permutation_covariance(self, kind):
        rng = np.random.default_rng(3)
        h = Hypergraph(6, [[0, 1, 2], [2, 3], [3, 4, 5], [0, 5]], [1.0, 0.5, 2.0, 1.5])
        perm = rng.permutation(6)
        hp = h.permute_nodes(perm)  # node i of h becomes node perm[i]
        s = gso(h, kind).matrix
        sp = gso(hp, kind).matrix
        if kind == "line-henn":
            # node relabeling leaves hyperedge intersections untouched
            assert np.array_equal(sp, s)
        else:
            # exact congruence: sp[perm[i], perm[j]] == s[i, j] bit for bit
            assert np.array_equal(sp[np.ix_(perm, perm)], s)

    def test_degree_matrices(self):
        h = Hypergraph(3, [[0, 1], [1, 2]], [2.0, 3.0])
        d = degree_matrices(h)
        assert np.array_equal(d.node_degrees, [2.0, 5.0, 3.0])
        assert np.array_equal(d.edge_sizes, [2, 2])
        # weighted line-graph degree including the self term
        assert np.array_equal(d.edge_intersection_degrees, [2 * 2 + 3 * 1, 2 * 1 + 3 * 2])


class TestDualAndUniform:
    def test_dual_clique_equals_line_graph_exhaustive(self):
        # all hypergraphs with 2 or 3 hyperedges drawn from subsets of 4 nodes
        pool = [c for k in (2, 3, 4) for c in itertools.combinations(range(4), k)]
        checked = 0
        for count in (2, 3):
            for edges in itertools.combinations(pool, count):
                try:
                    h = Hypergraph(4, list(edges))
                    dual = h.dual()
                except ConfigError:
                    continue
                assert np.array_equal(clique_expansion(dual), line_graph(h))
                checked += 1
        assert checked > 100

    def test_two_uniform_matches_graph(self):
        # on a 2-uniform hypergraph B W B^T = A + D_v
        h = Hypergraph(4, [[0, 1], [1, 2], [2, 3], [0, 3], [0, 2]], [1.0, 2.0, 1.5, 1.0, 3.0])
        b = incidence(h)
        gram = (b * h.weights) @ b.T
        a = clique_expansion(h)
        dv = np.diag(degree_matrices(h).node_degrees)
        assert np.allclose(gram, a + dv)


class TestNormalizedLaplacian:
    def test_complete_graph_eigenvalues(self):
        a = np.ones((3, 3)) - np.eye(3)
        s = normalized_laplacian(a)
        assert np.allclose(np.linalg.eigvalsh(s.matrix), [0.0, 1.5, 1.5])

    def test_single_edge(self):
        s = normalized_laplacian(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(s.matrix, [[1, -1], [-1, 1]])
        assert np.allclose(np.linalg.eigvalsh(s.matrix), [0, 2])

    def test_kernel_vector_is_sqrt_degrees(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0.5, 2.0, size=(6, 6))
        a = np.triu(a, 1)
        a = a + a.T
        s = normalized_laplacian(a)
        d = a.sum(axis=1)
        assert np.allclose(s.matrix @ np.sqrt(d), 0.0, atol=1e-12)

    def test_disconnected_rejected_with_count(self):
        a = np.zeros((4, 4))
        a[0, 1] = a[1, 0] = 1.0
        a[2, 3] = a[3, 2] = 1.0
        with pytest.raises(AssumptionError, match="2 components"):
            normalized_laplacian(a)

    def test_normalized_adjacency_indefinite_but_allowed(self):
        s = normalized_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert s.kind == "adjacency-normalized"
        assert np.linalg.eigvalsh(s.matrix)[0] < 0


class TestShiftOperator:
    def test_asymmetric_rejected(self):
        with pytest.raises(AssumptionError, match="symmetric"):
            ShiftOperator(np.array([[0.0, 1.0], [0.0, 0.0]]), "custom")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError, match="kind"):
            ShiftOperator(np.eye(2), "whatever")

    def test_non_psd_tagged_kind_rejected_at_spectrum(self):
        s = ShiftOperator(np.diag([1.0, -1.0]), "custom")
        eigendecompose(s)  # custom kind: fine
        bad = ShiftOperator(np.diag([1.0, -1.0]), "normalized-laplacian")
        with pytest.raises(AssumptionError, match="PSD"):
            eigendecompose(bad)

    def test_kind_list_is_stable(self):
        assert set(GSO_KINDS) >= {"clique-henn", "line-henn", "hgnn", "hgnn-plus"}


class TestHgFormat:
    def test_round_trip(self, tmp_path):
        h = Hypergraph(5, [[0, 1, 2], [2, 3], [3, 4]], [1.5, 2.0, 0.25])
        path = tmp_path / "example.hg"
        save_hg(h, path)
        back = load_hg(path)
        assert back.n == h.n
        assert back.edges == h.edges
        assert np.array_equal(back.weights, h.weights)

    def test_comments_and_layout(self, tmp_path):
        path = tmp_path / "commented.hg"
        path.write_text("# a comment\n3 2  # header\n1.0 2 0 1\n2.0 2 1 2\n")
        h = load_hg(path)
        assert (h.n, h.m) == (3, 2)
        assert h.edges == ((0, 1), (1, 2))

    def test_isolated_node_rejected_on_load(self, tmp_path):
        path = tmp_path / "bad.hg"
        path.write_text("3 1\n1.0 2 0 1\n")
        with pytest.raises(ConfigError, match="no hyperedge"):
            load_hg(path)

    def test_cardinality_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad2.hg"
        path.write_text("3 1\n1.0 3 0 1\n")
        with pytest.raises(ConfigError, match="cardinality"):
            load_hg(path)
