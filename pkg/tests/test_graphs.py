import numpy as np
import pytest

from graphsmooth.graphs import (Graph, GraphFormatError, gcn_normalize,
                                generate_sbm, load_graph, load_pairs,
                                neighbor_mean, node_split,
                                sample_edge_mask, sample_negative_edges,
                                save_graph, save_pairs, smoothness_delta,
                                split_edges_holdout)


def make_graph(pairs, n, feat_dim=1, labels=None):
    return Graph.from_edges(np.array(pairs, dtype=np.int64).reshape(-1, 2),
                            np.zeros((n, feat_dim)), labels)


class TestLoadGraph:
    def test_symmetrization_forced(self, tmp_path):
        (tmp_path / "g.edges").write_text("0 1\n1 2\n")
        (tmp_path / "g.features").write_text("1\n2\n3\n")
        g = load_graph(tmp_path / "g.edges", tmp_path / "g.features")
        assert g.num_nodes == 3
        assert g.ordered_edge_count == 4

    def test_duplicate_directions_deduped(self, tmp_path):
        (tmp_path / "g.edges").write_text("0 1\n1 0\n")
        (tmp_path / "g.features").write_text("1\n2\n")
        g = load_graph(tmp_path / "g.edges", tmp_path / "g.features")
        assert g.ordered_edge_count == 2

    def test_index_out_of_range(self, tmp_path):
        (tmp_path / "g.edges").write_text("0 3\n")
        (tmp_path / "g.features").write_text("1\n2\n3\n")
        with pytest.raises(GraphFormatError, match="out of range"):
            load_graph(tmp_path / "g.edges", tmp_path / "g.features")

    def test_malformed_edge_line(self, tmp_path):
        (tmp_path / "g.edges").write_text("0 1\n0 1 2\n")
        (tmp_path / "g.features").write_text("1\n2\n")
        with pytest.raises(GraphFormatError, match="g.edges:2"):
            load_graph(tmp_path / "g.edges", tmp_path / "g.features")

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        (tmp_path / "g.edges").write_text("# header\n\n0 1\n")
        (tmp_path / "g.features").write_text("# feat\n1 0\n0 1\n")
        g = load_graph(tmp_path / "g.edges", tmp_path / "g.features")
        assert g.ordered_edge_count == 2 and g.features.shape == (2, 2)

    def test_ragged_features_rejected(self, tmp_path):
        (tmp_path / "g.edges").write_text("0 1\n")
        (tmp_path / "g.features").write_text("1 2\n3\n")
        with pytest.raises(GraphFormatError, match="expected 2 values"):
            load_graph(tmp_path / "g.edges", tmp_path / "g.features")

    def test_labels_roundtrip(self, tmp_path):
        g = generate_sbm(2, 5, 0.6, 0.1, 4, 0.05, 3)
        save_graph(g, tmp_path / "g.edges", tmp_path / "g.features",
                   tmp_path / "g.labels")
        g2 = load_graph(tmp_path / "g.edges", tmp_path / "g.features",
                        tmp_path / "g.labels")
        assert g2.num_nodes == g.num_nodes
        np.testing.assert_array_equal(g2.col_indices, g.col_indices)
        np.testing.assert_allclose(g2.features, g.features)
        np.testing.assert_array_equal(g2.labels, g.labels)

    def test_incomplete_labels_rejected(self, tmp_path):
        (tmp_path / "g.edges").write_text("0 1\n")
        (tmp_path / "g.features").write_text("1\n2\n")
        (tmp_path / "g.labels").write_text("0 1\n")
        with pytest.raises(GraphFormatError, match="unlabeled"):
            load_graph(tmp_path / "g.edges", tmp_path / "g.features",
                       tmp_path / "g.labels")

    def test_self_loops_dropped(self, tmp_path):
        (tmp_path / "g.edges").write_text("0 0\n0 1\n")
        (tmp_path / "g.features").write_text("1\n2\n")
        g = load_graph(tmp_path / "g.edges", tmp_path / "g.features")
        assert g.ordered_edge_count == 2

    def test_symmetrize_idempotent(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            pairs = rng.integers(0, 8, size=(12, 2))
            g1 = make_graph(pairs, 8)
            g2 = make_graph(g1.undirected_pairs(), 8)
            np.testing.assert_array_equal(g1.col_indices, g2.col_indices)
            np.testing.assert_array_equal(g1.row_offsets, g2.row_offsets)


class TestGcnNormalize:
    def test_single_edge_all_half(self):
        dense = gcn_normalize(np.array([[0, 1]]), 2).to_dense()
        np.testing.assert_allclose(dense, np.full((2, 2), 0.5))

    def test_empty_graph_identity(self):
        dense = gcn_normalize(np.zeros((0, 2), dtype=np.int64), 2).to_dense()
        np.testing.assert_allclose(dense, np.eye(2))

    def test_triangle_all_third(self):
        dense = gcn_normalize(np.array([[0, 1], [1, 2], [0, 2]]), 3).to_dense()
        np.testing.assert_allclose(dense, np.full((3, 3), 1.0 / 3.0))

    def test_symmetric_weights_pairwise(self):
        g = generate_sbm(2, 10, 0.5, 0.1, 3, 0.1, 4)
        dense = gcn_normalize(g.undirected_pairs(), g.num_nodes).to_dense()
        assert np.array_equal(dense, dense.T)
        assert np.all(np.diag(dense) > 0)


class TestEdgeMask:
    def test_p_zero_masks_nothing(self):
        g = generate_sbm(2, 10, 0.5, 0.1, 3, 0.1, 0)
        split = sample_edge_mask(g, 0.0, 7)
        assert len(split.masked) == 0
        assert len(split.visible) == g.undirected_edge_count

    def test_p_one_masks_everything(self):
        g = generate_sbm(2, 10, 0.5, 0.1, 3, 0.1, 0)
        split = sample_edge_mask(g, 1.0, 7)
        assert len(split.visible) == 0

    def test_p_out_of_range(self):
        g = make_graph([[0, 1]], 2)
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            sample_edge_mask(g, 1.2, 0)

    def test_partition_is_exact(self):
        g = generate_sbm(3, 8, 0.4, 0.1, 4, 0.1, 2)
        for p in (0.0, 0.3, 0.7, 1.0):
            for seed in range(5):
                split = sample_edge_mask(g, p, seed)
                assert len(split.visible) + len(split.masked) == g.undirected_edge_count
                joined = {tuple(e) for e in split.visible} | {tuple(e) for e in split.masked}
                assert joined == g.edge_set()

    def test_masked_count_binomial(self):
        # ~10k-pair graph; each seed's masked count within 3 sigma of n*p
        g = generate_sbm(2, 100, 0.5, 0.5, 2, 0.0, 9)
        n = g.undirected_edge_count
        assert n > 9000
        sigma = np.sqrt(n * 0.7 * 0.3)
        for seed in range(10):
            split = sample_edge_mask(g, 0.7, seed)
            assert abs(len(split.masked) - 0.7 * n) < 3 * sigma

    def test_deterministic(self):
        g = generate_sbm(2, 10, 0.5, 0.1, 3, 0.1, 0)
        a = sample_edge_mask(g, 0.4, 5)
        b = sample_edge_mask(g, 0.4, 5)
        np.testing.assert_array_equal(a.masked, b.masked)


class TestNegativeEdges:
    def test_complete_graph_infeasible(self):
        g = make_graph([[0, 1], [1, 2], [0, 2]], 3)
        with pytest.raises(ValueError, match="non-edges"):
            sample_negative_edges(g, 1, 0)

    def test_path_forced_outcome(self):
        g = make_graph([[0, 1], [1, 2]], 3)
        np.testing.assert_array_equal(sample_negative_edges(g, 1, 3).pairs, [[0, 2]])

    def test_seed_determinism_and_variation(self):
        g = generate_sbm(2, 50, 0.05, 0.01, 2, 0.1, 0)
        a = sample_negative_edges(g, 50, 1)
        b = sample_negative_edges(g, 50, 1)
        c = sample_negative_edges(g, 50, 2)
        np.testing.assert_array_equal(a.pairs, b.pairs)
        assert not np.array_equal(a.pairs, c.pairs)

    def test_never_collides_with_edges(self):
        g = generate_sbm(2, 30, 0.3, 0.05, 2, 0.1, 5)
        edges = g.edge_set()
        neg = sample_negative_edges(g, 100, 8).pairs
        assert len({tuple(p) for p in neg}) == 100
        for u, v in neg:
            assert (int(u), int(v)) not in edges and u < v

    def test_dense_fallback_path(self):
        g = make_graph([[0, 1]], 5)  # 9 non-edges, ask for most of them
        neg = sample_negative_edges(g, 8, 1).pairs
        assert len({tuple(p) for p in neg}) == 8
        assert (0, 1) not in {tuple(p) for p in neg}


class TestNeighborMean:
    def test_hand_case(self):
        g = make_graph([[0, 1], [0, 2]], 3)
        z = np.array([[1.0, 1.0], [2.0, 2.0], [4.0, 4.0]])
        result = neighbor_mean(g, z)
        np.testing.assert_allclose(result.values, [[3, 3], [1, 1], [1, 1]])
        assert result.active.all()

    def test_constant_embedding(self):
        g = make_graph([[0, 1], [1, 2], [2, 3]], 4)
        z = np.tile([2.0, -1.0], (4, 1))
        np.testing.assert_allclose(neighbor_mean(g, z).values, z)

    def test_star_matches_brute_force(self):
        g = make_graph([[0, i] for i in range(1, 5)], 5)
        z = np.random.default_rng(3).normal(size=(5, 4))
        got = neighbor_mean(g, z).values
        np.testing.assert_allclose(got[0], z[1:].mean(axis=0), atol=1e-12)

    def test_isolated_nodes_flagged_zero(self):
        g = make_graph([[0, 1]], 3)
        result = neighbor_mean(g, np.ones((3, 2)))
        np.testing.assert_array_equal(result.values[2], [0.0, 0.0])
        np.testing.assert_array_equal(result.active, [True, True, False])

    def test_matches_dense_operator_oracle(self):
        # oracle: D^-1 A z with explicit dense matrices
        rng = np.random.default_rng(11)
        for _ in range(10):
            n = int(rng.integers(2, 51))
            pairs = rng.integers(0, n, size=(max(1, n), 2))
            g = make_graph(pairs, n)
            z = rng.normal(size=(n, 3))
            dense_a = np.zeros((n, n))
            for u, v in g.undirected_pairs():
                dense_a[u, v] = dense_a[v, u] = 1.0
            deg = dense_a.sum(axis=1)
            got = neighbor_mean(g, z)
            for i in range(n):
                if deg[i] > 0:
                    np.testing.assert_allclose(got.values[i], dense_a[i] @ z / deg[i],
                                               atol=1e-12)

    def test_row_count_mismatch(self):
        g = make_graph([[0, 1]], 2)
        with pytest.raises(ValueError, match="rows"):
            neighbor_mean(g, np.ones((3, 2)))


class TestSmoothness:
    def test_constant_rows_zero(self):
        g = make_graph([[0, 1], [1, 2]], 3)
        assert smoothness_delta(g, np.ones((3, 4))) == 0.0

    def test_single_edge_hand_value(self):
        g = make_graph([[0, 1]], 2)
        z = np.array([[0.0, 0.0], [1.0, 1.0]])
        assert smoothness_delta(g, z) == pytest.approx(np.sqrt(2) / 2, abs=1e-12)

    def test_quadratic_scaling(self):
        g = generate_sbm(2, 8, 0.5, 0.2, 3, 0.2, 1)
        z = np.random.default_rng(0).normal(size=(16, 5))
        base = smoothness_delta(g, z)
        for c in (2.0, 10.0):
            assert smoothness_delta(g, c * z) == pytest.approx(c * c * base, rel=1e-12)

    def test_edgeless_graph_signals(self):
        g = make_graph(np.zeros((0, 2)), 3)
        with pytest.raises(ValueError, match="edgeless"):
            smoothness_delta(g, np.ones((3, 2)))

    def test_nonnegative_random(self):
        rng = np.random.default_rng(8)
        g = generate_sbm(2, 10, 0.4, 0.1, 3, 0.1, 2)
        for _ in range(20):
            assert smoothness_delta(g, rng.normal(size=(20, 4))) >= 0.0


class TestSbm:
    def test_deterministic_complete_blocks(self):
        g = generate_sbm(2, 3, 1.0, 0.0, 2, 0.0, 0)
        assert g.undirected_edge_count == 6  # two disjoint triangles
        for u, v in g.undirected_pairs():
            assert g.labels[u] == g.labels[v]

    def test_all_zero_probabilities(self):
        g = generate_sbm(2, 3, 0.0, 0.0, 2, 0.0, 0)
        assert g.ordered_edge_count == 0

    def test_invalid_probability(self):
        with pytest.raises(ValueError, match="probabilities"):
            generate_sbm(2, 3, 1.5, 0.0, 2, 0.0, 0)

    def test_feature_dim_must_fit_blocks(self):
        with pytest.raises(ValueError, match="feature_dim"):
            generate_sbm(4, 3, 0.5, 0.1, 2, 0.0, 0)

    def test_within_block_count_binomial(self):
        trials = 2 * (100 * 99 // 2)
        sigma = np.sqrt(trials * 0.05 * 0.95)
        for seed in range(5):
            g = generate_sbm(2, 100, 0.05, 0.005, 4, 0.1, seed)
            within = sum(1 for u, v in g.undirected_pairs()
                         if g.labels[u] == g.labels[v])
            assert abs(within - trials * 0.05) < 3 * sigma

    def test_features_are_indicator_plus_noise(self):
        g = generate_sbm(2, 20, 0.2, 0.05, 6, 0.0, 3)
        expected = np.zeros((40, 6))
        expected[np.arange(40), g.labels] = 1.0
        np.testing.assert_array_equal(g.features, expected)

    def test_deterministic_per_seed(self):
        a = generate_sbm(2, 15, 0.3, 0.02, 4, 0.1, 9)
        b = generate_sbm(2, 15, 0.3, 0.02, 4, 0.1, 9)
        np.testing.assert_array_equal(a.col_indices, b.col_indices)
        np.testing.assert_array_equal(a.features, b.features)


class TestHoldoutSplit:
    def test_zero_fractions_identity(self):
        g = generate_sbm(2, 10, 0.5, 0.1, 3, 0.1, 0)
        split = split_edges_holdout(g, 0.0, 0.0, 1)
        assert split.train_graph.ordered_edge_count == g.ordered_edge_count
        assert len(split.val_pos) == len(split.test_pos) == 0

    def test_counting(self):
        g = generate_sbm(2, 50, 0.405, 0.0, 2, 0.0, 4)
        n = g.undirected_edge_count
        split = split_edges_holdout(g, 0.05, 0.10, 2)
        assert len(split.val_pos) == int(0.05 * n)
        assert len(split.test_pos) == int(0.10 * n)
        assert split.train_graph.undirected_edge_count == (
            n - len(split.val_pos) - len(split.test_pos))
        assert len(split.val_neg) == len(split.val_pos)
        assert len(split.test_neg) == len(split.test_pos)

    def test_thousand_edge_counts(self):
        # synthesize exactly 1000 undirected edges
        rng = np.random.default_rng(0)
        pairs = set()
        while len(pairs) < 1000:
            u, v = rng.integers(0, 100, size=2)
            if u != v:
                pairs.add((min(u, v), max(u, v)))
        g = make_graph(sorted(pairs), 100)
        split = split_edges_holdout(g, 0.05, 0.10, 3)
        assert len(split.val_pos) == 50
        assert len(split.test_pos) == 100
        assert split.train_graph.undirected_edge_count == 850

    def test_holdout_absent_from_train(self):
        g = generate_sbm(2, 40, 0.2, 0.02, 3, 0.1, 6)
        split = split_edges_holdout(g, 0.1, 0.1, 5)
        train_edges = split.train_graph.edge_set()
        for u, v in np.vstack([split.val_pos, split.test_pos]):
            assert (int(u), int(v)) not in train_edges

    def test_negatives_disjoint_from_edges(self):
        g = generate_sbm(2, 40, 0.2, 0.02, 3, 0.1, 6)
        split = split_edges_holdout(g, 0.1, 0.1, 5)
        edges = g.edge_set()
        negs = {tuple(p) for p in np.vstack([split.val_neg, split.test_neg])}
        assert len(negs) == len(split.val_neg) + len(split.test_neg)
        assert not (negs & edges)

    def test_infeasible_fractions(self):
        g = make_graph([[0, 1]], 2)
        with pytest.raises(ValueError, match="fractions"):
            split_edges_holdout(g, 0.6, 0.5, 0)


class TestNodeSplit:
    def test_ten_nodes(self):
        tr, va, te = node_split(10, 0)
        assert (len(tr), len(va), len(te)) == (1, 1, 8)

    def test_hundred_nodes_cover(self):
        tr, va, te = node_split(100, 5)
        assert (len(tr), len(va), len(te)) == (10, 10, 80)
        joined = np.concatenate([tr, va, te])
        assert len(np.unique(joined)) == 100

    def test_deterministic(self):
        assert all(np.array_equal(a, b)
                   for a, b in zip(node_split(50, 3), node_split(50, 3)))

    def test_too_small(self):
        with pytest.raises(ValueError, match="at least 10"):
            node_split(9, 0)


def test_pairs_file_roundtrip(tmp_path):
    pairs = np.array([[0, 3], [2, 5], [1, 4]])
    save_pairs(pairs, tmp_path / "p.edges")
    np.testing.assert_array_equal(load_pairs(tmp_path / "p.edges"), pairs)
