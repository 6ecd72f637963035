import os

import numpy as np
import pytest

from conftest import random_er_graph
from liftwave.cache import read_container, write_container
from liftwave.datasets import synth_cycles_vs_trees, synth_sbm_node
from liftwave.graphs import build_graph, permute_graph
from liftwave.preprocess import (
    cached_preprocess_graph,
    load_preprocessed,
    preprocess_graph,
    preprocess_graph_dataset,
    preprocess_node_dataset,
    save_preprocessed,
)


class TestCacheContainer:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        sections = {
            "floats": rng.normal(size=(7, 3)),
            "ints": rng.integers(-5, 10, size=11),
            "scalarish": np.array([3.0]),
            "blob": b"arbitrary bytes \x00\x01",
        }
        path = tmp_path / "c.lwc"
        write_container(path, sections)
        back = read_container(path)
        assert np.array_equal(back["floats"], sections["floats"])
        assert back["floats"].dtype == np.float64
        assert np.array_equal(back["ints"], sections["ints"])
        assert back["blob"] == sections["blob"]

    def test_deterministic_bytes(self, tmp_path, rng):
        sections = {"a": rng.normal(size=(4, 4)), "b": np.arange(5)}
        p1, p2 = tmp_path / "a.lwc", tmp_path / "b.lwc"
        write_container(p1, sections)
        write_container(p2, sections)
        assert p1.read_bytes() == p2.read_bytes()

    def test_no_partial_file_on_failure(self, tmp_path):
        class Boom:
            dtype = np.dtype("complex128")  # unsupported

        with pytest.raises(Exception):
            write_container(tmp_path / "x.lwc", {"bad": np.zeros(3, dtype=complex)})
        assert list(tmp_path.iterdir()) == []


class TestPreprocessGraph:
    def test_pipeline_outputs(self, rng):
        g = random_er_graph(20, 0.3, rng)
        pg = preprocess_graph(g, scale_t=0.5, basis_threshold=1e-6, split_seed=0)
        assert sorted(pg.order.tolist()) == list(range(20))
        assert np.all(np.diff(pg.smoothness) >= -1e-9)  # ascending after reorder
        assert pg.basis.sparsify_threshold == 1e-6
        assert pg.split.num_nodes == 20

    def test_smoothness_ascending_with_ties(self, rng):
        g = random_er_graph(15, 0.4, rng)
        pg = preprocess_graph(g, 0.7, 0.0, 0)
        # reordered smoothness must be sorted up to tie-break noise tolerance
        s = pg.smoothness
        assert np.all(s[:-1] <= s[1:] + 1e-9)

    def test_basis_matches_recompute_on_reordered_graph(self, rng):
        from liftwave.graphs import normalized_laplacian
        from liftwave.spectral import diffusion_wavelets_exact

        g = random_er_graph(12, 0.4, rng)
        pg = preprocess_graph(g, 0.5, 0.0, 0)
        recomputed = diffusion_wavelets_exact(normalized_laplacian(pg.graph), 0.5)
        assert np.max(np.abs(pg.basis.forward.data - recomputed.forward.data)) <= 1e-10

    def test_permuted_input_same_reordered_adjacency(self, rng):
        g = random_er_graph(18, 0.35, rng)
        pg = preprocess_graph(g, 0.5, 0.0, 0)
        perm = rng.permutation(18)
        pg2 = preprocess_graph(permute_graph(g, perm), 0.5, 0.0, 0)
        w1 = pg.graph.adjacency().toarray()
        w2 = pg2.graph.adjacency().toarray()
        assert np.array_equal(w1, w2)


class TestCacheFiles:
    def test_save_load_bit_exact(self, tmp_path, rng):
        g = random_er_graph(16, 0.4, rng)
        pg = preprocess_graph(g, 0.6, 1e-5, 3)
        path = str(tmp_path / "g.lwc")
        save_preprocessed(pg, path)
        back = load_preprocessed(path)
        assert np.array_equal(back.order, pg.order)
        assert np.array_equal(back.smoothness, pg.smoothness)
        assert np.array_equal(back.basis.forward.toarray(), pg.basis.forward.toarray())
        assert np.array_equal(back.basis.dual.toarray(), pg.basis.dual.toarray())
        assert np.array_equal(back.split.odd_nodes, pg.split.odd_nodes)
        assert back.fingerprint == pg.fingerprint

    def test_rerun_is_byte_identical(self, tmp_path, rng):
        g = random_er_graph(14, 0.4, rng)
        p1, p2 = str(tmp_path / "a.lwc"), str(tmp_path / "b.lwc")
        save_preprocessed(preprocess_graph(g, 0.6, 1e-5, 3), p1)
        save_preprocessed(preprocess_graph(g, 0.6, 1e-5, 3), p2)
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            assert f1.read() == f2.read()

    def test_cache_hit_and_fingerprint_invalidation(self, tmp_path, rng):
        g = random_er_graph(12, 0.4, rng)
        path = str(tmp_path / "g.lwc")
        _, hit = cached_preprocess_graph(g, 0.5, 1e-6, 0, path)
        assert not hit
        _, hit = cached_preprocess_graph(g, 0.5, 1e-6, 0, path)
        assert hit
        _, hit = cached_preprocess_graph(g, 0.7, 1e-6, 0, path)  # changed scale
        assert not hit
        _, hit = cached_preprocess_graph(g, 0.7, 1e-6, 0, path)
        assert hit
        g2 = random_er_graph(12, 0.4, rng)  # different graph, same shape
        _, hit = cached_preprocess_graph(g2, 0.7, 1e-6, 0, path)
        assert not hit

    def test_corrupt_cache_recomputed(self, tmp_path, rng):
        g = random_er_graph(10, 0.4, rng)
        path = str(tmp_path / "g.lwc")
        cached_preprocess_graph(g, 0.5, 0.0, 0, path)
        with open(path, "wb") as fh:
            fh.write(b"garbage")
        pg, hit = cached_preprocess_graph(g, 0.5, 0.0, 0, path)
        assert not hit
        assert pg.graph.num_nodes == 10


class TestSparseScalePath:
    def test_above_dense_limit_end_to_end(self):
        # a local (grid) graph above the dense-storage limit exercises the
        # sparse Laplacian, the Chebyshev construction with pruning, sparse
        # reordering, and model training over CSR contexts
        from liftwave.graphs import DENSE_NODE_LIMIT
        from liftwave.models import NodeModelConfig, build_node_model, train_node_model
        from liftwave.datasets import NodeDataset

        rows, cols = 60, 70
        n = rows * cols
        assert n > DENSE_NODE_LIMIT
        edges = []
        for r in range(rows):
            for c in range(cols):
                i = r * cols + c
                if c + 1 < cols:
                    edges.append((i, i + 1))
                if r + 1 < rows:
                    edges.append((i, i + cols))
        rng = np.random.default_rng(0)
        labels = (np.arange(n) % cols >= cols // 2).astype(np.int64)
        feats = rng.normal(0, 1, size=(n, 4))
        feats[np.arange(n), labels] += 1.0
        g = build_graph(edges, n, node_features=feats, node_labels=labels)

        pg = preprocess_graph(g, scale_t=0.7, basis_threshold=1e-6, split_seed=0)
        assert pg.basis.method == "chebyshev"
        assert pg.basis.forward.is_sparse
        x = rng.normal(size=(n, 1))
        recon = pg.basis.dual.data @ (pg.basis.forward.data.T @ x)
        rel = float(np.linalg.norm(recon - x) / np.linalg.norm(x))
        assert rel <= 1e-4  # sparsified pair is approximate by design

        perm = rng.permutation(n)
        ds = NodeDataset(
            graph=pg.graph,
            train_idx=np.sort(perm[:100]),
            val_idx=np.sort(perm[100:200]),
            test_idx=np.sort(perm[200:400]),
        )
        cfg = NodeModelConfig(hidden=8, theta=0.2, dropout=0.2, max_epochs=2, patience=5)
        model = build_node_model(cfg, pg, 2, seed=0)
        metrics = train_node_model(model, ds, seed=0)
        assert len(metrics.epochs) == 2
        assert np.isfinite(metrics.epochs[-1]["val_loss"])


class TestDatasetPreprocess:
    def test_node_masks_follow_reorder(self):
        ds = synth_sbm_node(20, 0.4, 0.05, seed=0)
        data, pg, _ = preprocess_node_dataset(ds, 0.5, 0.0, 0)
        inv = np.empty_like(pg.order)
        inv[pg.order] = np.arange(len(pg.order))
        # labels at remapped train indices match the originals
        orig_labels = ds.graph.node_labels[ds.train_idx]
        new_labels = data.graph.node_labels[np.sort(inv[ds.train_idx])]
        assert sorted(orig_labels.tolist()) == sorted(new_labels.tolist())
        # features travel with their nodes
        for old in ds.train_idx:
            assert np.array_equal(data.graph.node_features[inv[old]], ds.graph.node_features[old])

    def test_graph_dataset_preprocess(self, tmp_path):
        ds = synth_cycles_vs_trees(12, (5, 8), seed=0)
        pgs = preprocess_graph_dataset(ds, 0.5, 1e-4, 0, cache_dir=str(tmp_path))
        assert len(pgs) == 12
        assert len(list(tmp_path.iterdir())) == 12
        # second run hits every cache file (mtimes unchanged)
        stats = {p.name: p.stat().st_mtime_ns for p in tmp_path.iterdir()}
        pgs2 = preprocess_graph_dataset(ds, 0.5, 1e-4, 0, cache_dir=str(tmp_path))
        assert {p.name: p.stat().st_mtime_ns for p in tmp_path.iterdir()} == stats
        for a, b in zip(pgs, pgs2):
            assert np.array_equal(a.order, b.order)
