import os
import pickle

import numpy as np
import pytest
import scipy.sparse as sp

from liftwave.datasets import (
    DataError,
    GraphDataset,
    NodeDataset,
    fold_triple,
    kfold_split,
    load_citation,
    load_tu,
    synth_cycles_vs_trees,
    synth_sbm_node,
)
from liftwave.graphs import build_graph, clustering_coefficient


def write_planetoid_fixture(root, name="cora", n_train=8, n_val_extra=12, n_test=6, d=5, c=2, seed=0):
    """Tiny dataset in the published index/split layout.

    Layout: allx stacks the train block and unlabeled block; tx holds the
    test rows addressed by test.index (shuffled); graph is an adjacency
    dict over all nodes.
    """
    rng = np.random.default_rng(seed)
    n_all = n_train + n_val_extra
    n = n_all + n_test
    x = sp.csr_matrix(rng.random((n_train, d)))
    allx = sp.csr_matrix(rng.random((n_all, d)))
    allx = sp.vstack([x, allx[n_train:]]).tocsr()
    tx = sp.csr_matrix(rng.random((n_test, d)))

    def onehot(k):
        out = np.zeros((k, c))
        out[np.arange(k), rng.integers(0, c, size=k)] = 1
        return out

    y = onehot(n_train)
    ally = np.vstack([y, onehot(n_all - n_train)])
    ty = onehot(n_test)

    graph = {i: [] for i in range(n)}
    for _ in range(2 * n):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            graph[int(u)].append(int(v))
            graph[int(v)].append(int(u))

    test_idx = np.arange(n_all, n)
    rng.shuffle(test_idx)

    prefix = os.path.join(root, f"ind.{name}")
    for suffix, obj in [
        ("x", x), ("y", y), ("tx", tx), ("ty", ty),
        ("allx", allx), ("ally", ally), ("graph", graph),
    ]:
        with open(f"{prefix}.{suffix}", "wb") as fh:
            pickle.dump(obj, fh)
    np.savetxt(f"{prefix}.test.index", test_idx, fmt="%d")
    return {
        "n": n, "d": d, "c": c, "n_train": n_train, "n_test": n_test,
        # tx row j belongs to node test_idx_shuffled[j]
        "tx": tx.toarray(), "test_idx": np.sort(test_idx), "test_idx_shuffled": test_idx,
    }


class TestLoadCitation:
    def test_fixture_roundtrip(self, tmp_path):
        info = write_planetoid_fixture(tmp_path)
        ds = load_citation(str(tmp_path), "cora")
        assert ds.graph.num_nodes == info["n"]
        assert ds.graph.node_features.shape == (info["n"], info["d"])
        assert np.array_equal(ds.train_idx, np.arange(info["n_train"]))
        # tiny fixture: the 500-node validation block caps at the test boundary
        assert np.array_equal(
            ds.val_idx, np.arange(info["n_train"], info["n"] - info["n_test"])
        )
        assert np.array_equal(ds.test_idx, info["test_idx"])
        # shuffled test rows must land at their true indices
        assert np.allclose(ds.graph.node_features[info["test_idx_shuffled"]], info["tx"])

    def test_citeseer_gap_padding(self, tmp_path):
        info = write_planetoid_fixture(tmp_path, name="citeseer")
        # drop one test node from the index and the tx/ty rows that belong to
        # it, emulating an isolated node missing from the published files
        idx_path = tmp_path / "ind.citeseer.test.index"
        idx = np.loadtxt(idx_path, dtype=int)
        missing = info["test_idx"][2]
        keep = idx != missing
        np.savetxt(idx_path, idx[keep], fmt="%d")
        for suffix in ("tx", "ty"):
            with open(tmp_path / f"ind.citeseer.{suffix}", "rb") as fh:
                arr = pickle.load(fh)
            with open(tmp_path / f"ind.citeseer.{suffix}", "wb") as fh:
                pickle.dump(arr[keep], fh)
        ds = load_citation(str(tmp_path), "citeseer")
        assert ds.graph.num_nodes == info["n"]
        # padded node exists with zero features but never enters the test set
        assert missing not in ds.test_idx
        assert not ds.graph.node_features[missing].any()
        # all surviving rows still land correctly
        survivors = info["test_idx_shuffled"][keep]
        assert np.allclose(ds.graph.node_features[survivors], info["tx"][keep])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_citation(str(tmp_path), "cora")

    def test_unknown_name(self, tmp_path):
        with pytest.raises(DataError):
            load_citation(str(tmp_path), "webkb")


def write_tu_fixture(root, name="TINY"):
    """Three small graphs: a triangle, a path, and a 4-star."""
    # graph 1: triangle (nodes 1-3), graph 2: path (4-6), graph 3: star (7-10)
    edges = [
        (1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1),
        (4, 5), (5, 4), (5, 6), (6, 5),
        (7, 8), (8, 7), (7, 9), (9, 7), (7, 10), (10, 7),
    ]
    indicator = [1, 1, 1, 2, 2, 2, 3, 3, 3, 3]
    graph_labels = [1, -1, 1]
    node_labels = [0, 1, 0, 2, 1, 1, 0, 0, 2, 1]
    base = os.path.join(root, name)
    with open(f"{base}_A.txt", "w") as fh:
        fh.writelines(f"{u}, {v}\n" for u, v in edges)
    with open(f"{base}_graph_indicator.txt", "w") as fh:
        fh.writelines(f"{g}\n" for g in indicator)
    with open(f"{base}_graph_labels.txt", "w") as fh:
        fh.writelines(f"{l}\n" for l in graph_labels)
    with open(f"{base}_node_labels.txt", "w") as fh:
        fh.writelines(f"{l}\n" for l in node_labels)


class TestLoadTU:
    def test_fixture(self, tmp_path):
        write_tu_fixture(tmp_path)
        ds = load_tu(str(tmp_path), "TINY")
        assert len(ds) == 3
        assert ds.num_classes == 2
        assert ds.labels.tolist() == [1, 0, 1]  # -1/1 remapped by sorted value

        tri = ds.graphs[0]
        assert tri.num_nodes == 3 and tri.num_edges == 3
        # feature recipe: one-hot(3 labels) + degree + clustering
        assert tri.node_features.shape == (3, 5)
        assert np.array_equal(tri.node_features[:, 3], tri.degrees(weighted=False))
        assert np.allclose(tri.node_features[:, 4], 1.0)  # triangle clustering

        star = ds.graphs[2]
        assert star.node_features[0, 3] == 3  # hub degree
        assert star.node_features[0, 4] == 0.0
        for g in ds.graphs:
            for i in range(g.num_nodes):
                assert g.node_features[i, 4] == clustering_coefficient(g, i)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_tu(str(tmp_path), "NOPE")


class TestSynthSBM:
    def test_disconnected_cliques_when_p_out_zero(self):
        ds = synth_sbm_node(10, 1.0, 0.0, seed=0)
        labels = ds.graph.node_labels
        for u, v in zip(ds.graph.src, ds.graph.dst):
            assert labels[u] == labels[v]

    def test_labels_are_blocks(self):
        ds = synth_sbm_node(25, 0.3, 0.02, seed=1)
        assert np.array_equal(ds.graph.node_labels, np.repeat([0, 1], 25))

    def test_masks_disjoint_and_sized(self):
        ds = synth_sbm_node(50, 0.3, 0.02, seed=0, train_per_class=12)
        assert len(ds.train_idx) == 24
        all_idx = np.concatenate([ds.train_idx, ds.val_idx, ds.test_idx])
        assert len(np.unique(all_idx)) == len(all_idx)

    def test_deterministic(self):
        a = synth_sbm_node(20, 0.3, 0.02, seed=5)
        b = synth_sbm_node(20, 0.3, 0.02, seed=5)
        assert np.array_equal(a.graph.src, b.graph.src)
        assert np.array_equal(a.graph.node_features, b.graph.node_features)
        assert np.array_equal(a.train_idx, b.train_idx)

    def test_signal_strength_controls_features(self):
        ds = synth_sbm_node(30, 0.3, 0.02, seed=0, signal=0.0)
        means = [ds.graph.node_features[ds.graph.node_labels == c, c].mean() for c in (0, 1)]
        assert np.max(np.abs(means)) < 0.5  # no block signal survives


class TestSynthCyclesVsTrees:
    def test_structural_features(self):
        ds = synth_cycles_vs_trees(20, (5, 9), seed=0)
        for g, label in zip(ds.graphs, ds.labels):
            assert np.allclose(g.node_features[:, 2], 0.0)  # no triangles
            if label == 0:  # cycle
                assert np.allclose(g.node_features[:, 1], 2.0)
                assert g.num_edges == g.num_nodes
            else:  # tree
                assert g.num_edges == g.num_nodes - 1
                assert g.node_features[:, 1].min() == 1.0

    def test_balanced_and_deterministic(self):
        a = synth_cycles_vs_trees(40, seed=3)
        b = synth_cycles_vs_trees(40, seed=3)
        assert np.bincount(a.labels).tolist() == [20, 20]
        assert np.array_equal(a.labels, b.labels)
        assert all(np.array_equal(x.src, y.src) for x, y in zip(a.graphs, b.graphs))

    def test_size_floor(self):
        with pytest.raises(ValueError):
            synth_cycles_vs_trees(10, (2, 5), seed=0)


class TestKFold:
    def _dataset(self, n, labels):
        g = build_graph([(0, 1), (1, 2)], 3)
        return GraphDataset(graphs=[g] * n, labels=np.asarray(labels))

    def test_balanced_two_class(self):
        ds = self._dataset(100, [0, 1] * 50)
        folds = kfold_split(ds, seed=0)
        for f in range(10):
            members = ds.labels[folds == f]
            assert np.bincount(members).tolist() == [5, 5]

    def test_rotation_rule(self):
        ds = self._dataset(100, [0, 1] * 50)
        folds = kfold_split(ds, seed=0)
        for r in range(10):
            train, val, test = fold_triple(folds, r)
            assert np.all(folds[test] == r)
            assert np.all(folds[val] == (r + 1) % 10)
            assert len(train) + len(val) + len(test) == 100
            assert not (set(train) & set(val)) and not (set(val) & set(test))

    def test_proteins_sized_split(self):
        labels = np.zeros(1113, dtype=int)
        labels[:450] = 1
        ds = self._dataset(1113, labels)
        folds = kfold_split(ds, seed=0)
        train, val, test = fold_triple(folds, 0)
        assert abs(len(train) - 890) <= 3
        assert abs(len(val) - 111) <= 2
        assert abs(len(test) - 112) <= 2

    def test_small_class_fallback(self, caplog):
        ds = self._dataset(20, [0] * 15 + [1] * 5)
        folds = kfold_split(ds, seed=0)
        assert len(np.unique(folds)) == 10

    def test_too_few_graphs(self):
        ds = self._dataset(5, [0, 1, 0, 1, 0])
        with pytest.raises(DataError):
            kfold_split(ds, seed=0)


class TestNodeDatasetInvariants:
    def test_overlapping_masks_rejected(self):
        g = build_graph([(0, 1)], 4, node_labels=np.zeros(4, dtype=int))
        with pytest.raises(DataError):
            NodeDataset(
                graph=g,
                train_idx=np.array([0, 1]),
                val_idx=np.array([1, 2]),
                test_idx=np.array([3]),
            )
