"""Dataset ingestion and synthetic generators.

Citation datasets use the standard pickled index/split file layout; the
bioinformatics loader reads the plain-text adjacency/indicator/label files
(1-based, converted on load). Synthetic generators provide desk-scale
substitutes with known ground truth.
"""

from __future__ import annotations

import logging
import os
import pickle
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .graphs import Graph, build_graph, clustering_coefficients

logger = logging.getLogger(__name__)


class DataError(RuntimeError):
    """Missing or malformed dataset files."""


@dataclass(frozen=True)
class NodeDataset:
    """Single graph with node labels and train/val/test index sets."""

    graph: Graph
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    name: str = ""

    def __post_init__(self):
        sets = [set(self.train_idx.tolist()), set(self.val_idx.tolist()), set(self.test_idx.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise DataError("train/val/test masks overlap")

    @property
    def num_classes(self) -> int:
        return int(self.graph.node_labels.max()) + 1


@dataclass(frozen=True)
class GraphDataset:
    """Collection of labeled graphs for graph-level classification."""

    graphs: List[Graph]
    labels: np.ndarray
    name: str = ""

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    def __len__(self) -> int:
        return len(self.graphs)


EXPECTED_CITATION_STATS = {
    # name: (nodes, features, classes)
    "cora": (2708, 1433, 7),
    "citeseer": (3327, 3703, 6),
    "pubmed": (19717, 500, 3),
}


def _pickle_load(path):
    if not os.path.exists(path):
        raise DataError(f"missing dataset file: {path}")
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def load_citation(root: str, name: str) -> NodeDataset:
    """Load a citation dataset from the published index/split files.

    Expects ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index} under ``root``.
    Uses the standard public semi-supervised split: the labeled training
    block, the following 500 nodes for validation, and the test index file.
    """
    name = name.lower()
    if name not in EXPECTED_CITATION_STATS:
        raise DataError(f"unknown citation dataset {name!r}")
    prefix = os.path.join(root, f"ind.{name}")
    x = _pickle_load(f"{prefix}.x")
    y = _pickle_load(f"{prefix}.y")
    tx = _pickle_load(f"{prefix}.tx")
    ty = _pickle_load(f"{prefix}.ty")
    allx = _pickle_load(f"{prefix}.allx")
    ally = _pickle_load(f"{prefix}.ally")
    graph_dict = _pickle_load(f"{prefix}.graph")
    index_path = f"{prefix}.test.index"
    if not os.path.exists(index_path):
        raise DataError(f"missing dataset file: {index_path}")
    test_idx_reorder = np.loadtxt(index_path, dtype=np.int64)
    test_idx_range = np.sort(test_idx_reorder)

    if name == "citeseer":
        # isolated test nodes are absent from the index file; pad zero rows so
        # the stacked feature block covers the whole span (the padded nodes
        # stay out of the test set)
        full_span = test_idx_range[-1] - test_idx_range[0] + 1
        tx_ext = sp.lil_matrix((full_span, x.shape[1]))
        tx_ext[test_idx_range - test_idx_range[0], :] = tx
        tx = tx_ext
        ty_ext = np.zeros((full_span, y.shape[1]))
        ty_ext[test_idx_range - test_idx_range[0], :] = ty
        ty = ty_ext

    features = sp.vstack((allx, tx)).tolil()
    features[test_idx_reorder, :] = features[test_idx_range, :]
    features = np.asarray(features.todense(), dtype=np.float64)
    onehot = np.vstack((ally, ty))
    onehot[test_idx_reorder, :] = onehot[test_idx_range, :]
    labels = onehot.argmax(axis=1).astype(np.int64)

    n = features.shape[0]
    edges = set()
    n_loops = 0
    for u, nbrs in graph_dict.items():
        for v in nbrs:
            if u == v:
                n_loops += 1
                continue
            edges.add((min(u, v), max(u, v)))
    if n_loops:
        logger.info("%s: dropped %d self-loop entries", name, n_loops)

    g = build_graph(sorted(edges), n, node_features=features, node_labels=labels)

    exp_n, exp_d, exp_c = EXPECTED_CITATION_STATS[name]
    got = (n, features.shape[1], int(labels.max()) + 1)
    if got != (exp_n, exp_d, exp_c):
        logger.warning(
            "%s statistics %s differ from the expected %s",
            name,
            got,
            (exp_n, exp_d, exp_c),
        )
    logger.info("%s: %d nodes, %d undirected edges", name, n, g.num_edges)

    n_train = len(np.asarray(y.argmax(axis=1)))
    n_known = allx.shape[0]  # nodes outside the test block
    val_end = min(n_train + 500, n_known)
    if val_end - n_train < 500:
        logger.warning(
            "%s: validation block capped at %d nodes (standard protocol uses 500)",
            name,
            val_end - n_train,
        )
    train_idx = np.arange(n_train, dtype=np.int64)
    val_idx = np.arange(n_train, val_end, dtype=np.int64)
    test_idx = np.asarray(test_idx_range, dtype=np.int64)
    return NodeDataset(graph=g, train_idx=train_idx, val_idx=val_idx, test_idx=test_idx, name=name)


def load_tu(root: str, name: str) -> GraphDataset:
    """Load a TU-style graph classification dataset.

    Reads <name>_A.txt, <name>_graph_indicator.txt, <name>_graph_labels.txt
    and <name>_node_labels.txt (all 1-based, comma separated). Node features
    are the one-hot node label concatenated with the raw degree and
    clustering coefficient.
    """
    base = os.path.join(root, name)

    def load_int_table(suffix):
        path = f"{base}_{suffix}.txt"
        if not os.path.exists(path):
            raise DataError(f"missing dataset file: {path}")
        return np.loadtxt(path, dtype=np.int64, delimiter=",", ndmin=2)

    adj = load_int_table("A")
    indicator = load_int_table("graph_indicator").ravel()
    graph_labels_raw = load_int_table("graph_labels").ravel()
    node_labels_raw = load_int_table("node_labels")
    if node_labels_raw.shape[1] != 1:
        # some dumps carry extra attribute columns; the label is the first
        node_labels_raw = node_labels_raw[:, :1]
    node_labels_raw = node_labels_raw.ravel()

    if len(indicator) != len(node_labels_raw):
        raise DataError("indicator and node label files disagree on node count")

    graph_ids = np.unique(indicator)
    label_values = np.unique(graph_labels_raw)
    label_map = {v: i for i, v in enumerate(label_values.tolist())}
    node_label_values = np.unique(node_labels_raw)
    node_label_map = {v: i for i, v in enumerate(node_label_values.tolist())}
    onehot_width = len(node_label_values)

    node_offset = np.zeros(graph_ids.max() + 2, dtype=np.int64)
    counts = np.bincount(indicator, minlength=graph_ids.max() + 1)
    node_offset[1:] = np.cumsum(counts)

    per_graph_edges: dict[int, set] = {int(gid): set() for gid in graph_ids}
    for u1, v1 in adj:
        gid = int(indicator[u1 - 1])
        if gid != int(indicator[v1 - 1]):
            raise DataError(f"edge ({u1}, {v1}) crosses graph boundaries")
        u = int(u1 - 1 - node_offset[gid])
        v = int(v1 - 1 - node_offset[gid])
        if u == v:
            continue
        per_graph_edges[gid].add((min(u, v), max(u, v)))

    graphs = []
    labels = []
    for gid in graph_ids.tolist():
        gid = int(gid)
        n = int(counts[gid])
        local_labels = np.array(
            [node_label_map[int(v)] for v in node_labels_raw[node_offset[gid] : node_offset[gid] + n]],
            dtype=np.int64,
        )
        g = build_graph(sorted(per_graph_edges[gid]), n)
        feats = np.zeros((n, onehot_width + 2))
        feats[np.arange(n), local_labels] = 1.0
        feats[:, onehot_width] = g.degrees(weighted=False)
        feats[:, onehot_width + 1] = clustering_coefficients(g)
        graphs.append(g.with_features(feats, local_labels))
        labels.append(label_map[int(graph_labels_raw[gid - 1])])

    ds = GraphDataset(graphs=graphs, labels=np.array(labels, dtype=np.int64), name=name)
    logger.info(
        "%s: %d graphs, %d classes, avg %.2f nodes",
        name,
        len(ds),
        ds.num_classes,
        float(np.mean([g.num_nodes for g in graphs])),
    )
    return ds


def synth_sbm_node(
    n_per_block: int,
    p_in: float,
    p_out: float,
    seed: int,
    signal: float = 1.6,
    noise: float = 0.7,
    train_per_class: Optional[int] = None,
) -> NodeDataset:
    """Two-block stochastic block model node task.

    Labels are block ids; features are a weak one-hot block signal plus
    Gaussian noise (two extra pure-noise columns), so the labels are only
    recoverable by smoothing over the graph when the blocks are separated.
    Mask sizes follow the citation proportions with small-sample floors.
    """
    if not p_in > p_out:
        logger.info("SBM generated with p_in <= p_out; labels carry no structure")
    rng = np.random.default_rng(seed)
    n = 2 * n_per_block
    labels = np.repeat(np.arange(2), n_per_block)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    probs = np.where(same, p_in, p_out)
    keep = rng.random(len(iu)) < probs
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))

    feats = rng.normal(0.0, noise, size=(n, 4))
    feats[np.arange(n), labels] += signal
    g = build_graph(edges, n, node_features=feats, node_labels=labels)

    if train_per_class is None:
        train_per_class = max(5, round(20 * n / 2708))
    order = rng.permutation(n)
    train: list[int] = []
    taken = np.zeros(n, dtype=bool)
    for cls in (0, 1):
        cls_nodes = [i for i in order.tolist() if labels[i] == cls][:train_per_class]
        train.extend(cls_nodes)
        taken[cls_nodes] = True
    rest = [i for i in order.tolist() if not taken[i]]
    # citation-style proportions with floors, never starving the test set
    n_val = min(max(10, round(500 * n / 2708)), len(rest) // 2)
    val = rest[:n_val]
    test = rest[n_val:]
    return NodeDataset(
        graph=g,
        train_idx=np.array(sorted(train), dtype=np.int64),
        val_idx=np.array(sorted(val), dtype=np.int64),
        test_idx=np.array(sorted(test), dtype=np.int64),
        name=f"sbm{n_per_block}",
    )


def _random_tree_edges(n: int, rng: np.random.Generator):
    return [(int(rng.integers(0, v)), v) for v in range(1, n)]


def synth_cycles_vs_trees(
    n_graphs: int, size_range: Tuple[int, int] = (6, 14), seed: int = 0
) -> GraphDataset:
    """Half cycle graphs, half random trees; label is the family.

    Features follow the usual recipe (one-hot node label, degree,
    clustering coefficient); every node carries label 0 here, so the
    informative columns are the structural ones.
    """
    lo, hi = size_range
    if lo < 3:
        raise ValueError("graphs need at least 3 nodes")
    rng = np.random.default_rng(seed)
    graphs = []
    labels = []
    for k in range(n_graphs):
        n = int(rng.integers(lo, hi + 1))
        if k % 2 == 0:
            edges = [(i, (i + 1) % n) for i in range(n)]
            label = 0
        else:
            edges = _random_tree_edges(n, rng)
            label = 1
        g = build_graph(edges, n)
        feats = np.zeros((n, 3))
        feats[:, 0] = 1.0
        feats[:, 1] = g.degrees(weighted=False)
        feats[:, 2] = clustering_coefficients(g)
        graphs.append(g.with_features(feats, np.zeros(n, dtype=np.int64)))
        labels.append(label)
    shuffle = rng.permutation(n_graphs)
    return GraphDataset(
        graphs=[graphs[i] for i in shuffle],
        labels=np.array(labels, dtype=np.int64)[shuffle],
        name="cycles-trees",
    )


def kfold_split(dataset: GraphDataset, seed: int, n_folds: int = 10) -> np.ndarray:
    """Stratified fold assignment, one id per graph."""
    n = len(dataset)
    if n < n_folds:
        raise DataError(f"need at least {n_folds} graphs for {n_folds}-fold splits")
    rng = np.random.default_rng(seed)
    folds = np.zeros(n, dtype=np.int64)
    counts = np.bincount(dataset.labels)
    if counts.min() < n_folds:
        logger.warning("class with %d instances; falling back to unstratified folds", counts.min())
        perm = rng.permutation(n)
        folds[perm] = np.arange(n) % n_folds
        return folds
    for cls in range(len(counts)):
        members = np.nonzero(dataset.labels == cls)[0]
        members = members[rng.permutation(len(members))]
        folds[members] = np.arange(len(members)) % n_folds
    return folds


def fold_triple(folds: np.ndarray, rotation: int, n_folds: int = 10):
    """(train, val, test) graph indices for one rotation: test=r, val=r+1."""
    test = np.nonzero(folds == rotation % n_folds)[0]
    val = np.nonzero(folds == (rotation + 1) % n_folds)[0]
    rest = ~np.isin(np.arange(len(folds)), np.concatenate([test, val]))
    train = np.nonzero(rest)[0]
    return train, val, test
