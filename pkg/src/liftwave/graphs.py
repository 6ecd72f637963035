"""Sparse undirected weighted graphs, normalized Laplacians, and node statistics.

Graphs are immutable after construction. Dense operator storage is used up to
``DENSE_NODE_LIMIT`` nodes; larger graphs switch to CSR. All floating-point
work is 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

DENSE_NODE_LIMIT = 4096


class GraphError(ValueError):
    """Structurally invalid graph input (bad index, self-loop, negative weight)."""


@dataclass(frozen=True)
class SymmetricMatrix:
    """Symmetric operator carrier: dense row-major array or CSR, plus size."""

    data: object  # np.ndarray (dense) or sp.csr_matrix

    def __post_init__(self):
        d = self.data
        if sp.issparse(d):
            object.__setattr__(self, "data", d.tocsr())
        else:
            arr = np.asarray(d, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise GraphError(f"expected square matrix, got shape {arr.shape}")
            object.__setattr__(self, "data", arr)

    @property
    def dimension(self) -> int:
        return self.data.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    def toarray(self) -> np.ndarray:
        return self.data.toarray() if self.is_sparse else self.data

    def dot(self, other):
        """Matrix product with a dense array or another SymmetricMatrix."""
        rhs = other.data if isinstance(other, SymmetricMatrix) else other
        return self.data @ rhs

    def check_symmetry(self, tol: float = 0.0) -> bool:
        if self.is_sparse:
            diff = self.data - self.data.T
            return diff.nnz == 0 or np.max(np.abs(diff.data)) <= tol
        return np.max(np.abs(self.data - self.data.T)) <= tol


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph with optional per-node features and labels.

    ``src``/``dst``/``weight`` store every edge in both orientations, sorted
    by (src, dst). No self-loops; weights nonnegative.
    """

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    node_features: Optional[np.ndarray] = None
    node_labels: Optional[np.ndarray] = None

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.src) // 2

    def degrees(self, weighted: bool = True) -> np.ndarray:
        """Per-node degree: sum of incident weights, or neighbor count."""
        deg = np.zeros(self.num_nodes, dtype=np.float64)
        vals = self.weight if weighted else np.ones_like(self.weight)
        np.add.at(deg, self.src, vals)
        return deg

    def adjacency(self, dense: Optional[bool] = None) -> SymmetricMatrix:
        """Weighted adjacency matrix; dense below DENSE_NODE_LIMIT by default."""
        if dense is None:
            dense = self.num_nodes <= DENSE_NODE_LIMIT
        coo = sp.coo_matrix(
            (self.weight, (self.src, self.dst)),
            shape=(self.num_nodes, self.num_nodes),
        )
        if dense:
            return SymmetricMatrix(coo.toarray())
        return SymmetricMatrix(coo.tocsr())

    def neighbors(self, node: int) -> np.ndarray:
        """Neighbor indices of ``node`` (unweighted topology)."""
        return self.dst[self.src == node]

    def with_features(self, features=None, labels=None) -> "Graph":
        fields = {}
        if features is not None:
            fields["node_features"] = np.asarray(features, dtype=np.float64)
        if labels is not None:
            fields["node_labels"] = np.asarray(labels, dtype=np.int64)
        return replace(self, **fields)


def build_graph(
    edge_list: Iterable,
    num_nodes: int,
    node_features=None,
    node_labels=None,
) -> Graph:
    """Construct a Graph from an (i, j[, w]) edge list.

    Duplicate edges (in either orientation) merge by summing weights.
    Self-loops, out-of-range indices, and negative weights are rejected.
    """
    if num_nodes < 0:
        raise GraphError("num_nodes must be nonnegative")
    merged: dict[tuple[int, int], float] = {}
    for entry in edge_list:
        if len(entry) == 2:
            i, j = entry
            w = 1.0
        else:
            i, j, w = entry
        i, j, w = int(i), int(j), float(w)
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise GraphError(f"edge ({i}, {j}) out of range for {num_nodes} nodes")
        if w < 0:
            raise GraphError(f"negative weight {w} on edge ({i}, {j})")
        key = (i, j) if i < j else (j, i)
        merged[key] = merged.get(key, 0.0) + w

    if merged:
        pairs = np.array(sorted(merged), dtype=np.int64)
        w_half = np.array([merged[tuple(p)] for p in pairs], dtype=np.float64)
        src = np.concatenate([pairs[:, 0], pairs[:, 1]])
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
        weight = np.concatenate([w_half, w_half])
        order = np.lexsort((dst, src))
        src, dst, weight = src[order], dst[order], weight[order]
    else:
        src = np.zeros(0, dtype=np.int64)
        dst = np.zeros(0, dtype=np.int64)
        weight = np.zeros(0, dtype=np.float64)

    g = Graph(num_nodes=num_nodes, src=src, dst=dst, weight=weight)
    if node_features is not None or node_labels is not None:
        g = g.with_features(node_features, node_labels)
    return g


def normalized_laplacian(g: Graph) -> SymmetricMatrix:
    """Symmetrically normalized Laplacian I - D^{-1/2} W D^{-1/2}.

    Isolated nodes keep a unit diagonal (their D^{-1/2} entry is taken as 0),
    so the result stays symmetric positive semi-definite with spectrum in
    [0, 2].
    """
    deg = g.degrees(weighted=True)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    wn = g.weight * inv_sqrt[g.src] * inv_sqrt[g.dst]
    if g.num_nodes <= DENSE_NODE_LIMIT:
        lap = np.eye(g.num_nodes)
        np.subtract.at(lap, (g.src, g.dst), wn)
        return SymmetricMatrix(lap)
    coo = sp.coo_matrix((wn, (g.src, g.dst)), shape=(g.num_nodes, g.num_nodes))
    lap = sp.eye(g.num_nodes, format="csr") - coo.tocsr()
    return SymmetricMatrix(lap)


def clustering_coefficient(g: Graph, node: int) -> float:
    """Local clustering coefficient of ``node`` on the unweighted topology."""
    if not (0 <= node < g.num_nodes):
        raise GraphError(f"node {node} out of range")
    nbrs = g.neighbors(node)
    k = len(nbrs)
    if k < 2:
        return 0.0
    nbr_set = set(nbrs.tolist())
    triangles = 0
    for u in nbrs:
        for v in g.neighbors(int(u)):
            if int(v) in nbr_set:
                triangles += 1
    # each triangle edge (u, v) counted in both directions
    triangles //= 2
    return 2.0 * triangles / (k * (k - 1))


def clustering_coefficients(g: Graph) -> np.ndarray:
    """Clustering coefficient for every node."""
    return np.array(
        [clustering_coefficient(g, i) for i in range(g.num_nodes)], dtype=np.float64
    )


def permute_graph(g: Graph, perm: Sequence[int]) -> Graph:
    """Relabel node ``i`` as ``perm[i]``.

    The adjacency of the result equals P W P^T with P[perm[i], i] = 1.
    """
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(g.num_nodes)):
        raise GraphError("perm is not a permutation of the node indices")
    inv = np.empty_like(perm)
    inv[perm] = np.arange(g.num_nodes)
    src = perm[g.src]
    dst = perm[g.dst]
    order = np.lexsort((dst, src))
    feats = g.node_features[inv] if g.node_features is not None else None
    labels = g.node_labels[inv] if g.node_labels is not None else None
    return Graph(
        num_nodes=g.num_nodes,
        src=src[order],
        dst=dst[order],
        weight=g.weight[order],
        node_features=feats,
        node_labels=labels,
    )


def reorder_graph(g: Graph, order: Sequence[int]) -> Graph:
    """Place old node ``order[k]`` at new position ``k`` (inverse of permute)."""
    order = np.asarray(order, dtype=np.int64)
    inv = np.empty_like(order)
    inv[order] = np.arange(g.num_nodes)
    return permute_graph(g, inv)


def load_edge_list(path, num_nodes: Optional[int] = None, one_based: bool = False) -> Graph:
    """Read an "i j [w]" per-line text edge list; '#' starts a comment."""
    edges = []
    max_idx = -1
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            i, j = int(parts[0]), int(parts[1])
            if one_based:
                i, j = i - 1, j - 1
            w = float(parts[2]) if len(parts) > 2 else 1.0
            edges.append((i, j, w))
            max_idx = max(max_idx, i, j)
    if num_nodes is None:
        num_nodes = max_idx + 1
    return build_graph(edges, num_nodes)
