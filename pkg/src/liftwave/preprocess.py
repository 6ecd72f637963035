"""Per-graph preprocessing: basis construction, node reordering, splitting.

The pipeline runs Laplacian -> wavelet basis (exact for desk-scale graphs,
Chebyshev above the dense limit) -> sparsify -> smoothness -> canonical
order -> reorder -> split, and persists the result in the binary container
keyed by a config fingerprint so reruns are free.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from .cache import CacheFormatError, pack_meta, read_container, unpack_meta, write_container
from .datasets import GraphDataset, NodeDataset
from .graphs import DENSE_NODE_LIMIT, Graph, SymmetricMatrix, normalized_laplacian, reorder_graph
from .lifting import LiftSplit, split_nodes
from .spectral import (
    WaveletBasis,
    canonical_order,
    diffusion_wavelets_chebyshev,
    diffusion_wavelets_exact,
    sparsify_basis,
    wavelet_smoothness,
)

logger = logging.getLogger(__name__)

CACHE_SCHEMA_VERSION = 1
DEFAULT_CHEB_ORDER = 30


@dataclass(frozen=True)
class PreprocessedGraph:
    """Reordered graph plus the constants every filter layer consumes."""

    graph: Graph
    order: np.ndarray  # original node index at each new position
    smoothness: np.ndarray  # aligned with the reordered nodes
    basis: WaveletBasis  # on the reordered graph
    split: LiftSplit
    fingerprint: dict


def graph_digest(g: Graph) -> str:
    h = hashlib.sha256()
    h.update(np.int64(g.num_nodes).tobytes())
    h.update(g.src.tobytes())
    h.update(g.dst.tobytes())
    h.update(g.weight.tobytes())
    return h.hexdigest()


def make_fingerprint(
    g: Graph, scale_t: float, basis_threshold: float, split_seed: int, method: str, order: Optional[int]
) -> dict:
    return {
        "schema": CACHE_SCHEMA_VERSION,
        "scale_t": scale_t,
        "basis_threshold": basis_threshold,
        "split_seed": split_seed,
        "method": method,
        "cheb_order": order,
        "graph": graph_digest(g),
    }


def _reorder_matrix(m: SymmetricMatrix, order: np.ndarray) -> SymmetricMatrix:
    if m.is_sparse:
        return SymmetricMatrix(m.data[order][:, order].tocsr())
    return SymmetricMatrix(np.ascontiguousarray(m.data[np.ix_(order, order)]))


def preprocess_graph(
    g: Graph,
    scale_t: float,
    basis_threshold: float,
    split_seed: int,
    method: str = "auto",
    cheb_order: int = DEFAULT_CHEB_ORDER,
) -> PreprocessedGraph:
    """Run the full preprocessing pipeline on one graph."""
    if method == "auto":
        method = "exact" if g.num_nodes <= DENSE_NODE_LIMIT else "chebyshev"
    lap = normalized_laplacian(g)
    if method == "exact":
        basis = diffusion_wavelets_exact(lap, scale_t)
    elif method == "chebyshev":
        prune = basis_threshold / 10 if sp.issparse(lap.data) else 0.0
        basis = diffusion_wavelets_chebyshev(lap, scale_t, cheb_order, prune_tol=prune)
    else:
        raise ValueError(f"unknown basis method {method!r}")
    basis = sparsify_basis(basis, basis_threshold)
    smooth = wavelet_smoothness(basis, lap)
    order = canonical_order(smooth, g)

    g_reordered = reorder_graph(g, order)
    basis_reordered = WaveletBasis(
        scale_t=basis.scale_t,
        forward=_reorder_matrix(basis.forward, order),
        dual=_reorder_matrix(basis.dual, order),
        method=basis.method,
        order=basis.order,
        sparsify_threshold=basis.sparsify_threshold,
    )
    split = split_nodes(g_reordered, split_seed)
    fp = make_fingerprint(g, scale_t, basis_threshold, split_seed, basis.method, basis.order)
    return PreprocessedGraph(
        graph=g_reordered,
        order=order,
        smoothness=smooth[order],
        basis=basis_reordered,
        split=split,
        fingerprint=fp,
    )


def _matrix_sections(prefix: str, m: SymmetricMatrix, sections: dict):
    if m.is_sparse:
        csr = m.data
        sections[f"{prefix}_data"] = csr.data
        sections[f"{prefix}_indices"] = csr.indices.astype(np.int64)
        sections[f"{prefix}_indptr"] = csr.indptr.astype(np.int64)
    else:
        sections[prefix] = m.data


def _matrix_from_sections(prefix: str, sections: dict, n: int) -> SymmetricMatrix:
    if prefix in sections:
        return SymmetricMatrix(sections[prefix])
    csr = sp.csr_matrix(
        (
            sections[f"{prefix}_data"],
            sections[f"{prefix}_indices"],
            sections[f"{prefix}_indptr"],
        ),
        shape=(n, n),
    )
    return SymmetricMatrix(csr)


def save_preprocessed(pg: PreprocessedGraph, path: str):
    sections = {
        "meta": pack_meta(pg.fingerprint),
        "order": pg.order,
        "smoothness": pg.smoothness,
        "split_odd": pg.split.odd_nodes,
        "split_even": pg.split.even_nodes,
        "graph_src": pg.graph.src,
        "graph_dst": pg.graph.dst,
        "graph_weight": pg.graph.weight,
        "graph_n": np.array([pg.graph.num_nodes], dtype=np.int64),
    }
    _matrix_sections("basis_forward", pg.basis.forward, sections)
    _matrix_sections("basis_dual", pg.basis.dual, sections)
    write_container(path, sections)


def load_preprocessed(path: str, source_graph: Optional[Graph] = None) -> PreprocessedGraph:
    """Rebuild a PreprocessedGraph; features come from ``source_graph`` if given."""
    sections = read_container(path)
    fp = unpack_meta(sections["meta"])
    n = int(sections["graph_n"][0])
    order = sections["order"]
    g = Graph(
        num_nodes=n,
        src=sections["graph_src"],
        dst=sections["graph_dst"],
        weight=sections["graph_weight"],
    )
    feats = labels = None
    if source_graph is not None:
        if source_graph.node_features is not None:
            feats = source_graph.node_features[order]
        if source_graph.node_labels is not None:
            labels = source_graph.node_labels[order]
    g = g.with_features(feats, labels) if (feats is not None or labels is not None) else g
    basis = WaveletBasis(
        scale_t=float(fp["scale_t"]),
        forward=_matrix_from_sections("basis_forward", sections, n),
        dual=_matrix_from_sections("basis_dual", sections, n),
        method=fp["method"],
        order=fp["cheb_order"],
        sparsify_threshold=float(fp["basis_threshold"]),
    )
    split = split_nodes(g, int(fp["split_seed"]))
    if not np.array_equal(split.odd_nodes, sections["split_odd"]) or not np.array_equal(
        split.even_nodes, sections["split_even"]
    ):
        raise CacheFormatError(f"{path}: stored split disagrees with the recomputed one")
    return PreprocessedGraph(
        graph=g,
        order=order,
        smoothness=sections["smoothness"],
        basis=basis,
        split=split,
        fingerprint=fp,
    )


def cached_preprocess_graph(
    g: Graph,
    scale_t: float,
    basis_threshold: float,
    split_seed: int,
    cache_path: Optional[str],
    method: str = "auto",
    cheb_order: int = DEFAULT_CHEB_ORDER,
) -> tuple:
    """Load from cache when the fingerprint matches, else compute and store.

    Returns (PreprocessedGraph, hit_flag).
    """
    resolved_method = method
    if resolved_method == "auto":
        resolved_method = "exact" if g.num_nodes <= DENSE_NODE_LIMIT else "chebyshev"
    expected = make_fingerprint(
        g,
        scale_t,
        basis_threshold,
        split_seed,
        resolved_method,
        None if resolved_method == "exact" else cheb_order,
    )
    if cache_path and os.path.exists(cache_path):
        try:
            sections = read_container(cache_path)
            if unpack_meta(sections["meta"]) == expected:
                return load_preprocessed(cache_path, g), True
            logger.info("%s: fingerprint mismatch, recomputing", cache_path)
        except (CacheFormatError, KeyError) as exc:
            logger.warning("%s: unreadable cache (%s), recomputing", cache_path, exc)
    pg = preprocess_graph(g, scale_t, basis_threshold, split_seed, method, cheb_order)
    if cache_path:
        save_preprocessed(pg, cache_path)
    return pg, False


def preprocess_node_dataset(
    ds: NodeDataset,
    scale_t: float,
    basis_threshold: float,
    split_seed: int,
    cache_dir: Optional[str] = None,
    method: str = "auto",
    cheb_order: int = DEFAULT_CHEB_ORDER,
):
    """Preprocess a node dataset; masks are remapped to the new order.

    Returns (reordered NodeDataset, PreprocessedGraph, cache_hit).
    """
    path = os.path.join(cache_dir, f"{ds.name or 'node'}.lwc") if cache_dir else None
    pg, hit = cached_preprocess_graph(
        ds.graph, scale_t, basis_threshold, split_seed, path, method, cheb_order
    )
    inv = np.empty_like(pg.order)
    inv[pg.order] = np.arange(len(pg.order))
    remapped = NodeDataset(
        graph=pg.graph,
        train_idx=np.sort(inv[ds.train_idx]),
        val_idx=np.sort(inv[ds.val_idx]),
        test_idx=np.sort(inv[ds.test_idx]),
        name=ds.name,
    )
    return remapped, pg, hit


def preprocess_graph_dataset(
    ds: GraphDataset,
    scale_t: float,
    basis_threshold: float,
    split_seed: int,
    cache_dir: Optional[str] = None,
    method: str = "auto",
    cheb_order: int = DEFAULT_CHEB_ORDER,
) -> List[PreprocessedGraph]:
    """Preprocess every graph of a graph-classification dataset."""
    out = []
    for i, g in enumerate(ds.graphs):
        path = (
            os.path.join(cache_dir, f"{ds.name or 'graphs'}_{i:05d}.lwc")
            if cache_dir
            else None
        )
        pg, _ = cached_preprocess_graph(
            g, scale_t, basis_threshold, split_seed, path, method, cheb_order
        )
        out.append(pg)
    return out
