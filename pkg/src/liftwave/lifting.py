"""Node splitting and invertible predict/update lifting transforms.

A lifting step works on a fixed odd/even node partition and may only move
information along edges that cross the partition. Operator weights come
either from a shared attention score (learned) or from uniform averaging
(fixed); row softmax normalization makes update rows sum to 1 and predict
rows to 1/2, which zeroes the detail coefficients of constant signals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .graphs import Graph


class SplitError(ValueError):
    """Raised when a graph cannot be partitioned for lifting."""


@dataclass(frozen=True)
class LiftSplit:
    """Odd/even node partition plus the cross-adjacency blocks.

    ``cross_odd_even`` holds edge weights from odd rows to even columns;
    ``cross_even_odd`` is its structural transpose.
    """

    odd_nodes: np.ndarray
    even_nodes: np.ndarray
    cross_odd_even: sp.csr_matrix
    cross_even_odd: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return len(self.odd_nodes) + len(self.even_nodes)

    @cached_property
    def p_edges(self):
        """(rows, cols, indptr) of the odd-by-even block in CSR order."""
        m = self.cross_odd_even
        rows = np.repeat(np.arange(m.shape[0], dtype=np.int64), np.diff(m.indptr))
        return rows, m.indices.astype(np.int64), m.indptr.astype(np.int64)

    @cached_property
    def u_edges(self):
        """(rows, cols, indptr) of the even-by-odd block in CSR order."""
        m = self.cross_even_odd
        rows = np.repeat(np.arange(m.shape[0], dtype=np.int64), np.diff(m.indptr))
        return rows, m.indices.astype(np.int64), m.indptr.astype(np.int64)

    @cached_property
    def p_edge_endpoints(self):
        """Global (row node, col node) ids of the odd-by-even edges."""
        rows, cols, _ = self.p_edges
        return self.odd_nodes[rows], self.even_nodes[cols]

    @cached_property
    def u_edge_endpoints(self):
        """Global (row node, col node) ids of the even-by-odd edges."""
        rows, cols, _ = self.u_edges
        return self.even_nodes[rows], self.odd_nodes[cols]


@dataclass(frozen=True)
class AttentionParams:
    """Shared attention parameters: a1 combines the two projected endpoints."""

    a1: np.ndarray  # (2c,)
    a2: np.ndarray  # (c, d)

    def __post_init__(self):
        a1 = np.asarray(self.a1, dtype=np.float64).ravel()
        a2 = np.asarray(self.a2, dtype=np.float64)
        if a2.ndim != 2 or len(a1) != 2 * a2.shape[0]:
            raise ValueError(
                f"a1 length {len(a1)} incompatible with a2 shape {a2.shape}"
            )
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)

    @property
    def attention_dim(self) -> int:
        return self.a2.shape[0]


@dataclass(frozen=True)
class AttentionScores:
    """Raw scores on the cross edges, one block per direction."""

    odd_even: sp.csr_matrix
    even_odd: sp.csr_matrix


@dataclass(frozen=True)
class LiftOperators:
    """Update (even-by-odd) and predict (odd-by-even) operators.

    Nonempty update rows sum to 1 and nonempty predict rows to 1/2; rows
    without cross-neighbors are zero and leave their node untouched.
    """

    update: sp.csr_matrix
    predict: sp.csr_matrix

    def row_sums(self):
        u = np.asarray(self.update.sum(axis=1)).ravel()
        p = np.asarray(self.predict.sum(axis=1)).ravel()
        return u, p


def split_nodes(g_canonical: Graph, seed: int) -> LiftSplit:
    """Seeded half/half node split with cross blocks taken from the adjacency.

    The odd subset receives ceil(N/2) nodes. Deterministic given the node
    order of ``g_canonical`` and the seed.
    """
    n = g_canonical.num_nodes
    if n < 2:
        raise SplitError("need at least 2 nodes to split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_odd = math.ceil(n / 2)
    odd = np.sort(perm[:n_odd]).astype(np.int64)
    even = np.sort(perm[n_odd:]).astype(np.int64)

    side = np.zeros(n, dtype=np.int8)  # 1 odd, 0 even
    side[odd] = 1
    local = np.zeros(n, dtype=np.int64)
    local[odd] = np.arange(len(odd))
    local[even] = np.arange(len(even))

    cross = side[g_canonical.src] == 1
    cross &= side[g_canonical.dst] == 0
    rows = local[g_canonical.src[cross]]
    cols = local[g_canonical.dst[cross]]
    vals = g_canonical.weight[cross]
    k_block = sp.coo_matrix((vals, (rows, cols)), shape=(len(odd), len(even))).tocsr()
    q_block = k_block.T.tocsr()
    return LiftSplit(
        odd_nodes=odd,
        even_nodes=even,
        cross_odd_even=k_block,
        cross_even_odd=q_block,
    )


def attention_scores(
    features: np.ndarray, params: AttentionParams, split: LiftSplit
) -> AttentionScores:
    """Score every cross edge as a1 . [a2 x_row || a2 x_col].

    ``features`` are the current layer's transformed node features for the
    whole graph, indexed by the global node ids in the split.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != params.a2.shape[1]:
        raise ValueError(
            f"features shape {feats.shape} incompatible with a2 {params.a2.shape}"
        )
    c = params.attention_dim
    z = feats @ params.a2.T
    s_row = z @ params.a1[:c]
    s_col = z @ params.a1[c:]

    def block(mask: sp.csr_matrix, row_ids, col_ids):
        rows = np.repeat(np.arange(mask.shape[0]), np.diff(mask.indptr))
        data = s_row[row_ids[rows]] + s_col[col_ids[mask.indices]]
        return sp.csr_matrix((data, mask.indices.copy(), mask.indptr.copy()), shape=mask.shape)

    return AttentionScores(
        odd_even=block(split.cross_odd_even, split.odd_nodes, split.even_nodes),
        even_odd=block(split.cross_even_odd, split.even_nodes, split.odd_nodes),
    )


def _row_softmax_csr(m: sp.csr_matrix) -> sp.csr_matrix:
    probs = _kernels.segment_softmax_forward(
        np.ascontiguousarray(m.data, dtype=np.float64), m.indptr.astype(np.int64)
    )
    return sp.csr_matrix((probs, m.indices.copy(), m.indptr.copy()), shape=m.shape)


def lifting_operators(scores: AttentionScores, split: LiftSplit) -> LiftOperators:
    """Normalize cross-edge scores into the update/predict operators."""
    update = _row_softmax_csr(scores.even_odd)
    predict = _row_softmax_csr(scores.odd_even)
    predict = sp.csr_matrix(
        (predict.data * 0.5, predict.indices, predict.indptr), shape=predict.shape
    )
    return LiftOperators(update=update, predict=predict)


def fixed_lifting_operators(split: LiftSplit) -> LiftOperators:
    """Non-learnable operators: uniform averaging over cross-neighbors."""

    def uniform(mask: sp.csr_matrix, scale: float) -> sp.csr_matrix:
        counts = np.diff(mask.indptr)
        data = np.repeat(
            np.divide(scale, counts, out=np.zeros(len(counts)), where=counts > 0),
            counts,
        )
        return sp.csr_matrix((data, mask.indices.copy(), mask.indptr.copy()), shape=mask.shape)

    return LiftOperators(
        update=uniform(split.cross_even_odd, 1.0),
        predict=uniform(split.cross_odd_even, 0.5),
    )


def forward_lift(x_odd, x_even, ops: LiftOperators):
    """Update-first lifting step: returns (coarse, detail)."""
    x_odd = np.asarray(x_odd, dtype=np.float64)
    x_even = np.asarray(x_even, dtype=np.float64)
    coarse = x_even + ops.update @ x_odd
    detail = x_odd - ops.predict @ coarse
    return coarse, detail


def inverse_lift(coarse, detail, ops: LiftOperators):
    """Exact inverse of forward_lift with the same operators."""
    coarse = np.asarray(coarse, dtype=np.float64)
    detail = np.asarray(detail, dtype=np.float64)
    x_odd = detail + ops.predict @ coarse
    x_even = coarse - ops.update @ x_odd
    return x_odd, x_even


def multi_block_lift(x_odd, x_even, blocks: Sequence[LiftOperators]):
    """Apply several lifting steps in sequence on one partition."""
    odd = np.asarray(x_odd, dtype=np.float64)
    even = np.asarray(x_even, dtype=np.float64)
    for ops in blocks:
        even, odd = forward_lift(odd, even, ops)
    return even, odd


def multi_block_inverse(coarse, detail, blocks: Sequence[LiftOperators]):
    """Invert multi_block_lift by unwinding the blocks in reverse."""
    even = np.asarray(coarse, dtype=np.float64)
    odd = np.asarray(detail, dtype=np.float64)
    for ops in reversed(blocks):
        odd, even = inverse_lift(even, odd, ops)
    return odd, even
