"""Adaptive graph wavelet filters built from lifting structures.

Provides diffusion wavelet bases (exact and Chebyshev), attention-driven
lifting transforms with guaranteed perfect reconstruction, soft-threshold
wavelet filtering, and trainable node/graph classification models, plus a
verification suite for the transform properties.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .graphs import (
    Graph,
    GraphError,
    SymmetricMatrix,
    build_graph,
    clustering_coefficient,
    load_edge_list,
    normalized_laplacian,
    permute_graph,
    reorder_graph,
)
from .lifting import (
    AttentionParams,
    LiftOperators,
    LiftSplit,
    attention_scores,
    fixed_lifting_operators,
    forward_lift,
    inverse_lift,
    lifting_operators,
    multi_block_inverse,
    multi_block_lift,
    split_nodes,
)
from .spectral import (
    EigenDecomposition,
    WaveletBasis,
    canonical_order,
    diffusion_wavelets_chebyshev,
    diffusion_wavelets_exact,
    eig_sym,
    sparsify_basis,
    verify_approximation_bound,
    wavelet_smoothness,
)
from .filtering import (
    FilterLayer,
    FilterLayerParams,
    feature_transform,
    soft_threshold,
    sparsity_ratio,
    transform_signal,
)
from .preprocess import PreprocessedGraph, preprocess_graph

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "Graph",
    "GraphError",
    "SymmetricMatrix",
    "build_graph",
    "clustering_coefficient",
    "load_edge_list",
    "normalized_laplacian",
    "permute_graph",
    "reorder_graph",
    "AttentionParams",
    "LiftOperators",
    "LiftSplit",
    "attention_scores",
    "fixed_lifting_operators",
    "forward_lift",
    "inverse_lift",
    "lifting_operators",
    "multi_block_inverse",
    "multi_block_lift",
    "split_nodes",
    "EigenDecomposition",
    "WaveletBasis",
    "canonical_order",
    "diffusion_wavelets_chebyshev",
    "diffusion_wavelets_exact",
    "eig_sym",
    "sparsify_basis",
    "verify_approximation_bound",
    "wavelet_smoothness",
    "FilterLayer",
    "FilterLayerParams",
    "feature_transform",
    "soft_threshold",
    "sparsity_ratio",
    "transform_signal",
    "PreprocessedGraph",
    "preprocess_graph",
    "__version__",
]
