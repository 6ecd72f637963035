"""Kernel backend selection.

The compiled Cython module is preferred when it imported cleanly; the NumPy
fallback is used otherwise. ``LIFTWAVE_KERNELS=py`` forces the fallback,
``LIFTWAVE_KERNELS=cy`` demands the compiled module (raising if missing),
which the tests use to compare backends.
"""

import os

from . import _fallback

_FUNCTIONS = (
    "spmm_edge_forward",
    "spmm_edge_grad_vals",
    "spmm_edge_grad_x",
    "segment_softmax_forward",
    "segment_softmax_grad",
    "soft_threshold_forward",
)

_choice = os.environ.get("LIFTWAVE_KERNELS", "auto").lower()

if _choice == "py":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "cython"
    except ImportError:
        if _choice == "cy":
            raise
        _impl = _fallback
        BACKEND = "python"


def get_impl(name):
    """Return the selected implementation of a kernel by name."""
    if name not in _FUNCTIONS:
        raise KeyError(name)
    return getattr(_impl, name)


spmm_edge_forward = _impl.spmm_edge_forward
spmm_edge_grad_vals = _impl.spmm_edge_grad_vals
spmm_edge_grad_x = _impl.spmm_edge_grad_x
segment_softmax_forward = _impl.segment_softmax_forward
segment_softmax_grad = _impl.segment_softmax_grad
soft_threshold_forward = _impl.soft_threshold_forward
