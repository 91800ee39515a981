"""Numeric kernels behind the hot loops.

At import time the compiled extension is preferred; the pure-numpy fallback
in _ref is used when the extension is missing. CORENET_KERNELS=py forces the
fallback, CORENET_KERNELS=c makes a missing extension an error. BACKEND
reports which one is active.
"""
import os

from . import _ref

_choice = os.environ.get("CORENET_KERNELS", "").lower()
if _choice == "py":
    _impl = _ref
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "c":
            raise
        _impl = _ref

BACKEND = "compiled" if _impl is not _ref else "python"

matvec_dense = _impl.matvec_dense
sample_row = _impl.sample_row
matvec_csr = _impl.matvec_csr
sample_counts = _impl.sample_counts
edge_sensitivities = _impl.edge_sensitivities

__all__ = [
    "BACKEND",
    "matvec_dense",
    "matvec_csr",
    "sample_counts",
    "sample_row",
    "edge_sensitivities",
]
