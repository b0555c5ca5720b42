"""Kernel backend selection.

The compiled extension is preferred when built; the numpy reference backend
is the fallback.  ``DEMOPT_KERNELS`` overrides: ``cython`` (fail if the
extension is missing), ``python``, or ``auto`` (default).
"""

import os

from demopt._kernels import pyref

_requested = os.environ.get("DEMOPT_KERNELS", "auto").lower()
if _requested not in ("auto", "cython", "python"):
    raise RuntimeError(
        f"DEMOPT_KERNELS must be auto, cython or python, got {_requested!r}"
    )

if _requested == "python":
    _impl = pyref
    BACKEND = "python"
else:
    try:
        from demopt._kernels import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = pyref
        BACKEND = "python"

dct_axis = _impl.dct_axis
topk_abs = _impl.topk_abs
scatter_merge = _impl.scatter_merge

__all__ = ["BACKEND", "dct_axis", "topk_abs", "scatter_merge", "pyref"]
