"""Kernel backend selection.

The compiled extension is preferred. Setting ``FXTADAPT_PURE_PYTHON=1``
forces the pure-Python kernels, which is how the test-suite and the
benchmark exercise the fallback.
"""
import os

from fxtadapt import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if not os.environ.get("FXTADAPT_PURE_PYTHON"):
    try:
        from fxtadapt import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        kernels = _compiled
        BACKEND = "cython"


def available_backends():
    """Map backend name to kernel module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from fxtadapt import _kernels as _compiled  # type: ignore[attr-defined]

        out["cython"] = _compiled
    except ImportError:
        pass
    return out
