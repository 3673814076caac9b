"""Kernel backend selection.

The compiled extension is used when it imports cleanly; setting
``SPARSEAPPROX_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels as python_kernels

compiled_kernels = None
if os.environ.get("SPARSEAPPROX_PURE_PYTHON", "") != "1":
    try:
        from . import _kernels as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
COMPILED = compiled_kernels is not None


def get(name):
    """Return the backend module called ``name`` ("compiled" or "python")."""
    if name == "python":
        return python_kernels
    if name == "compiled":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels are not available")
        return compiled_kernels
    if name == "auto":
        return kernels
    raise ValueError(f"unknown backend {name!r}")
