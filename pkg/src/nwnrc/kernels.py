"""Kernel selection.

The compiled extension is used when it imports; otherwise the numpy
implementation in :mod:`nwnrc._kernels_py`. Set ``NWNRC_PURE_PYTHON=1``
to force the fallback.
"""
import os

from . import _kernels_py

try:
    if os.environ.get("NWNRC_PURE_PYTHON", "") == "1":
        raise ImportError("pure-Python kernel forced by NWNRC_PURE_PYTHON")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

HAVE_COMPILED = _compiled is not None
BACKEND = "compiled" if HAVE_COMPILED else "python"


def get_kernel(backend: str = "auto"):
    """Kernel class for ``backend`` in {"auto", "compiled", "python"}."""
    if backend == "python":
        return _kernels_py.CircuitKernel
    if backend == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernel unavailable; build with `pip install -e .`")
        return _compiled.CircuitKernel
    if backend == "auto":
        return _compiled.CircuitKernel if _compiled is not None else _kernels_py.CircuitKernel
    raise ValueError(f"unknown backend {backend!r}")


def backend_name(cls) -> str:
    return "python" if cls is _kernels_py.CircuitKernel else "compiled"
