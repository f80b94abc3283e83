"""Kernel selection: the compiled extension when importable, else the numpy fallback.

Set ``PRIOCOORD_PURE=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("PRIOCOORD_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"
first_hits = _impl.first_hits


def use(backend: str):
    """Switch backend at runtime (``"compiled"`` or ``"python"``); used by benchmarks and tests."""
    global _impl, BACKEND, first_hits
    if backend == "python":
        _impl = _kernels_py
    elif backend == "compiled":
        from . import _kernels as _impl  # noqa: F811
    else:
        raise ValueError(backend)
    BACKEND = backend
    first_hits = _impl.first_hits


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
