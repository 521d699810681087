"""Select the simulation kernel backend at import time.

The compiled extension is preferred; the pure-Python twin is the fallback.
Set RBDNET_PURE_PYTHON=1 to force the fallback (used by the cross-check
tests and the backend benchmark).
"""
import os

if os.environ.get("RBDNET_PURE_PYTHON") == "1":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels_c as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels

BACKEND = kernels.BACKEND_NAME


def get_kernels(name: str | None = None):
    """Return a kernel module by name ('compiled' or 'python'), or the default."""
    if name is None:
        return kernels
    if name == "python":
        from . import _kernels_py
        return _kernels_py
    if name == "compiled":
        from . import _kernels_c  # raises ImportError if not built
        return _kernels_c
    raise ValueError(f"unknown backend {name!r}")
