"""Kernel backend selection.

Prefers the compiled extension; falls back to the NumPy implementation
when the extension is missing or ``GMBUA_PURE_PYTHON`` is set.
"""

import os

if os.environ.get("GMBUA_PURE_PYTHON"):
    from . import _kernels_np as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_np as kernels

BACKEND = kernels.BACKEND


def get_kernels(name=None):
    """Return a kernel module by name ("cython" or "numpy"); default: active."""
    if name is None:
        return kernels
    if name == "numpy":
        from . import _kernels_np

        return _kernels_np
    if name == "cython":
        from . import _kernels  # raises ImportError if not built

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
