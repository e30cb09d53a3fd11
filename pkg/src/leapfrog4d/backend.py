"""Selects the stepping-kernel backend at import time.

The compiled extension is preferred; the pure-Python loops are the fallback.
Set LEAPFROG4D_FORCE_PYTHON=1 to force the fallback (used by the benchmark
and the backend-equivalence tests).
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("LEAPFROG4D_FORCE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.BACKEND


def get_kernels(force: str | None = None):
    """Kernel module for ``force`` in {"python", "compiled", None=selected}."""
    if force is None:
        return kernels
    if force == "python":
        return _kernels_py
    if force == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {force!r}")
