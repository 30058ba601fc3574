"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``CARLEMAN_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy fallback is used.
"""
import os

from . import _kernels_py

if os.environ.get("CARLEMAN_PURE_PYTHON", "") not in ("", "0"):
    _backend = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _backend
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _backend = _kernels_py
        BACKEND = "python"

dijkstra = _backend.dijkstra
verlet_1d = _backend.verlet_1d
verlet_2d = _backend.verlet_2d


def get_backend(name=None):
    """Return the kernel module by name (``"compiled"`` or ``"python"``)."""
    if name is None:
        return _backend
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
