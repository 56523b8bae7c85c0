"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
module is loaded.  Set ``GEOPRUNE_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is None or os.environ.get("GEOPRUNE_PURE_PYTHON"):
    _active = python_backend
    BACKEND = "python"
else:
    _active = compiled_backend
    BACKEND = "cython"

dijkstra = _active.dijkstra
scan_insertions = _active.scan_insertions

__all__ = ["BACKEND", "dijkstra", "scan_insertions", "python_backend", "compiled_backend"]
