"""Backend selection for the solver hot kernels.

Prefers the compiled extension; falls back to the numpy implementation
when the extension is missing or TDCLUST_PURE_PYTHON=1 is set.
"""

from __future__ import annotations

import os

from . import _core_py

if os.environ.get("TDCLUST_PURE_PYTHON", "") not in ("", "0"):
    _impl = _core_py
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _core_py

distance_matrix = _impl.distance_matrix
distance_argmin = _impl.distance_argmin


def backend_name() -> str:
    """Name of the active kernel backend ('compiled' or 'python')."""
    return _impl.BACKEND
