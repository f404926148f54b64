"""Selects the rollup kernel backend at import time.

The compiled extension is used when present; set SPMDW_PURE_PYTHON=1 to
force the pure-Python kernels (both produce bit-identical results).
"""

from __future__ import annotations

import os

from . import _kernel_py

if os.environ.get("SPMDW_PURE_PYTHON") == "1":
    _impl = _kernel_py
    BACKEND = "python"
else:
    try:
        from . import _kernel_c as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernel_py
        BACKEND = "python"

NO_FLOOR = _kernel_py.NO_FLOOR
rollup_filtered = _impl.rollup_filtered
rollup_grouped = _impl.rollup_grouped


def backend_name() -> str:
    return BACKEND
