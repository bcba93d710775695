"""Select the compiled kernels when available, else the pure-Python ones.

Set ``CROWDREV_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from crowdrev import _pykernels

if os.environ.get("CROWDREV_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from crowdrev import _ckernels as kernels  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        kernels = _pykernels
        BACKEND = "python"

__all__ = ["BACKEND", "kernels"]
