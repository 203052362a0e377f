"""Kernel backend selection.

The compiled kernel is used when the extension was built; setting the
environment variable ``GSLAB_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os
import warnings

from . import _kernels_py

CYTHON_AVAILABLE = False
if os.environ.get("GSLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
        CYTHON_AVAILABLE = True
    except ImportError:
        warnings.warn("gslab compiled kernels not built; using the numpy fallback",
                      RuntimeWarning, stacklevel=2)

if CYTHON_AVAILABLE:
    gram_triplets = _compiled.gram_triplets
    BACKEND = "cython"
else:
    gram_triplets = _kernels_py.gram_triplets
    BACKEND = "python"

__all__ = ["gram_triplets", "BACKEND", "CYTHON_AVAILABLE"]
