"""Kernel backend selection.

The compiled extension is preferred; the pure-numpy implementation is the
fallback when the extension is missing or when TORICLAB_PURE_PYTHON is set
(used by the benchmark and the backend-equivalence tests).
"""

import os

if os.environ.get("TORICLAB_PURE_PYTHON"):
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

apply_indexed_terms = _impl.apply_indexed_terms
