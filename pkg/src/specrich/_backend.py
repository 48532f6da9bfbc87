"""Selects the kernel implementation at import time.

The compiled extension is preferred.  Set ``SPECRICH_BACKEND=python`` to
force the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("SPECRICH_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as kernels  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass

resample_weights = kernels.resample_weights
composite_gram = kernels.composite_gram
kernel_grid_rmse = kernels.kernel_grid_rmse
