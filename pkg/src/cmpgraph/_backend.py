"""Select the kernel implementation at import time.

The compiled extension is preferred. Setting ``CMPGRAPH_PURE_PYTHON=1``
forces the NumPy fallback, as does a missing or broken build.
"""

import logging
import os

from . import _pykernels

logger = logging.getLogger(__name__)

if os.environ.get("CMPGRAPH_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels
    except ImportError:  # not built
        logger.debug("compiled kernels unavailable, using NumPy fallback")
        kernels = _pykernels
        BACKEND = "python"
    else:
        BACKEND = "cython"

__all__ = ["BACKEND", "kernels"]
