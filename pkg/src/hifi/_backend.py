"""Pick the compiled kernels when available, else the numpy fallback."""

import logging
import os

logger = logging.getLogger(__name__)

if os.environ.get("HIFI_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels

        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _kernels_py as kernels

        BACKEND = "python"
        logger.debug("hifi._kernels not built; using numpy fallback")

__all__ = ["kernels", "BACKEND"]
