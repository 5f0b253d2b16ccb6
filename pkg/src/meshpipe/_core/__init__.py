"""Search kernel selection: compiled extension when available, numpy
fallback otherwise.  Set MESHPIPE_PURE=1 to force the fallback."""

import os

if os.environ.get("MESHPIPE_PURE"):
    from .dp_py import dp_sweep

    BACKEND = "python"
else:
    try:
        from ._dp import dp_sweep  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        from .dp_py import dp_sweep  # type: ignore[no-redef]

        BACKEND = "python"

__all__ = ["dp_sweep", "BACKEND"]
