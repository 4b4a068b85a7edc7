"""Hot-kernel backend selection.

The numba backend is used when available; set ``WEPADIM_NO_NUMBA=1`` to force
the pure-numpy fallback (useful for debugging and for the backend benchmark,
``python -m wepadim.benchmark``).  The choice is made once at import time.
"""

from __future__ import annotations

import os


def _numba_disabled() -> bool:
    return os.environ.get("WEPADIM_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}


if _numba_disabled():
    from . import _numpy as _impl
else:
    try:
        from . import _numba as _impl  # type: ignore[no-redef]
    except ImportError:  # numba not installed
        from . import _numpy as _impl  # type: ignore[no-redef]

BACKEND = _impl.BACKEND_NAME

analysis_lastaxis = _impl.analysis_lastaxis
synthesis_lastaxis = _impl.synthesis_lastaxis
accumulate_moments = _impl.accumulate_moments
mahalanobis_sq = _impl.mahalanobis_sq

__all__ = [
    "BACKEND",
    "analysis_lastaxis",
    "synthesis_lastaxis",
    "accumulate_moments",
    "mahalanobis_sq",
]
