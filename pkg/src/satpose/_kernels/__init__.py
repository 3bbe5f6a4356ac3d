"""Rasterizer fill kernel with backend selection at import time.

The compiled Cython kernel and the NumPy fallback evaluate the same
floating-point expressions in the same order (the extension is built
with -ffp-contract=off), so the two backends produce bit-identical
buffers.  Set SATPOSE_FORCE_FALLBACK=1 to skip the compiled kernel.
"""

import os

from . import _fallback

_force = os.environ.get("SATPOSE_FORCE_FALLBACK", "") not in ("", "0")

if not _force:
    try:
        from . import _fill as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "fallback"
else:
    _impl = _fallback
    BACKEND = "fallback"

fill = _impl.fill


def backend_name() -> str:
    """Which fill kernel is active: 'compiled' or 'fallback'."""
    return BACKEND
