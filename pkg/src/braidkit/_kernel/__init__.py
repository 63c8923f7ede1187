"""Crossing-scan kernel with backend selection.

The compiled Cython kernel is preferred; the pure-Python twin is used when
the extension is unavailable or ``BRAIDKIT_PURE_PYTHON=1`` is set.  Both
produce bit-identical results (see tests/test_kernel_backends.py).
"""

import os

if os.environ.get("BRAIDKIT_PURE_PYTHON") == "1":
    from . import scan_py as _impl
else:
    try:
        from . import _scan_c as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import scan_py as _impl

BACKEND: str = _impl.BACKEND
scan_crossings = _impl.scan_crossings

__all__ = ["BACKEND", "scan_crossings"]
