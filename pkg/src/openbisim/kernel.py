"""Selects the rewrite kernel: compiled Cython extension when available,
pure-Python twin otherwise.  ``OPENBISIM_PURE=1`` forces the fallback."""

from __future__ import annotations

import os

from . import _rewrite_py

if os.environ.get("OPENBISIM_PURE"):
    _impl = _rewrite_py
else:
    try:
        from . import _rewrite as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _rewrite_py

IMPLEMENTATION: str = _impl.IMPLEMENTATION
normalize = _impl.normalize
RewriteLimit = _rewrite_py.RewriteLimit

# The compiled kernel raises the shared exception type from _rewrite_py, so
# callers can always catch kernel.RewriteLimit.
