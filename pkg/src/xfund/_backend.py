"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the numpy
reference implementation is always available.  Set ``XFUND_BACKEND`` to
``python`` or ``cython`` to force a choice (forcing ``cython`` on a build
without the extension raises at import time rather than silently degrading).
"""
from __future__ import annotations

import os

from . import _kernels_py
from .errors import InvalidInputError

_impl = _kernels_py
_name = "python"

_choice = os.environ.get("XFUND_BACKEND", "auto").lower()
if _choice not in ("auto", "python", "cython"):
    raise InvalidInputError(
        f"XFUND_BACKEND={_choice!r}: expected auto, python, or cython"
    )
if _choice in ("auto", "cython"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        if _choice == "cython":
            raise
    else:
        _impl = _compiled
        _name = "cython"


def backend_name() -> str:
    """Which kernel implementation this process is using."""
    return _name


level_offset = _impl.level_offset
pn_backward_1d = _impl.pn_backward_1d
pn_forward_1d = _impl.pn_forward_1d
endo_backward_1d = _impl.endo_backward_1d
endo_forward_1d = _impl.endo_forward_1d
