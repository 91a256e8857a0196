"""Kernel backend selection.

The compiled extension is used when it imports and the dimension fits its
fixed-size buffers; otherwise the numpy fallback is used.  Setting
``REGENLAB_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

try:
    if os.environ.get("REGENLAB_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

NAME = "compiled" if _compiled is not None else "python"


def has_compiled():
    return _compiled is not None


def kernels_for(d, prefer=None):
    """Kernel module for dimension ``d``.

    ``prefer`` may be ``"compiled"`` or ``"python"`` to pin a backend.
    """
    if prefer == "python":
        return _pykernels
    if prefer == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    if _compiled is not None and d <= _compiled.MAX_DIM:
        return _compiled
    return _pykernels
