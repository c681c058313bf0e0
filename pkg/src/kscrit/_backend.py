"""Pick the compiled kernels when importable, otherwise the numpy fallback.

Set ``KSCRIT_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

from . import _pykernels

kernels = _pykernels
NAME = "python"

if not os.environ.get("KSCRIT_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        kernels = _ckernels
        NAME = "cython"

OK, MAX_STEPS, FLOOR, NEGATIVE = _pykernels.OK, _pykernels.MAX_STEPS, _pykernels.FLOOR, _pykernels.NEGATIVE


def available() -> dict:
    """Map of backend name to module for every backend that imports."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        return out
    out["cython"] = _ckernels
    return out
