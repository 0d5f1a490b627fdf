"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy implementation in ``_pykernels`` is used. Set ``LOWFPS_MOT_PURE=1`` to
force the fallback (tests use this to compare the two).
"""
import os

from . import _pykernels

try:
    if os.environ.get("LOWFPS_MOT_PURE") == "1":
        raise ImportError("pure backend forced")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

iou_matrix = _impl.iou_matrix
solve_lsa = _impl.solve_lsa


def available_backends():
    """Map backend name to module for every importable implementation."""
    backends = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends
