"""Backend selection for the hot loops.

The compiled extension is used when importable; setting the environment
variable ``SCENARIO_CBF_PURE_PYTHON=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

py = _pykernels

try:
    if os.environ.get("SCENARIO_CBF_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl  # type: ignore[attr-defined]

    BACKEND = "cython"
    compiled = _impl
except ImportError:
    _impl = _pykernels
    BACKEND = "python"
    compiled = None

most_violated = _impl.most_violated
halfplane_cycle = _impl.halfplane_cycle


def backends():
    """Mapping of available backend name -> kernel module."""
    out = {"python": _pykernels}
    if compiled is not None:
        out["cython"] = compiled
    return out
