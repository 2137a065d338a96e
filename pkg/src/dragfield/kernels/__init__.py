"""Hot-kernel backend selection.

The compiled core (Cython) is preferred when importable; the numpy
implementation is the fallback and the reference.  Force a choice with
DRAGFIELD_KERNELS=compiled|numpy (default: auto).
"""

from __future__ import annotations

import os

from . import numpy_impl

_choice = os.environ.get("DRAGFIELD_KERNELS", "auto").lower()

if _choice not in ("auto", "compiled", "numpy"):
    raise RuntimeError(f"DRAGFIELD_KERNELS must be auto|compiled|numpy, got {_choice!r}")

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError(
                "DRAGFIELD_KERNELS=compiled but dragfield.kernels._core is not built; "
                "run `python setup.py build_ext --inplace`")
        _impl = None
if _impl is None:
    _impl = numpy_impl

BACKEND: str = _impl.BACKEND

field_forward = _impl.field_forward
field_backward = _impl.field_backward
masked_l1_forward = _impl.masked_l1_forward
masked_l1_backward = _impl.masked_l1_backward
fused_score = _impl.fused_score
train_filter = _impl.train_filter


def backend_name() -> str:
    return BACKEND
