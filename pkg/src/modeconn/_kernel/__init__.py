"""Kernel backend selection.

The compiled extension is preferred when importable; setting the environment
variable ``MODECONN_PURE_PYTHON`` (to any non-empty value) before import
forces the numpy fallback.  Both backends implement the same three
entry points with identical semantics: ``forward_logits``, ``grad_full``
and ``run_epoch``.
"""

import os

from . import pykernel

if os.environ.get("MODECONN_PURE_PYTHON"):
    _impl = pykernel
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = pykernel

BACKEND = _impl.NAME
forward_logits = _impl.forward_logits
grad_full = _impl.grad_full
run_epoch = _impl.run_epoch


def get_backend() -> str:
    """Name of the active kernel backend: "compiled" or "python"."""
    return BACKEND
