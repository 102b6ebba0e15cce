"""Kernel backend selection.

The hot loops (filter run, LSTM recurrence, sliding detector statistics) have
two interchangeable implementations: a Cython extension (``_native``) and a
pure-NumPy reference (``_reference``). The native backend is preferred when
its extension module importable; set ``ZVNAV_KERNELS=python`` or
``ZVNAV_KERNELS=native`` to force a choice. ``BACKEND`` names the active one.
"""

import importlib
import os

from . import _reference

_requested = os.environ.get("ZVNAV_KERNELS", "").lower()
if _requested not in ("", "native", "python"):
    raise RuntimeError(
        f"ZVNAV_KERNELS must be 'native' or 'python', got {_requested!r}"
    )

_native = None
if _requested in ("", "native"):
    try:
        _native = importlib.import_module(__name__ + "._native")
    except ImportError:
        if _requested == "native":
            raise

if _native is not None:
    BACKEND = "native"
    _impl = _native
else:
    BACKEND = "python"
    _impl = _reference

eskf_run = _impl.eskf_run
lstm_seq_forward = _impl.lstm_seq_forward
lstm_seq_backward = _impl.lstm_seq_backward
shoe_statistics = _impl.shoe_statistics
ared_statistics = _impl.ared_statistics

native_available = _native is not None
