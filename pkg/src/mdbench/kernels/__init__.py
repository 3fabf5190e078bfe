"""Kernel backend selection.

The compiled extension is used when available; otherwise the numpy
fallback takes over transparently. Set MDBENCH_KERNELS=python to force
the fallback, or MDBENCH_KERNELS=cython to require the extension.
"""

from __future__ import annotations

import os

from . import pyfallback

_choice = os.environ.get("MDBENCH_KERNELS", "auto").strip().lower()

if _choice in ("python", "py", "numpy"):
    _impl = pyfallback
    BACKEND = "python"
elif _choice in ("cython", "c", "compiled"):
    from . import _ckernels as _impl  # type: ignore[no-redef]

    BACKEND = "cython"
elif _choice == "auto":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = pyfallback
        BACKEND = "python"
else:
    raise RuntimeError(f"MDBENCH_KERNELS={_choice!r} not recognized (auto, cython, python)")

layer_norm = _impl.layer_norm
layer_norm_backward = _impl.layer_norm_backward
masked_softmax = _impl.masked_softmax
masked_softmax_backward = _impl.masked_softmax_backward
gelu = _impl.gelu
gelu_backward = _impl.gelu_backward
