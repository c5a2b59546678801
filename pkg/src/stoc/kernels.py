"""Backend selection for the training kernel.

The compiled extension is used when it imports; otherwise the numpy
implementation. ``STOC_KERNEL=python`` forces the fallback.
"""

import os

from . import _kernel_py

BACKEND = "python"
loss_and_grads = _kernel_py.loss_and_grads
features = _kernel_py.features

if os.environ.get("STOC_KERNEL", "").lower() not in ("python", "py", "numpy"):
    try:
        from . import _kernel
    except ImportError:
        pass
    else:
        loss_and_grads = _kernel.loss_and_grads
        BACKEND = "cython"

__all__ = ["BACKEND", "loss_and_grads", "features"]
