"""Kernel backend selection: compiled extension when available, numpy otherwise.

Set SSPE_TUNER_PURE=1 to force the numpy fallback (used by the benchmark and
the backend-equivalence tests).
"""

import os

if os.environ.get("SSPE_TUNER_PURE", "0") not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

BACKEND_NAME: str = _impl.BACKEND_NAME
forward_batch = _impl.forward_batch
loss_grads = _impl.loss_grads
