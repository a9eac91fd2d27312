"""Hot-loop kernels: compiled extension when available, numpy fallback otherwise.

Set ``TWOSTREAM_REID_PURE_PYTHON=1`` to force the fallback (used by the
parity tests and the backend benchmark).
"""

import os

from . import reference

if os.environ.get("TWOSTREAM_REID_PURE_PYTHON"):
    _impl = reference
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = reference

BACKEND = _impl.BACKEND
im2col3 = _impl.im2col3
col2im3 = _impl.col2im3
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward

__all__ = [
    "BACKEND",
    "im2col3",
    "col2im3",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
    "reference",
]
