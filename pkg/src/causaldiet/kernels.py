"""Numeric kernels with a compiled fast path.

The Cython build (``_ckernels``) is used when importable; otherwise the
pure-Python module is used. Set ``CAUSALDIET_KERNELS=python`` to force the
fallback.
"""
import os

from causaldiet import _pykernels

if os.environ.get("CAUSALDIET_KERNELS", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from causaldiet import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

rolling_mean = _impl.rolling_mean
rolling_std = _impl.rolling_std
positive_trapezoid = _impl.positive_trapezoid
smoothed_positive_area = _impl.smoothed_positive_area
simple_paths_to = _impl.simple_paths_to

__all__ = [
    "BACKEND",
    "rolling_mean",
    "rolling_std",
    "positive_trapezoid",
    "smoothed_positive_area",
    "simple_paths_to",
]
