"""Kernel backend selection.

The compiled extension is used when it imports; set ``DELAYDTP_PURE=1`` to
force the pure-Python kernels.
"""
import os

from . import _fallback

if os.environ.get("DELAYDTP_PURE"):
    kernels = _fallback
    NAME = "python"
else:
    try:
        from . import _kernels as kernels
        NAME = "cython"
    except ImportError:
        kernels = _fallback
        NAME = "python"


def get(name=None):
    """Return the kernel module by name (``"cython"`` or ``"python"``)."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
