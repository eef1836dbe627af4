"""Kernel backend selection.

The compiled extension is used when importable; ``KISING_BACKEND=python``
forces the pure-Python fallback.
"""
import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled


def _select():
    wanted = os.environ.get("KISING_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in BACKENDS:
            raise ImportError(f"KISING_BACKEND={wanted!r} is not available; have {sorted(BACKENDS)}")
        return wanted
    return "compiled" if "compiled" in BACKENDS else "python"


DEFAULT = _select()


def get(name=None):
    """Return the kernel module called ``name`` (default: the selected one)."""
    return BACKENDS[name or DEFAULT]
