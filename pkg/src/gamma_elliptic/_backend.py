"""Kernel backend selection: compiled extension if importable, numpy otherwise.

Set GAMMA_ELLIPTIC_FORCE_PYTHON=1 to skip the extension, or call
``select_backend`` at runtime (used by the comparison benchmark and tests).
"""

import os

from . import _kernels_py

_BACKENDS = {"python": _kernels_py}

if not os.environ.get("GAMMA_ELLIPTIC_FORCE_PYTHON"):
    try:
        from . import _kernels  # compiled extension, built by setup.py

        _BACKENDS["compiled"] = _kernels
    except ImportError:
        pass

_active = _BACKENDS.get("compiled", _kernels_py)


def available_backends():
    return sorted(_BACKENDS)


def active_backend_name() -> str:
    return _active.BACKEND_NAME


def get_kernels():
    return _active


def select_backend(name: str):
    """Switch the active kernel backend ('python' or 'compiled')."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    _active = _BACKENDS[name]
    return _active
