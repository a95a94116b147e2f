"""Arithmetic kernels with a compiled core and a pure-Python fallback.

The compiled GMP-backed module is used when it imports; set
``AERISAI_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

from . import _purepy


def load_backend(name: str) -> ModuleType:
    """Return the kernel module called ``name`` ("native" or "python")."""
    if name == "python":
        return _purepy
    if name == "native":
        return importlib.import_module("aerisai._native._kernels")
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        load_backend("native")
    except ImportError:
        pass
    else:
        names.insert(0, "native")
    return names


def _select() -> ModuleType:
    if os.environ.get("AERISAI_PURE_PYTHON"):
        return _purepy
    try:
        return load_backend("native")
    except ImportError:
        return _purepy


kernels = _select()
BACKEND = kernels.NAME

__all__ = ["BACKEND", "available_backends", "kernels", "load_backend"]
