"""Kernel backend chosen at import.

The compiled ``_ckernels`` module is used when it was built; set
``GLAUBERSPEC_BACKEND=python`` to force the pure-Python twins.
"""
import importlib
import os

_forced = os.environ.get("GLAUBERSPEC_BACKEND", "").lower()

if _forced == "python":
    from glauberspec import _pykernels as kernels
    BACKEND = "python"
else:
    try:
        from glauberspec import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        from glauberspec import _pykernels as kernels
        BACKEND = "python"


def load(name: str):
    """Return the kernel module for ``name`` in {"cython", "python"}."""
    module = {"cython": "_ckernels", "python": "_pykernels"}[name]
    return importlib.import_module(f"glauberspec.{module}")


def available() -> list[str]:
    names = ["python"]
    try:
        load("cython")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names
