"""Engine selection.

Two interchangeable engines implement the same cycle loop: ``py`` (the
reference implementation, always available) and ``native`` (the compiled
kernel, present when the extension was built).  ``auto`` picks native
when it exists.  Both produce bit-identical results for the same spec;
the test suite enforces it.
"""
from __future__ import annotations

from .common import EngineSpec, build_spec  # noqa: F401  (re-export)
from .pyengine import PyEngine


def _native_class():
    try:
        from . import _kernel
    except ImportError:
        return None
    return _kernel.NativeEngine


def available_engines() -> list:
    names = ["py"]
    if _native_class() is not None:
        names.append("native")
    return names


def create_engine(spec: EngineSpec, name: str = "auto"):
    if name == "auto":
        cls = _native_class()
        return cls(spec) if cls is not None else PyEngine(spec)
    if name == "py":
        return PyEngine(spec)
    if name == "native":
        cls = _native_class()
        if cls is None:
            raise RuntimeError(
                "native engine requested but the compiled kernel is not "
                "available; build it with: python3 setup.py build_ext --inplace")
        return cls(spec)
    raise ValueError(f"unknown engine {name!r} (use auto, py or native)")
