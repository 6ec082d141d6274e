"""Selects the compiled kernels when importable, else the numpy fallback.

>>> from oceanchl import _backend
>>> _backend.name()  # doctest: +SKIP
'compiled'
"""
from __future__ import annotations

from contextlib import contextmanager
from types import ModuleType

from . import _kernels_py
from .errors import ArgumentError, StateError

try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

_active: ModuleType = _compiled if _compiled is not None else _kernels_py


def kernels() -> ModuleType:
    return _active


def name() -> str:
    return _active.BACKEND_NAME


def available() -> list[str]:
    return ["python"] + (["compiled"] if _compiled is not None else [])


def set_backend(which: str) -> None:
    global _active
    if which == "python":
        _active = _kernels_py
    elif which == "compiled":
        if _compiled is None:
            raise StateError("compiled kernels are not built")
        _active = _compiled
    else:
        raise ArgumentError(f"unknown backend {which!r}")


@contextmanager
def use(which: str):
    previous = name()
    set_backend(which)
    try:
        yield
    finally:
        set_backend(previous)
