"""Selection between the compiled DP kernels and the numpy fallback.

The compiled extension is used automatically when it was built; the
``MIMLA_BACKEND`` environment variable (``auto``, ``compiled``, ``python``)
overrides at import time, and :func:`select` switches at runtime (used by
the backend-comparison benchmark and the test suite).
"""
from __future__ import annotations

import os

from . import _dp_python
from .errors import ContractViolation

try:
    from . import _dp_core as _compiled
except ImportError:  # extension not built; the numpy kernels take over
    _compiled = None

_BACKENDS = {"python": _dp_python}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available() -> list[str]:
    """Names of the usable backends, fastest first."""
    return (["compiled"] if _compiled is not None else []) + ["python"]


def resolve(name: str):
    """The kernel module for ``name`` ('auto' picks the fastest available)."""
    if name == "auto":
        return _compiled if _compiled is not None else _dp_python
    try:
        return _BACKENDS[name]
    except KeyError:
        if name == "compiled":
            raise ContractViolation(
                "compiled backend requested but the extension is not built"
            ) from None
        raise ContractViolation(f"unknown backend {name!r}") from None


def name_of(module) -> str:
    return "compiled" if module is _compiled else "python"


_active = resolve(os.environ.get("MIMLA_BACKEND", "auto"))


def active():
    """The kernel module every high-level entry point dispatches through."""
    return _active


def select(name: str):
    """Switch the process-wide backend; returns the previous module."""
    global _active
    previous = _active
    _active = resolve(name)
    return previous
