"""Kernel backend selection.

The compiled Cython extension is used when it imports; otherwise the numpy
fallback. Set ``CRABCHIP_BACKEND=python`` to force the fallback.
"""

import importlib
import logging
import os

log = logging.getLogger(__name__)

_MODULES = {"cython": "crabchip._kernels", "python": "crabchip._kernels_py"}


def load(name: str):
    """Import a specific backend by name; raises ImportError if unavailable."""
    try:
        return importlib.import_module(_MODULES[name])
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_MODULES)}") from None


def available() -> list[str]:
    names = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    requested = os.environ.get("CRABCHIP_BACKEND", "").strip().lower()
    if requested:
        return requested, load(requested)
    try:
        return "cython", load("cython")
    except ImportError:
        log.warning("compiled kernels unavailable; using the slow numpy fallback")
        return "python", load("python")


BACKEND, kernels = _select()
