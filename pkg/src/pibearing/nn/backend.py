"""Kernel backend selection.

The compiled extension is used when it was built; set
``PIBEARING_BACKEND=python`` to force the numpy kernels.
"""

import importlib
import os

from . import _kernels_py

_compiled = None
if os.environ.get("PIBEARING_BACKEND", "").lower() != "python":
    try:
        _compiled = importlib.import_module("pibearing.nn._kernels")
    except ImportError:
        _compiled = None

kernels = _compiled if _compiled is not None else _kernels_py
NAME = "cython" if _compiled is not None else "python"


def available():
    """Backends importable in this environment, keyed by name."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    else:
        try:
            out["cython"] = importlib.import_module("pibearing.nn._kernels")
        except ImportError:
            pass
    return out


def use(name: str) -> None:
    """Switch the active backend for subsequently executed layers."""
    global kernels, NAME
    backends = available()
    if name not in backends:
        raise ValueError(f"backend {name!r} not available; have {sorted(backends)}")
    kernels = backends[name]
    NAME = name
