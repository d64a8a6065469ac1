"""Backend switch for the hot kernels.

Set ``COTFLOW_PURE_NUMPY=1`` to force the vectorised numpy implementations even
when numba is importable. The flag is read once at import time; tests flip the
module-level ``USE_NUMBA`` directly.
"""
import os

try:
    import numba  # noqa: F401
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep in pyproject
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAS_NUMBA and not _env_flag("COTFLOW_PURE_NUMPY")


def backend():
    return "numba" if USE_NUMBA else "numpy"


def set_backend(name):
    """Switch kernels between ``"numba"`` and ``"numpy"`` at runtime."""
    global USE_NUMBA
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    USE_NUMBA = name == "numba"
