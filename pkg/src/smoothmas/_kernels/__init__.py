"""Selection between the compiled smoothing kernel and the pure-Python path.

The compiled module is optional; when it failed to build (or is disabled via
SMOOTHMAS_BACKEND=pure) callers get None from `fast()` and run the generic
Python implementation instead. Both paths are bit-identical by contract and
tested as such.
"""

from __future__ import annotations

import os

try:
    from . import _fast
except ImportError:  # pragma: no cover - depends on build environment
    _fast = None  # type: ignore[assignment]

_VALID = ("auto", "fast", "pure")
_mode = os.environ.get("SMOOTHMAS_BACKEND", "auto")
if _mode not in _VALID:
    _mode = "auto"


def use_backend(mode: str) -> None:
    """Force 'fast' or 'pure', or restore 'auto'. Raises if 'fast' is absent."""
    if mode not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {mode!r}")
    if mode == "fast" and _fast is None:
        raise RuntimeError("compiled kernel is not available in this build")
    global _mode
    _mode = mode


def active_backend() -> str:
    if _mode == "pure" or _fast is None:
        return "pure"
    return "fast"


def fast():
    """The compiled module, or None when the pure path should be used."""
    return _fast if active_backend() == "fast" else None
