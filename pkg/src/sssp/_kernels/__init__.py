"""Render kernel backend selection.

Prefers the compiled Cython extension; falls back to the numpy reference
when the extension is missing or SSSP_KERNEL=fallback is set. Both expose
the same two functions: sample_triplane and composite_rays.
"""

from __future__ import annotations

import os

from . import fallback

__all__ = ["sample_triplane", "composite_rays", "BACKEND", "get_backend", "available_backends"]

_BACKENDS = {"fallback": fallback}

try:  # pragma: no cover - depends on the build environment
    from . import _render  # type: ignore[attr-defined]

    _BACKENDS["cython"] = _render
except ImportError:  # pragma: no cover
    _render = None

if os.environ.get("SSSP_KERNEL", "").lower() == "fallback" or "cython" not in _BACKENDS:
    BACKEND = "fallback"
else:
    BACKEND = "cython"

_active = _BACKENDS[BACKEND]
sample_triplane = _active.sample_triplane
composite_rays = _active.composite_rays


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str):
    """Return the module implementing the kernels for an explicit backend."""
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}") from None
