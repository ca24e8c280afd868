"""Backend selection for the sampler's hot kernels.

The compiled extension is used when it imported cleanly; set
``NNMIX_BACKEND=python`` to force the pure-numpy fallback.  Both backends
expose the same functions (``tl_update``, ``o_update``, ``pair_loglik_sum``,
``transform_arrays``) and consume pre-drawn uniforms, so chains are
reproducible within a backend.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build environment
    _kernels = None

_FORCED = os.environ.get("NNMIX_BACKEND", "").strip().lower()

if _FORCED == "python" or _kernels is None:
    active = _kernels_py
elif _FORCED in ("", "compiled", "c"):
    active = _kernels
else:
    raise ValueError(f"unknown NNMIX_BACKEND value {_FORCED!r}")


def get(name=None):
    """Return a kernel backend module: None/'active', 'python' or 'compiled'."""
    if name is None or name == "active":
        return active
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _kernels is None:
            raise RuntimeError("compiled kernels are not available")
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def backend_name() -> str:
    return active.BACKEND


def available_backends():
    out = ["python"]
    if _kernels is not None:
        out.append("compiled")
    return out
