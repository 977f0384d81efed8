"""Backend selection for the hot loops.

The compiled extension is used when importable; set ``LATENT_STEER_PURE=1``
to force the pure-Python implementation.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

KERNEL_NAMES = ("tanimoto_rows", "tanimoto_pairs", "smr_rows", "joint_histogram", "jacobi_eigh")


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ("compiled" or "python")."""
    if name is None:
        name = "python" if os.environ.get("LATENT_STEER_PURE") == "1" or _ckernels is None else "compiled"
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


_backend = get_backend()
BACKEND = "compiled" if _backend is _ckernels else "python"

tanimoto_rows = _backend.tanimoto_rows
tanimoto_pairs = _backend.tanimoto_pairs
smr_rows = _backend.smr_rows
joint_histogram = _backend.joint_histogram
jacobi_eigh = _backend.jacobi_eigh
