"""Kernel backend selection.

Set LATMMI_BACKEND=numpy to force the pure-numpy kernels, or
LATMMI_BACKEND=numba to require the jit backend (import error if numba is
missing).  Unset, numba is used when available.  Both backends accumulate
in the same canonical arc order; see benchmarks/bench_kernels.py for a
side-by-side timing.
"""

from __future__ import annotations

import os

_requested = os.environ.get("LATMMI_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(f"LATMMI_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    from . import reference as _impl
elif _requested == "numba":
    from . import jit as _impl
else:
    try:
        from . import jit as _impl
    except ImportError:
        from . import reference as _impl

BACKEND = _impl.BACKEND
forward_fill = _impl.forward_fill
backward_fill = _impl.backward_fill
viterbi_fill = _impl.viterbi_fill
occupancy_fill = _impl.occupancy_fill
sample_steps = _impl.sample_steps

__all__ = [
    "BACKEND",
    "forward_fill",
    "backward_fill",
    "viterbi_fill",
    "occupancy_fill",
    "sample_steps",
]
