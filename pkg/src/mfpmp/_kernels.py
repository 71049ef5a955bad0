"""Kernel backend selection.

The compiled extension is used when it imports; otherwise (or when
``MFPMP_PURE_PYTHON=1``) the numpy fallback takes over. The thread count
applies to the compiled backend only and never changes results.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

_impl = _pykernels
BACKEND = "python"
if os.environ.get("MFPMP_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        pass

_threads = 1


def set_num_threads(n: int) -> None:
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_num_threads() -> int:
    return _threads


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def covector_pair_average(psi, G):
    return _impl.covector_pair_average(_c(psi), _c(G), _threads)


def vector_pair_average(G, y):
    return _impl.vector_pair_average(_c(G), _c(y), _threads)


def pair_average(g):
    return _impl.pair_average(_c(g), _threads)


def linear_assignment(cost):
    return np.asarray(_impl.linear_assignment(_c(cost)), dtype=np.intp)
