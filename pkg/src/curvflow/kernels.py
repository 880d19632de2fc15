"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when
``CURVFLOW_PURE_PYTHON=1`` is set, the numpy versions are used.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("CURVFLOW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:
        pass


def _c(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def tridiag_solve(sub, diag, sup, rhs) -> np.ndarray:
    return _impl.tridiag_solve(_c(sub), _c(diag), _c(sup), _c(rhs))


def fv_apply(t, mass, u) -> np.ndarray:
    return _impl.fv_apply(_c(t), _c(mass), _c(u))


def pair_table(lam, pts, n: int):
    return _impl.pair_table(_c(lam), _c(np.atleast_2d(pts)), int(n))
