"""Pure numpy versions of the compiled kernels."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def tridiag_solve(sub: np.ndarray, diag: np.ndarray, sup: np.ndarray,
                  rhs: np.ndarray) -> np.ndarray:
    ab = np.zeros((3, len(diag)))
    ab[0, 1:] = sup
    ab[1] = diag
    ab[2, :-1] = sub
    return solve_banded((1, 1), ab, rhs)


def fv_apply(t: np.ndarray, mass: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``mass*u`` plus the divergence of the face fluxes ``t*(u[m+1]-u[m])``."""
    y = mass * u
    fl = t * np.diff(u)
    y[:-1] -= fl
    y[1:] += fl
    return y


def pair_table(lam: np.ndarray, pts: np.ndarray, n: int):
    """Pairwise interaction data for bubbles with the squared-distance kernel.

    Returns ``eps``, ``lam_deps`` with entries ``lam_i d eps_ij / d lam_i``
    and ``coef`` with ``(1/lam_i) grad_{a_i} eps_ij = coef_ij (a_i - a_j)``.
    Diagonals are zero.
    """
    lam = np.asarray(lam, dtype=float)
    pts = np.asarray(pts, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    kap = np.einsum("ijk,ijk->ij", diff, diff)
    li = lam[:, None]
    lj = lam[None, :]
    D = li / lj + lj / li + li * lj * kap
    eps = D ** (0.5 * (2 - n))
    h = 0.5 * (2 - n) * eps / D
    lam_deps = h * (li / lj - lj / li + li * lj * kap)
    coef = 2.0 * h * lj
    np.fill_diagonal(eps, 0.0)
    np.fill_diagonal(lam_deps, 0.0)
    np.fill_diagonal(coef, 0.0)
    return eps, lam_deps, coef
