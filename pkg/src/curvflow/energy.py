"""The functional J on rotationally symmetric conformal factors of S^n.

Discretization: a finite-volume form of the conformal Laplacian.  Each
grid node owns the cell between the midpoints of its neighbours (the
poles close the first and last cells), weights are exact cell integrals
of ``omega_{n-1} sin^(n-1)``, and

    E(u) = c_n sum_faces s_f (u_{m+1} - u_m)^2 / h_f + n(n-1) sum_m w_m u_m^2

is the discrete ``int L u u``.  Writing ``E(u) = u^T A u`` with A symmetric
tridiagonal, the curvature is ``R = (A u) / (w u^((n+2)/(n-2)))`` so that
``r = sum w R u^(2n/(n-2)) = E(u)`` holds exactly and J, dJ, d^2J are the
exact derivatives of one discrete functional.  The pole faces carry zero
area, which is the discrete form of ``u'(0) = u'(pi) = 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels
from .constants import sphere_area
from .geometry import KSpec


class DomainError(ValueError):
    """A conformal factor is not strictly positive."""


def c_n(n: int) -> float:
    return 4.0 * (n - 1) / (n - 2)


_GL16 = np.polynomial.legendre.leggauss(16)


def _cell_sin_power(k: int, faces: np.ndarray) -> np.ndarray:
    """``int sin^k`` over each cell by 16-point Gauss-Legendre.

    Closed-form antiderivatives cancel catastrophically on the tiny cells
    next to the poles; per-cell quadrature is accurate to roundoff there
    and exact enough (error below 1e-16 relative) on cells up to pi/3.
    """
    x, w = _GL16
    a, b = faces[:-1, None], faces[1:, None]
    h = 0.5 * (b - a)
    return np.sum(w * np.sin(a + h * (x + 1.0)) ** k, axis=1) * h[:, 0]


class PolarGrid:
    """Cell-centered polar grid with exact cell volumes on S^n."""

    def __init__(self, dim: int, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size < 3:
            raise ValueError("need at least three grid points")
        if not (theta[0] > 0 and theta[-1] < math.pi and np.all(np.diff(theta) > 0)):
            raise ValueError("grid must be strictly increasing inside (0, pi)")
        if dim not in (3, 4, 5):
            raise ValueError("dimension must be 3, 4 or 5")
        self.dim = dim
        self.theta = theta
        self.theta.setflags(write=False)
        faces = np.empty(theta.size + 1)
        faces[0] = 0.0
        faces[-1] = math.pi
        faces[1:-1] = 0.5 * (theta[1:] + theta[:-1])
        self.faces = faces
        om = sphere_area(dim - 1)
        self.weights = om * _cell_sin_power(dim - 1, faces)
        self.face_area = om * np.sin(faces[1:-1]) ** (dim - 1)
        self.spacing = np.diff(theta)
        n = dim
        t = c_n(n) * self.face_area / self.spacing
        self.face_coef = t
        self.mass = n * (n - 1) * self.weights
        self.A_off = -t
        self.A_diag = n * (n - 1) * self.weights
        self.A_diag[:-1] += t
        self.A_diag[1:] += t

    @classmethod
    def uniform(cls, dim: int, size: int) -> "PolarGrid":
        return cls(dim, (np.arange(size) + 0.5) * math.pi / size)

    @classmethod
    def clustered(cls, dim: int, size: int, strength: float = 4.0) -> "PolarGrid":
        """Cells refined toward both poles through a sinh-type map."""
        s = (np.arange(size) + 0.5) / size * 2.0 - 1.0
        x = np.arcsinh(math.sinh(strength) * s) / strength
        return cls(dim, 0.5 * math.pi * (x + 1.0))

    @property
    def size(self) -> int:
        return self.theta.size

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    def apply_A(self, u: np.ndarray) -> np.ndarray:
        return kernels.fv_apply(self.face_coef, self.mass, u)

    def form(self, u: np.ndarray, v: np.ndarray) -> float:
        """Discrete ``int L_{g0} u v``."""
        return float(v @ self.apply_A(u))

    # smooth finite-difference operators, used for diagnostics only
    def d1(self, f: np.ndarray) -> np.ndarray:
        """Nonuniform central first derivative; even reflection at the poles."""
        th = np.concatenate([[-self.theta[0]], self.theta, [2 * math.pi - self.theta[-1]]])
        ff = np.concatenate([[f[0]], f, [f[-1]]])
        hm = th[1:-1] - th[:-2]
        hp = th[2:] - th[1:-1]
        return (hm ** 2 * ff[2:] - hp ** 2 * ff[:-2] + (hp ** 2 - hm ** 2) * ff[1:-1]) / (hm * hp * (hm + hp))

    def d2(self, f: np.ndarray) -> np.ndarray:
        th = np.concatenate([[-self.theta[0]], self.theta, [2 * math.pi - self.theta[-1]]])
        ff = np.concatenate([[f[0]], f, [f[-1]]])
        hm = th[1:-1] - th[:-2]
        hp = th[2:] - th[1:-1]
        return 2.0 * (hm * ff[2:] - (hm + hp) * ff[1:-1] + hp * ff[:-2]) / (hm * hp * (hm + hp))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        """``f'' + (n-1) cot(theta) f'`` by finite differences."""
        return self.d2(f) + (self.dim - 1) / np.tan(self.theta) * self.d1(f)

    def ambient_points(self) -> np.ndarray:
        """Points ``(sin t, 0, ..., 0, cos t)`` of S^n in R^(n+1)."""
        X = np.zeros((self.size, self.dim + 1))
        X[:, 0] = np.sin(self.theta)
        X[:, -1] = np.cos(self.theta)
        return X


@dataclass(frozen=True)
class ScalarField:
    grid: PolarGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError("values do not match the grid")
        if not np.all(np.isfinite(v)):
            raise DomainError("conformal factor has non-finite values")
        if np.any(v <= 0):
            raise DomainError("conformal factor must be strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def theta(self) -> np.ndarray:
        return self.grid.theta

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def to_csv(self, path: str | Path) -> None:
        from .io import atomic_write_text
        lines = ["theta,u"] + [f"{t:.17g},{u:.17g}" for t, u in zip(self.theta, self.values)]
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path, dim: int) -> "ScalarField":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [h.strip() for h in rows[0]] != ["theta", "u"]:
            raise ValueError("field CSV must have header 'theta,u'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls(PolarGrid(dim, data[:, 0]), data[:, 1])


def k_values(K: KSpec | float | np.ndarray, grid: PolarGrid) -> np.ndarray:
    """K sampled on the grid; a KSpec must depend on the polar angle only."""
    if isinstance(K, KSpec):
        if K.is_constant:
            vals = np.full(grid.size, float(K.coeffs.sum()))
        else:
            X = grid.ambient_points()
            vals = K.value(X)
            # rotate the meridian to check rotational symmetry
            Y = X.copy()
            Y[:, [0, 1]] = Y[:, [1, 0]]
            if not np.allclose(K.value(Y), vals, rtol=1e-12, atol=1e-12):
                raise ValueError("K is not rotationally symmetric about the polar axis")
    else:
        vals = np.broadcast_to(np.asarray(K, dtype=float), (grid.size,)).copy()
    if np.any(vals <= 0):
        raise ValueError("K must be positive")
    return vals


@dataclass
class CurvatureData:
    R: np.ndarray
    r: float
    k: float
    J: float
    deltaJ: float
    K: np.ndarray = field(repr=False)


def _exponents(n: int):
    return (n + 2) / (n - 2), 2 * n / (n - 2), 4 / (n - 2), (n - 2) / n


def curvature(f: ScalarField, K) -> CurvatureData:
    """Scalar curvature of ``u^(4/(n-2)) g0`` with r, k, J and |dJ|."""
    n = f.dim
    p, crit, _, q = _exponents(n)
    u = f.values
    w = f.weights
    Kv = k_values(K, f.grid)
    Au = f.grid.apply_A(u)
    R = Au / (w * u ** p)
    r = float(u @ Au)
    k = float(np.sum(w * Kv * u ** crit))
    J = r / k ** q
    dev = R - r * Kv / k
    dJ = 2.0 / k ** q * math.sqrt(float(np.sum(w * dev * dev * u ** crit)))
    return CurvatureData(R, r, k, J, dJ, Kv)


def J_value(f: ScalarField, K) -> float:
    n = f.dim
    u = f.values
    r = f.grid.form(u, u)
    k = float(np.sum(f.weights * k_values(K, f.grid) * u ** (2 * n / (n - 2))))
    return r / k ** ((n - 2) / n)


def first_variation(f: ScalarField, K, v: np.ndarray) -> float:
    """Full derivative ``dJ(u) v``."""
    n = f.dim
    p, crit, _, q = _exponents(n)
    u = f.values
    w = f.weights
    Kv = k_values(K, f.grid)
    Au = f.grid.apply_A(u)
    r = float(u @ Au)
    k = float(np.sum(w * Kv * u ** crit))
    v = np.asarray(v, dtype=float)
    return 2.0 / k ** q * (float(Au @ v) - r / k * float(np.sum(w * Kv * u ** p * v)))


def second_variation(f: ScalarField, K, v: np.ndarray, w_: np.ndarray) -> float:
    """Full second derivative ``d^2 J(u)(v, w)``."""
    n = f.dim
    p, crit, e4, q = _exponents(n)
    u = f.values
    wt = f.weights
    Kv = k_values(K, f.grid)
    Au = f.grid.apply_A(u)
    r = float(u @ Au)
    k = float(np.sum(wt * Kv * u ** crit))
    v = np.asarray(v, dtype=float)
    w_ = np.asarray(w_, dtype=float)
    Luv = float(Au @ v)
    Luw = float(Au @ w_)
    Lvw = 0.5 * (f.grid.form(v, w_) + f.grid.form(w_, v))
    Sv = float(np.sum(wt * Kv * u ** p * v))
    Sw = float(np.sum(wt * Kv * u ** p * w_))
    T = float(np.sum(wt * Kv * u ** e4 * v * w_))
    half = (k ** -q * (Lvw - p * r / k * T)
            - 2.0 * k ** (-q - 1) * (Luv * Sw + Luw * Sv)
            + 4.0 * (n - 1) / (n - 2) * r * k ** (-q - 2) * Sv * Sw)
    return 2.0 * half


def normalize(f: ScalarField, K) -> ScalarField:
    """Rescale so that ``k = int K u^(2n/(n-2)) = 1``."""
    n = f.dim
    k = float(np.sum(f.weights * k_values(K, f.grid) * f.values ** (2 * n / (n - 2))))
    return f.with_values(f.values * k ** (-(n - 2) / (2 * n)))


def yamabe_sphere(n: int) -> float:
    return n * (n - 1) * sphere_area(n) ** (2 / n)
