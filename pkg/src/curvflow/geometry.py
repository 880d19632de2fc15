"""Model spaces, polynomial curvature functions and the Cond_n checks.

Two backends are supported.  ``flat`` works in a single chart of R^n
whose coordinates are taken as conformal normal coordinates.  ``sphere``
works on the unit sphere S^n in R^(n+1); derivatives there are taken in
the scaled stereographic chart centered at the point, which is flat to
all orders after the conformal change and agrees with the round metric
to first order at the center.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import qmc

BACKENDS = ("flat", "sphere")


@dataclass(frozen=True)
class ModelSpace:
    dim: int
    backend: str = "flat"
    mass: float = 0.0

    def __post_init__(self):
        if self.dim not in (3, 4, 5):
            raise ValueError(f"dimension must be 3, 4 or 5, got {self.dim}")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.mass < 0:
            raise ValueError("mass must be nonnegative")

    @property
    def ambient_dim(self) -> int:
        """Number of coordinates used to store a point."""
        return self.dim + (self.backend == "sphere")


class KSpec:
    """Polynomial curvature function with exact derivatives up to order 3."""

    def __init__(self, coeffs: Sequence[float], powers: Sequence[Sequence[int]] | None,
                 nvars: int | None = None):
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        if powers is None or len(self.coeffs) == 0:
            self.powers = np.zeros((len(self.coeffs), nvars or 0), dtype=int)
        else:
            self.powers = np.asarray(powers, dtype=int)
        if self.powers.ndim != 2 or len(self.powers) != len(self.coeffs):
            raise ValueError("powers must be a list of equal-length integer lists")
        if np.any(self.powers < 0):
            raise ValueError("powers must be nonnegative")
        self.nvars = self.powers.shape[1] if nvars is None else nvars
        if self.powers.shape[1] not in (0, self.nvars):
            raise ValueError("powers length does not match nvars")
        if self.powers.shape[1] == 0:
            self.powers = np.zeros((len(self.coeffs), self.nvars), dtype=int)

    @classmethod
    def constant(cls, value: float, nvars: int = 0) -> "KSpec":
        return cls([value], None, nvars=nvars)

    @classmethod
    def from_json(cls, obj: dict[str, Any], nvars: int | None = None) -> "KSpec":
        kind = obj.get("kind")
        if kind == "constant":
            return cls.constant(float(obj["value"]), nvars or 0)
        if kind == "polynomial":
            mons = obj.get("monomials")
            if not mons:
                raise ValueError("polynomial KSpec needs a nonempty 'monomials' list")
            return cls([m["coeff"] for m in mons], [m["powers"] for m in mons])
        raise ValueError(f"unknown KSpec kind {kind!r}")

    def to_json(self) -> dict[str, Any]:
        if self.is_constant:
            return {"kind": "constant", "value": float(self.coeffs.sum())}
        return {"kind": "polynomial",
                "monomials": [{"coeff": float(c), "powers": [int(q) for q in p]}
                              for c, p in zip(self.coeffs, self.powers)]}

    @property
    def is_constant(self) -> bool:
        c = self.__dict__.get("_const")
        if c is None:
            c = self.__dict__["_const"] = bool(np.all(self.powers == 0))
        return c

    def scaled(self, s: float) -> "KSpec":
        return KSpec(s * self.coeffs, self.powers, self.nvars)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return x
        if x.shape[-1] != self.nvars:
            raise ValueError(f"KSpec has {self.nvars} variables, got points of "
                             f"dimension {x.shape[-1]}")
        return x

    def derivative(self, x: np.ndarray, index: tuple[int, ...] = ()) -> np.ndarray:
        """Partial derivative ``d^k K / dx_index`` at points ``x`` (..., m)."""
        x = self._check(x)
        c = self.coeffs.copy()
        p = self.powers.copy()
        for j in index:
            c = c * p[:, j]
            p[:, j] = np.maximum(p[:, j] - 1, 0)
        keep = c != 0
        if not keep.any():
            return np.zeros(x.shape[:-1])
        c, p = c[keep], p[keep]
        if p.shape[1] == 0 or not p.any():
            return np.full(x.shape[:-1], c.sum())
        # (..., M) monomial values
        mon = np.prod(x[..., None, :] ** p, axis=-1)
        return mon @ c

    def value(self, x):
        return self.derivative(x)

    def _table(self, order: int):
        """Coefficients and powers of all order-k partials, flattened over
        the index tuples in C order; cached per order."""
        cache = self.__dict__.setdefault("_tables", {})
        if order not in cache:
            m = self.nvars
            idx = np.array(list(itertools.product(range(m), repeat=order)),
                           dtype=int).reshape(-1, order)
            cnt = np.zeros((len(idx), m), dtype=int)
            for q in range(order):
                np.add.at(cnt, (np.arange(len(idx)), idx[:, q]), 1)
            P = self.powers[None, :, :]
            C = cnt[:, None, :]
            fac = np.ones((len(idx), len(self.coeffs)))
            for k in range(order):
                fac = fac * np.prod(np.where(C > k, np.maximum(P - k, 0), 1), axis=-1)
            coef = fac * self.coeffs[None, :]
            cache[order] = (coef, np.maximum(P - C, 0))
        return cache[order]

    def _partials(self, x, order: int) -> np.ndarray:
        x = self._check(x)
        m = self.nvars
        shape = np.shape(x)[:-1] + (m,) * order
        if self.is_constant:
            val = float(self.coeffs.sum()) if order == 0 else 0.0
            return np.full(shape, val)
        coef, pw = self._table(order)
        mon = np.prod(x[..., None, None, :] ** pw, axis=-1)
        return np.sum(mon * coef, axis=-1).reshape(shape)

    def grad(self, x):
        return self._partials(x, 1)

    def hessian(self, x):
        return self._partials(x, 2)

    def third(self, x):
        return self._partials(x, 3)


def tangent_basis(a: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space at ``a`` in S^n, shape (n+1, n).

    Built from the Householder reflection sending the last axis to ``a``.
    """
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    e = np.zeros(m)
    e[-1] = 1.0
    v = a - e
    nv = v @ v
    H = np.eye(m)
    if nv > 1e-28:
        H -= 2.0 * np.outer(v, v) / nv
    return H[:, :-1]


def chart_point(a: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Inverse scaled stereographic chart of S^n centered at ``a``."""
    E = tangent_basis(a)
    z = np.asarray(z, dtype=float)
    s = 0.25 * np.sum(z * z, axis=-1, keepdims=True)
    return ((1.0 - s) * a + z @ E.T) / (1.0 + s)


@dataclass
class ChartDerivs:
    """K and its chart derivatives at a batch of points."""

    K: np.ndarray
    grad: np.ndarray
    lap: np.ndarray
    grad_lap: np.ndarray
    hess: np.ndarray | None = None


def kspec_eval(K: KSpec, points: np.ndarray, space: ModelSpace,
               with_hessian: bool = False) -> ChartDerivs:
    """Evaluate ``K, grad K, Delta K, grad Delta K`` in the chart at each point.

    ``points`` has shape (p, ambient_dim).  Gradients have shape (p, dim).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = space.dim
    if pts.shape[1] != space.ambient_dim:
        raise ValueError(f"points must have {space.ambient_dim} coordinates")
    P = pts.shape[0]
    if K.is_constant:
        z = np.zeros((P, n))
        return ChartDerivs(K.value(pts), z, np.zeros(P), z.copy(),
                           np.zeros((P, n, n)) if with_hessian else None)
    val = K.value(pts)
    g = K.grad(pts)
    H = K.hessian(pts)
    T = K.third(pts)
    if space.backend == "flat":
        lap = np.trace(H, axis1=-2, axis2=-1)
        glap = np.einsum("piij->pj", T)
        return ChartDerivs(val, g, lap, glap, H if with_hessian else None)
    grad = np.empty((P, n))
    lap = np.empty(P)
    glap = np.empty((P, n))
    hess = np.empty((P, n, n)) if with_hessian else None
    for q in range(P):
        a = pts[q]
        E = tangent_basis(a)
        ag = a @ g[q]
        EHE = E.T @ H[q] @ E
        grad[q] = E.T @ g[q]
        lap[q] = -n * ag + np.trace(EHE)
        b = -0.25 * grad[q] - 0.5 * E.T @ (H[q] @ a)
        Tt = np.einsum("abc,ai,bj,ck->ijk", T[q], E, E, E)
        glap[q] = (2 * n + 4) * b + np.einsum("iij->j", Tt)
        if with_hessian:
            hess[q] = EHE - ag * np.eye(n)
    return ChartDerivs(val, grad, lap, glap, hess)


def green_kernel_sq(space: ModelSpace, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``gamma_n G^(2/(2-n))(a, b)``: squared Euclidean or chordal distance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a - b
    return np.sum(d * d, axis=-1)


def normalize_points(space: ModelSpace, pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if space.backend == "sphere":
        nrm = np.linalg.norm(pts, axis=1, keepdims=True)
        if np.any(nrm == 0):
            raise ValueError("zero vector is not a point of the sphere")
        pts = pts / nrm
    return pts


def move_point(space: ModelSpace, a: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Displace ``a`` by the chart vector ``z``."""
    if space.backend == "flat":
        return a + z
    return chart_point(a, z)


# ---------------------------------------------------------------------------
# critical points and the Cond_n checks

@dataclass
class CondReport:
    dim: int
    condition: str
    status: str
    margin: float | None
    witness: list[float] | None = None
    critical_points: list[list[float]] = field(default_factory=list)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> dict[str, Any]:
        m = self.margin
        if m is not None and not math.isfinite(m):
            m = None
        return {"dim": self.dim, "condition": self.condition, "status": self.status,
                "margin": m, "witness": self.witness,
                "critical_points": self.critical_points, "message": self.message}


def _seeds(space: ModelSpace, count: int, radius: float, seed: int) -> np.ndarray:
    m = space.ambient_dim
    sob = qmc.Sobol(d=m, scramble=True, seed=seed)
    u = sob.random(count)
    if space.backend == "flat":
        pts = radius * (2.0 * u - 1.0)
        return np.vstack([np.zeros(m), pts])
    # Gaussian images of the Sobol points give near-uniform sphere seeds
    from scipy.special import ndtri
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return normalize_points(space, g)


def _refine_critical(K: KSpec, space: ModelSpace, x0: np.ndarray, radius: float,
                     max_iter: int = 300, gtol: float = 1e-8):
    """Levenberg-Marquardt on ``grad K = 0`` in moving charts."""
    x = x0.copy()
    mu = 1e-3
    d = kspec_eval(K, x, space, with_hessian=True)
    g, H = d.grad[0], d.hess[0]
    f = g @ g
    for _ in range(max_iter):
        if math.sqrt(f) < gtol:
            return x, math.sqrt(f)
        A = H.T @ H
        rhs = -H.T @ g
        for _ in range(30):
            try:
                step = np.linalg.solve(A + mu * np.eye(len(g)), rhs)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            xn = move_point(space, x, step)
            if space.backend == "flat" and np.max(np.abs(xn)) > 2 * radius:
                mu *= 10
                continue
            dn = kspec_eval(K, xn, space, with_hessian=True)
            fn = dn.grad[0] @ dn.grad[0]
            if fn < f:
                x, g, H, f = xn, dn.grad[0], dn.hess[0], fn
                mu = max(mu / 3, 1e-12)
                break
            mu *= 10
        else:
            break
    return x, math.sqrt(f)


def critical_points(K: KSpec, space: ModelSpace, n_seeds: int = 64,
                    radius: float = 1.0, seed: int = 0, gtol: float = 1e-8,
                    merge: float = 1e-2) -> np.ndarray:
    """Critical points of K found by multistart descent on |grad K|^2."""
    found: list[np.ndarray] = []
    for x0 in _seeds(space, n_seeds, radius, seed):
        x, gn = _refine_critical(K, space, x0, radius, gtol=gtol)
        if gn >= gtol:
            continue
        if space.backend == "flat" and np.max(np.abs(x)) > radius:
            continue
        if all(np.linalg.norm(x - y) > merge for y in found):
            found.append(x)
    return np.array(found).reshape(-1, space.ambient_dim)


def _tube_samples(space: ModelSpace, centers: np.ndarray, radius: float,
                  count: int, seed: int) -> np.ndarray:
    n = space.dim
    sob = qmc.Sobol(d=n, scramble=True, seed=seed)
    u = 2.0 * sob.random(count) - 1.0
    u = u[np.sum(u * u, axis=1) <= 1.0] * radius
    out = []
    for c in centers:
        if space.backend == "flat":
            out.append(c + u)
        else:
            out.append(np.array([chart_point(c, z) for z in u]))
    return np.vstack(out)


def check_cond(K: KSpec, space: ModelSpace, *, prime: bool = False,
               spherical: bool = False, c4: float = 1e-3, tube: float = 0.1,
               n_seeds: int = 64, n_samples: int = 1024, radius: float = 1.0,
               seed: int = 0) -> CondReport:
    """Check Cond_n (or the primed variant) for K on the model space.

    ``spherical`` states whether the underlying manifold is conformally
    the round sphere; the dimension 3 condition reduces to that clause.
    ``c4`` is the constant in the dimension 4 condition.  Points are
    critical when ``|grad K| < 1e-8``.  With no critical point found the
    status is ``inconclusive``.
    """
    n = space.dim
    name = f"Cond_{n}" + ("'" if prime else "")
    if n == 3:
        margin = -1.0 if spherical else 1.0
        return CondReport(n, name, "pass" if margin > 0 else "fail", margin,
                          message="manifold clause")
    crit = critical_points(K, space, n_seeds=n_seeds, radius=radius, seed=seed)
    if len(crit) == 0:
        return CondReport(n, name, "inconclusive", None,
                          message="no critical point located")
    if prime:
        kv = K.value(crit)
        crit = crit[kv >= kv.max() - 1e-9 * max(1.0, abs(kv.max()))]
    cl = crit.tolist()
    if n == 4:
        d = kspec_eval(K, crit, space)
        vals = d.lap / d.K + c4
        i = int(np.argmin(vals))
        margin = float(vals[i])
        status = "pass" if margin > 0 and not spherical else "fail"
        return CondReport(n, name, status, margin, crit[i].tolist(), cl)
    # n == 5: the inequality is only required where Delta K < 0 near the set
    pts = _tube_samples(space, crit, tube, n_samples, seed)
    d = kspec_eval(K, pts, space)
    neg = d.lap < 0
    if not neg.any():
        status = "fail" if spherical else "pass"
        return CondReport(n, name, status, math.inf, None, cl,
                          message="Delta K >= 0 on the tube; condition vacuous")
    ratio = np.einsum("pi,pi->p", d.grad_lap[neg], d.grad[neg]) / d.lap[neg] ** 2
    i = int(np.argmin(ratio))
    margin = float(ratio[i] - 1.0 / 3.0)
    status = "pass" if margin > 0 and not spherical else "fail"
    return CondReport(n, name, status, margin, pts[neg][i].tolist(), cl)


def cond5_margin(K: KSpec, space: ModelSpace, points: np.ndarray,
                 gamma2: float, gamma3: float) -> float:
    """``min(-gamma2 + gamma3 <grad DK, grad K>/|DK|^2)`` over points with DK < 0."""
    d = kspec_eval(K, points, space)
    neg = d.lap < 0
    if not neg.any():
        return math.inf
    r = np.einsum("pi,pi->p", d.grad_lap[neg], d.grad[neg]) / d.lap[neg] ** 2
    return float(np.min(-gamma2 + gamma3 * r))
