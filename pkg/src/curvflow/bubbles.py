"""Bubbles, their derivative modes and pairwise interactions.

Flat backend:   phi = (lam / (1 + lam^2 |x - a|^2))^((n-2)/2).
Sphere backend: the conformal factor u_a with u_a(a) = 1 makes the metric
flat in the scaled stereographic chart; collapsed into one formula this
gives phi = (lam / (1 + (lam^2 - 1/4) c))^((n-2)/2) with c the squared
chordal distance to a.  Both are exact Yamabe bubbles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .constants import constants_table, sphere_area
from .geometry import ModelSpace, green_kernel_sq, tangent_basis
from .quadrature import gk_adaptive, gk_semi_infinite


class UnresolvedScaleError(ValueError):
    """The quadrature does not resolve the bubble scale."""


def _sq(space: ModelSpace, a, x):
    return green_kernel_sq(space, np.asarray(x, dtype=float), np.asarray(a, dtype=float))


def bubble_eval(space: ModelSpace, a, lam: float, x) -> np.ndarray:
    """Bubble centered at ``a`` with concentration ``lam`` at points ``x``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    q = 0.5 * (space.dim - 2)
    c = _sq(space, a, x)
    mu = lam * lam if space.backend == "flat" else lam * lam - 0.25
    return (lam / (1.0 + mu * c)) ** q


def bubble_derivs(space: ModelSpace, a, lam: float, x):
    """Return ``(phi1, phi2, phi3)``.

    ``phi1 = phi``, ``phi2 = -lam d(phi)/d(lam)`` and
    ``phi3 = (1/lam) grad_a phi`` in chart components, shape (..., n).
    """
    n = space.dim
    q = 0.5 * (n - 2)
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    c = _sq(space, a, x)
    phi = bubble_eval(space, a, lam, x)
    if space.backend == "flat":
        t = lam * lam * c
        phi2 = q * phi * (t - 1.0) / (t + 1.0)
        phi3 = ((n - 2) * lam * phi / (1.0 + t))[..., None] * (x - a)
        return phi, phi2, phi3
    mu = lam * lam - 0.25
    den = 1.0 + mu * c
    phi2 = q * phi * ((lam * lam + 0.25) * c - 1.0) / den
    E = tangent_basis(a)
    phi3 = (2.0 * q * mu * phi / (lam * den))[..., None] * (x @ E)
    return phi, phi2, phi3


def epsilon(space: ModelSpace, lam_i: float, a_i, lam_j: float, a_j) -> float:
    kap = float(_sq(space, a_i, a_j))
    D = lam_i / lam_j + lam_j / lam_i + lam_i * lam_j * kap
    return D ** (0.5 * (2 - space.dim))


def interaction_table(space: ModelSpace, lam, pts):
    """Pairwise ``eps_ij``, ``lam_i d_{lam_i} eps_ij`` and ``(1/lam_i) grad_{a_i} eps_ij``.

    The gradient array has shape (p, p, n) in chart components at a_i.
    """
    lam = np.asarray(lam, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    eps, lam_deps, coef = kernels.pair_table(lam, pts, space.dim)
    diff = pts[:, None, :] - pts[None, :, :]
    if space.backend == "flat":
        grad = coef[..., None] * diff
    else:
        p = len(lam)
        grad = np.empty((p, p, space.dim))
        for i in range(p):
            E = tangent_basis(pts[i])
            grad[i] = coef[i][:, None] * (diff[i] @ E)
    return eps, lam_deps, grad


def epsilon_derivs(space: ModelSpace, lam_i: float, a_i, lam_j: float, a_j):
    """``(lam_i d eps/d lam_i, (1/lam_i) grad_{a_i} eps)`` for one pair."""
    eps, ld, g = interaction_table(space, [lam_i, lam_j], [a_i, a_j])
    return float(ld[0, 1]), g[0, 1]


# ---------------------------------------------------------------------------
# integrals

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _log_panels(s_lo: float, s_hi: float, width: float):
    m = max(1, int(math.ceil((s_hi - s_lo) / width)))
    edges = np.linspace(s_lo, s_hi, m + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + h[:, None] * _GL_X[None, :]).ravel()
    w = (h[:, None] * _GL_W[None, :]).ravel()
    return s, w


@dataclass
class InteractionReport:
    kind: str
    numeric: float
    predicted: float
    ratio: float
    bound: float | None = None

    def to_json(self) -> dict:
        return {"kind": self.kind, "numeric": self.numeric, "predicted": self.predicted,
                "ratio": self.ratio, "bound": self.bound}


def _half_space(n: int, lam_c: float, d: float, F, panel_width: float,
                s_floor: float = -18.0, far: float = 1e6, tol: float = 1e-10):
    """Integral of F(r, cos(beta)) over the half-space ``x . e < d/2`` in
    polar coordinates about the origin, the other center sitting at ``d e``.
    """
    s_lo = s_floor
    nodes_inside = _log_panels(s_lo, 0.0, panel_width)[0].size
    if nodes_inside < 32:
        raise UnresolvedScaleError(
            f"only {nodes_inside} radial nodes inside 1/lambda (need 32)")

    def inner(betas):
        out = np.empty_like(betas)
        for k, b in enumerate(betas):
            cb = math.cos(b)
            rmax = d / (2 * cb) if cb > 1e-300 else far * max(d, 1.0)
            rmax = min(rmax, far * max(d, 1.0))
            s, w = _log_panels(s_lo, math.log(lam_c * rmax), panel_width)
            r = np.exp(s) / lam_c
            out[k] = np.sum(w * F(r, cb) * r ** n) * math.sin(b) ** (n - 2)
        return out

    val, _ = gk_adaptive(inner, 0.0, math.pi, epsabs=0.0, epsrel=tol,
                         breakpoints=(0.5 * math.pi,))
    return sphere_area(n - 2) * val


def _flat_pair(n: int, lam_i: float, lam_j: float, d: float, kind: str,
               panel_width: float) -> float:
    p = (n + 2) / (n - 2)
    q = 0.5 * (n - 2)

    def prof(lam, rr2):
        return (lam / (1.0 + lam * lam * rr2)) ** q

    def jfactor(lam, rr2, axial):
        phi = prof(lam, rr2)
        t = lam * lam * rr2
        if kind == "pair_1":
            return phi
        if kind == "pair_2":
            return q * phi * (t - 1.0) / (t + 1.0)
        return (n - 2) * lam * phi / (1.0 + t) * axial

    # around a_i; a_j at +d e
    def Fi(r, cb):
        rj2 = r * r + d * d - 2 * r * d * cb
        return prof(lam_i, r * r) ** p * jfactor(lam_j, rj2, r * cb - d)

    # around a_j; a_i at +d e' with e' = -e, so (x - a_j).e = -r cb
    def Fj(r, cb):
        ri2 = r * r + d * d - 2 * r * d * cb
        return prof(lam_i, ri2) ** p * jfactor(lam_j, r * r, -r * cb)

    return (_half_space(n, lam_i, d, Fi, panel_width)
            + _half_space(n, lam_j, d, Fj, panel_width))


def _radial_self(space: ModelSpace, lam: float, kind: str) -> float:
    n = space.dim
    q = 0.5 * (n - 2)
    crit = 2 * n / (n - 2)
    if space.backend == "flat":
        def f(r):
            t = lam * lam * r * r
            phi = (lam / (1 + t)) ** q
            g = phi ** crit if kind == "self_norm" else \
                phi ** (crit - 1) * q * phi * (t - 1) / (t + 1)
            return g * r ** (n - 1)
        val, _ = gk_semi_infinite(f, 0.0, 1.0 / lam, epsabs=1e-14, epsrel=1e-13)
        return sphere_area(n - 1) * val
    mu = lam * lam - 0.25

    def g(theta):
        c = 2 - 2 * np.cos(theta)
        phi = (lam / (1 + mu * c)) ** q
        if kind == "self_norm":
            h = phi ** crit
        else:
            h = phi ** (crit - 1) * q * phi * ((lam * lam + 0.25) * c - 1) / (1 + mu * c)
        return h * np.sin(theta) ** (n - 1)
    brk = [min(k / lam, 3.0) for k in (1.0, 10.0, 100.0)]
    val, _ = gk_adaptive(g, 0.0, math.pi, epsabs=1e-13, epsrel=1e-13, breakpoints=brk)
    return sphere_area(n - 1) * val


KINDS = ("self_norm", "self_cross_2", "pair_1", "pair_2", "pair_3")


def interaction_integral(space: ModelSpace, kind: str, lam_i: float, a_i=None,
                         lam_j: float | None = None, a_j=None,
                         panel_width: float = 0.5) -> InteractionReport:
    """Numeric interaction integral next to its leading-order prediction.

    ``self_norm``    int phi^(2n/(n-2))              vs c1
    ``self_cross_2`` int phi^((n+2)/(n-2)) phi2      vs 0
    ``pair_k``       int phi_i^((n+2)/(n-2)) phi_kj  vs b1 d_kj eps_ij

    where ``d_1 = 1``, ``d_2 = -lam_j d/d lam_j`` and ``d_3`` is
    ``(1/lam_j) grad_{a_j}`` projected on the axis from a_i to a_j.
    Pair integrals are computed on the flat backend only.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    n = space.dim
    tab = constants_table(n)
    if kind.startswith("self"):
        num = _radial_self(space, lam_i, kind)
        pred = tab["c1"] if kind == "self_norm" else 0.0
        ratio = num / pred if pred else math.nan
        return InteractionReport(kind, num, pred, ratio, 10 * lam_i ** (2 - n))
    if space.backend != "flat":
        raise ValueError("pair interaction integrals need the flat backend")
    if lam_j is None or a_i is None or a_j is None:
        raise ValueError("pair kinds need both centers and concentrations")
    a_i = np.asarray(a_i, dtype=float)
    a_j = np.asarray(a_j, dtype=float)
    d = float(np.linalg.norm(a_j - a_i))
    if d == 0:
        raise ValueError("pair integrals need distinct centers")
    num = _flat_pair(n, lam_i, lam_j, d, kind, panel_width)
    eps, ld, coef = kernels.pair_table([lam_i, lam_j], np.vstack([a_i, a_j]), n)
    b1 = tab["b1"]
    if kind == "pair_1":
        pred = b1 * eps[0, 1]
    elif kind == "pair_2":
        pred = -b1 * ld[1, 0]
    else:
        # (1/lam_j) grad_{a_j} eps = coef_ji (a_j - a_i); axis e = (a_j - a_i)/d
        pred = b1 * coef[1, 0] * d
    return InteractionReport(kind, num, pred, num / pred)
