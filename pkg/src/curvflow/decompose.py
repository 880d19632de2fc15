"""Optimal bubble fit of a rotationally symmetric field.

Bubbles sit at the poles (north first).  The misfit

    M = int K u^(4/(n-2)) |u - sum alpha_i phi_i|^2

is minimized over ``(alpha_i, ln lambda_i)`` with the bound lambda >= 1,
below which a bubble no longer concentrates (lambda = 1/2 already gives a
constant).  A fit resting on the bound is reported as not converged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .bubbles import bubble_derivs, interaction_table
from .energy import ScalarField, k_values
from .geometry import ModelSpace
from .shadow import BubbleEnsemble


def pole(n: int, north: bool = True) -> np.ndarray:
    a = np.zeros(n + 1)
    a[-1] = 1.0 if north else -1.0
    return a


@dataclass
class DecompositionResult:
    ensemble: BubbleEnsemble
    v: np.ndarray = field(repr=False)
    misfit: float
    residuals: np.ndarray       # (2, p): pairings with phi_1 and phi_2
    gradient: np.ndarray        # (2, p): dM/d alpha_i and -(1/alpha_i) dM/d ln lambda_i
    converged: bool
    iterations: int
    message: str = ""

    @property
    def norm_v(self) -> float:
        return float(np.sqrt(self.misfit))

    def to_json(self) -> dict:
        eps = []
        if self.ensemble.size > 1:
            sp = ModelSpace(self.ensemble.pts.shape[1] - 1, "sphere")
            e = interaction_table(sp, self.ensemble.lam, self.ensemble.pts)[0]
            eps = e.tolist()
        return {"ensemble": self.ensemble.to_json(), "misfit": self.misfit,
                "residuals": {"phi1": self.residuals[0].tolist(),
                              "phi2": self.residuals[1].tolist()},
                "gradient": self.gradient.tolist(), "eps": eps,
                "converged": self.converged, "iterations": self.iterations,
                "message": self.message}


def _modes(f: ScalarField, lam: np.ndarray):
    n = f.dim
    sp = ModelSpace(n, "sphere")
    X = f.grid.ambient_points()
    phi, phi2 = [], []
    for i, l in enumerate(lam):
        p1, p2, _ = bubble_derivs(sp, pole(n, i == 0), float(l), X)
        phi.append(p1)
        phi2.append(p2)
    return np.array(phi), np.array(phi2)


def _pairings(f: ScalarField, K, alpha, lam):
    n = f.dim
    u = f.values
    c = f.weights * k_values(K, f.grid) * u ** (4.0 / (n - 2))
    phi, phi2 = _modes(f, lam)
    v = u - alpha @ phi
    res = np.vstack([phi @ (c * v), phi2 @ (c * v)])
    return v, float(np.sum(c * v * v)), res


def orthogonality_residuals(field: ScalarField, result: DecompositionResult, K=1.0) -> np.ndarray:
    """``<v, phi_{k,i}>`` in the ``K u^(4/(n-2))`` pairing, shape (2, p)."""
    e = result.ensemble
    return _pairings(field, K, e.alpha, e.lam)[2]


def fit(field: ScalarField, K=1.0, p: int = 1, init: BubbleEnsemble | None = None,
        max_iter: int = 200, gtol: float = 1e-10) -> DecompositionResult:
    """Fit ``p`` pole bubbles; ``init`` gives starting amplitudes and scales."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2 (one bubble per pole)")
    n = field.dim
    if init is None:
        u = field.values
        # a pole bubble with lambda = 2 peaks at 2^((n-2)/2)
        init = BubbleEnsemble(np.full(p, float(u.max()) / 2 ** ((n - 2) / 2)),
                              [pole(n, i == 0) for i in range(p)], np.full(p, 2.0))
    if init.size != p:
        raise ValueError("init must hold p bubbles")
    u = field.values
    sw = np.sqrt(field.weights * k_values(K, field.grid) * u ** (4.0 / (n - 2)))

    def resid(x):
        al, lam = x[:p], np.exp(x[p:])
        phi, _ = _modes(field, lam)
        return sw * (u - al @ phi)

    def jac(x):
        al, lam = x[:p], np.exp(x[p:])
        phi, phi2 = _modes(field, lam)
        # d/d ln lambda of -alpha phi is +alpha phi2
        return np.hstack([-(sw * phi).T, (sw * (al[:, None] * phi2)).T])

    x0 = np.concatenate([init.alpha, np.log(np.maximum(init.lam, 1.0))])
    lb = np.concatenate([np.full(p, -np.inf), np.zeros(p)])
    try:
        sol = least_squares(resid, x0, jac=jac, bounds=(lb, np.inf), method="trf",
                            x_scale="jac", ftol=1e-15, xtol=1e-15, gtol=1e-15,
                            max_nfev=max_iter)
        x, nit, msg = sol.x, int(sol.nfev), str(sol.message)
    except (ValueError, FloatingPointError) as exc:
        x, nit, msg = x0, 0, f"solver failed: {exc}"
    alpha, lam = x[:p], np.exp(x[p:])
    v, misfit, res = _pairings(field, K, alpha, lam)
    grad = -2.0 * res
    scale = max(1.0, float(np.sum(sw * sw * u * u)))
    at_bound = bool(np.any(x[p:] <= 1e-12))
    ok = (not at_bound and np.all(alpha > 0)
          and float(np.max(np.abs(grad))) <= gtol * scale)
    if at_bound:
        msg = "lambda reached the lower bound 1; no concentrated bubble fits"
    elif not ok and "solver failed" not in msg:
        msg = f"first-order conditions not met: {msg}"
    if np.any(alpha <= 0):
        ok = False
        msg = "nonpositive amplitude"
    # the ensemble type wants positive amplitudes; keep the magnitude
    ens = BubbleEnsemble(np.maximum(np.abs(alpha), 1e-300),
                         [pole(n, i == 0) for i in range(p)], lam)
    return DecompositionResult(ens, v, misfit, res, grad, bool(ok), nit, msg)
