"""The principal shadow flow of bubble parameters, its Lyapunov functions
and the diverging five-dimensional scenario.

Remainders are dropped and every ``(1 + o(1))`` factor is set to one.  The
state is ``(alpha_i, a_i, lambda_i)``; on the sphere backend the centers
are unit vectors and their velocities are chart vectors at the center.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import kernels
from .constants import ConstantsTable, constants_table
from .geometry import (KSpec, ModelSpace, kspec_eval, normalize_points, tangent_basis)
from .ode import dopri54

MODES = ("no-solution", "with-solution")
POLICIES = ("leading-energy", "frozen")


class ShadowRegimeError(ValueError):
    """The configuration left the shadow regime."""


@lru_cache(maxsize=None)
def _table(n: int) -> ConstantsTable:
    return constants_table(n)


@dataclass
class BubbleEnsemble:
    """Amplitudes, centers (rows) and concentrations of p bubbles."""

    alpha: np.ndarray
    pts: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        self.pts = np.atleast_2d(np.asarray(self.pts, dtype=float))
        p = self.lam.size
        if self.alpha.size != p or self.pts.shape[0] != p:
            raise ValueError("alpha, pts and lam must describe the same bubbles")
        if np.any(self.alpha <= 0) or np.any(self.lam <= 0):
            raise ValueError("alpha and lambda must be positive")

    @property
    def size(self) -> int:
        return self.lam.size

    def to_json(self) -> list[dict[str, Any]]:
        return [{"alpha": float(a), "lambda": float(l), "a": [float(x) for x in p]}
                for a, l, p in zip(self.alpha, self.lam, self.pts)]


@dataclass
class ShadowConfig:
    space: ModelSpace
    K: KSpec
    mode: str = "no-solution"
    H: float | Callable[[np.ndarray], np.ndarray] | None = None
    omega: KSpec | Callable[[np.ndarray], np.ndarray] | None = None
    alpha_sol: float = 1.0
    r_over_k: str = "leading-energy"
    frozen_value: float | None = None
    eps_max: float = 0.5
    lam_min: float = 1.0
    alpha_dynamics: str = "relax"

    def __post_init__(self):
        if self.alpha_dynamics not in ("relax", "lock"):
            raise ValueError("alpha_dynamics must be 'relax' or 'lock'")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.r_over_k not in POLICIES:
            raise ValueError(f"r_over_k must be one of {POLICIES}")
        if self.mode == "with-solution" and self.omega is None:
            raise ValueError("mode with-solution needs omega")
        if self.alpha_sol <= 0:
            raise ValueError("alpha_sol must be positive")
        if self.H is None:
            self.H = self.space.mass

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def constants(self) -> ConstantsTable:
        return _table(self.space.dim)

    def mass(self, pts: np.ndarray) -> np.ndarray:
        if callable(self.H):
            h = np.asarray(self.H(pts), dtype=float)
        else:
            h = np.full(len(pts), float(self.H))
        if np.any(h < 0):
            raise ValueError("mass must be nonnegative")
        return h

    def omega_at(self, pts: np.ndarray) -> np.ndarray:
        w = self.omega.value(pts) if isinstance(self.omega, KSpec) else self.omega(pts)
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0):
            raise ValueError("omega must be positive")
        return w

    def scaled(self, s: float) -> "ShadowConfig":
        """The same configuration with K replaced by ``s K``.

        The unit-volume conformal factor scales by ``s^(-(n-2)/(2n))``; the
        solution amplitude follows it.
        """
        n = self.dim
        fv = None if self.frozen_value is None else self.frozen_value * s ** (-(n - 2) / n)
        return replace(self, K=self.K.scaled(s), frozen_value=fv,
                       alpha_sol=self.alpha_sol * s ** (-(n - 2) / (2 * n)))


@dataclass
class ShadowState:
    t: float
    bubbles: BubbleEnsemble

    @property
    def size(self) -> int:
        return self.bubbles.size


def leading_energy(cfg: ShadowConfig, Kvals: np.ndarray) -> float:
    """``c0 (sum K_i^(-(n-2)/2))^(2/n)``, the energy level of p bubbles."""
    n = cfg.dim
    return cfg.constants["c0"] * float(np.sum(Kvals ** (-(n - 2) / 2))) ** (2 / n)


def lock_alpha(cfg: ShadowConfig, pts: np.ndarray, r_over_k: float | None = None) -> np.ndarray:
    """Amplitudes solving ``r alpha^(4/(n-2)) K_i = 4n(n-1) k``."""
    n = cfg.dim
    Kv = cfg.K.value(normalize_points(cfg.space, pts))
    rk = _r_over_k(cfg, Kv) if r_over_k is None else r_over_k
    return (4 * n * (n - 1) / (rk * Kv)) ** ((n - 2) / 4)


def _r_over_k(cfg: ShadowConfig, Kvals: np.ndarray) -> float:
    if cfg.r_over_k == "frozen":
        if cfg.frozen_value is None:
            raise ValueError("frozen r/k policy needs frozen_value")
        return cfg.frozen_value
    return leading_energy(cfg, Kvals)


@dataclass
class ShadowDerivs:
    dlog_alpha: np.ndarray
    dlog_lam: np.ndarray
    da: np.ndarray          # chart components, shape (p, n)
    eps: np.ndarray
    r_over_k: float


def shadow_rhs(state: ShadowState, cfg: ShadowConfig, check: bool = True) -> ShadowDerivs:
    """Time derivatives of ``(ln alpha_i, a_i, ln lambda_i)``.

    With ``check`` a configuration outside the shadow regime raises
    :class:`ShadowRegimeError`.
    """
    b = state.bubbles
    return _rhs(b.alpha, normalize_points(cfg.space, b.pts), b.lam, cfg, check)


def _rhs(alpha, pts, lam, cfg: ShadowConfig, check: bool) -> ShadowDerivs:
    n = cfg.dim
    sp = cfg.space
    tab = cfg.constants
    p = lam.size
    if check:
        if np.any(lam <= cfg.lam_min):
            raise ShadowRegimeError(f"lambda fell to {lam.min():.6g}")
    d = kspec_eval(cfg.K, pts, sp)
    if np.any(d.K <= 0):
        raise ValueError("K must be positive at the bubble centers")
    rk = _r_over_k(cfg, d.K)
    if cfg.alpha_dynamics == "lock":
        alpha = (4 * n * (n - 1) / (rk * d.K)) ** ((n - 2) / 4)
    eps, lam_deps, coef = kernels.pair_table(lam, pts, n)
    if check and p > 1 and eps.max() >= cfg.eps_max:
        raise ShadowRegimeError(f"interaction reached {eps.max():.6g}")
    ratio = alpha[None, :] / alpha[:, None]
    np.fill_diagonal(ratio, 0.0)
    diff = pts[:, None, :] - pts[None, :, :]
    if sp.backend == "flat":
        inter_a = np.einsum("ij,ijk->ik", ratio * coef, diff)
    else:
        inter_a = np.empty((p, n))
        for i in range(p):
            inter_a[i] = ((ratio[i] * coef[i]) @ diff[i]) @ tangent_basis(pts[i])
    inter_l = np.sum(ratio * lam_deps, axis=1)
    c2, c3 = tab["c2"], tab["c3"]
    K = d.K
    if cfg.mode == "no-solution":
        H = cfg.mass(pts)
        br = (tab["d2"] / c2 * H / lam ** (n - 2) + tab["e2"] / c2 * d.lap / (K * lam ** 2)
              - tab["b2"] / c2 * inter_l)
        va = (tab["e3"] / c3 * d.grad / (K * lam)[:, None]
              + tab["e4"] / c3 * d.grad_lap / (K * lam ** 3)[:, None]
              + tab["b3"] / c3 * inter_a)
    else:
        w = cfg.omega_at(pts)
        br = (tab["d2_omega"] / c2 * cfg.alpha_sol * w / (alpha * lam ** ((n - 2) / 2))
              - tab["b2"] / c2 * inter_l)
        va = (tab["d3_omega"] / c3 * d.grad / (K * lam)[:, None]
              + tab["b3"] / c3 * inter_a)
    dlog_lam = -rk * br
    da = rk * va / lam[:, None]
    # relaxation of the amplitudes to the algebraic lock
    pw = alpha ** (4 / (n - 2)) * K
    X = rk * pw / (4 * n * (n - 1))
    rho = 4 * n * (n - 1) / pw
    dlog_alpha = -rho * (X - 1.0)
    if cfg.alpha_dynamics == "lock":
        dlog_alpha = np.zeros(p)
    return ShadowDerivs(dlog_alpha, dlog_lam, da, eps, rk)


@dataclass
class Trajectory:
    t: np.ndarray
    alpha: np.ndarray       # (T, p)
    lam: np.ndarray         # (T, p)
    pts: np.ndarray         # (T, p, m)
    status: str
    space: ModelSpace

    def state(self, k: int) -> ShadowState:
        return ShadowState(float(self.t[k]),
                           BubbleEnsemble(self.alpha[k], self.pts[k], self.lam[k]))

    def __len__(self) -> int:
        return self.t.size

    def to_csv(self, path: str | Path) -> None:
        from .io import write_csv
        m = self.pts.shape[2]
        header = ["t", "i", "alpha", "lambda"] + [f"a_{j + 1}" for j in range(m)]
        rows = []
        for k in range(self.t.size):
            for i in range(self.lam.shape[1]):
                rows.append([self.t[k], i, self.alpha[k, i], self.lam[k, i],
                             *self.pts[k, i]])
        write_csv(path, header, rows)


def integrate(state: ShadowState, cfg: ShadowConfig, t_end: float, *,
              n_out: int = 201, t_out: np.ndarray | None = None,
              rtol: float = 1e-10, atol: float = 1e-12,
              record_steps: bool = False) -> Trajectory:
    """Integrate the shadow flow from ``state`` to ``t_end``.

    Stops early (``status`` names the reason) when some lambda drops to
    ``cfg.lam_min`` or some interaction reaches ``cfg.eps_max``.
    """
    sp = cfg.space
    b = state.bubbles
    p = b.size
    n = cfg.dim
    pts0 = normalize_points(sp, b.pts)
    m = pts0.shape[1]
    if cfg.r_over_k == "frozen" and cfg.frozen_value is None:
        cfg = replace(cfg, frozen_value=leading_energy(cfg, cfg.K.value(pts0)))
    if t_out is None:
        t_out = state.t + np.linspace(0.0, t_end - state.t, n_out)
    y0 = np.concatenate([np.log(b.alpha), np.log(b.lam), pts0.ravel()])

    def unpack(y):
        return (np.exp(y[:p]), np.exp(y[p:2 * p]), y[2 * p:].reshape(p, m))

    def f(t, y):
        al, lam, pts = unpack(y)
        if sp.backend == "sphere":
            pts = normalize_points(sp, pts)
        d = _rhs(al, pts, lam, cfg, check=False)
        if sp.backend == "sphere":
            vel = np.stack([tangent_basis(pts[i]) @ d.da[i] for i in range(p)])
        else:
            vel = d.da
        return np.concatenate([d.dlog_alpha, d.dlog_lam, vel.ravel()])

    def retract(t, y):
        if sp.backend == "sphere":
            y = y.copy()
            y[2 * p:] = normalize_points(sp, y[2 * p:].reshape(p, m)).ravel()
        return y

    def stop(t, y):
        al, lam, pts = unpack(y)
        if np.any(lam <= cfg.lam_min):
            return "lambda_below_min"
        if p > 1:
            eps = kernels.pair_table(lam, pts, n)[0]
            if eps.max() >= cfg.eps_max:
                return "interaction_above_max"
        return None

    res = dopri54(f, state.t, y0, t_out, rtol=rtol, atol=atol, after_step=retract,
                  stop=stop, record_steps=record_steps)
    Y = np.array(res.y)
    alpha = np.exp(Y[:, :p])
    pts_out = Y[:, 2 * p:].reshape(-1, p, m)
    if cfg.alpha_dynamics == "lock":
        alpha = np.array([lock_alpha(cfg, q) for q in pts_out])
    return Trajectory(np.array(res.t), alpha, np.exp(Y[:, p:2 * p]), pts_out,
                      res.status, sp)


# ---------------------------------------------------------------------------
# Lyapunov functions

LYAP_KINDS = ("n3", "n4", "n5", "omega-positive")


def smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step, 0 for x <= 0, 1 for x >= 1, slope at most 2."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 1.0, 0.0)
    mid = (x > 0) & (x < 1)
    xm = x[mid]
    out[mid] = 1.0 / (1.0 + np.exp(1.0 / xm - 1.0 / (1.0 - xm)))
    return out


def cutoff(s: np.ndarray, eps_u: float) -> np.ndarray:
    """``eta``: 0 below eps_u, 1 above 2 eps_u, slope at most 2/eps_u."""
    return smooth_step((np.asarray(s, dtype=float) - eps_u) / eps_u)


@dataclass
class LyapunovSpec:
    kind: str
    C: float
    kappa: float | None = None
    eps_underline: float = 1e-3

    def __post_init__(self):
        if self.kind not in LYAP_KINDS:
            raise ValueError(f"kind must be one of {LYAP_KINDS}")
        if not self.C > 1:
            raise ValueError("C must exceed 1")
        if self.eps_underline <= 0:
            raise ValueError("eps_underline must be positive")
        if self.kappa is not None and self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


def default_kappa(cfg: ShadowConfig, cond_margin: float, min_K: float) -> float:
    """``gamma2 / (c0 min K)`` with c0 the Cond_5 margin."""
    if cond_margin <= 0 or min_K <= 0:
        raise ValueError("kappa default needs a positive margin and min K")
    return cfg.constants["gamma2"] / (cond_margin * min_K)


def _terms(state: ShadowState, cfg: ShadowConfig, spec: LyapunovSpec):
    b = state.bubbles
    loginv = -np.log(b.lam)
    if spec.kind in ("n3", "omega-positive"):
        return loginv, 1.0 / b.lam
    pts = normalize_points(cfg.space, b.pts)
    d = kspec_eval(cfg.K, pts, cfg.space)
    f = loginv / d.K
    if spec.kind == "n5":
        if spec.kappa is None:
            raise ValueError("kind n5 needs kappa")
        s = -b.lam * d.lap
        eta = cutoff(s, spec.eps_underline)
        theta = np.zeros_like(s)
        on = eta > 0
        theta[on] = eta[on] * np.log(s[on] / spec.eps_underline)
        f = f - spec.kappa * theta
    return f, f


def lyapunov(state: ShadowState, cfg: ShadowConfig, spec: LyapunovSpec) -> float:
    """Ordered weighted sum: the largest key gets ``C``, the next ``C^2`` ..."""
    if spec.kind == "omega-positive" and cfg.mode != "with-solution":
        raise ValueError("kind omega-positive needs mode with-solution")
    if spec.kind in ("n3", "n4", "n5") and int(spec.kind[1]) != cfg.dim:
        raise ValueError(f"kind {spec.kind} does not match dimension {cfg.dim}")
    f, key = _terms(state, cfg, spec)
    order = np.argsort(-key, kind="stable")
    w = spec.C ** np.arange(1, f.size + 1)
    return float(np.sum(w * f[order]))


@dataclass
class MonotonicityReport:
    passed: bool
    min_increment: float
    first_violation: float | None
    values: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {"passed": self.passed, "min_increment": self.min_increment,
                "first_violation": self.first_violation}


def lyapunov_monotonicity(traj: Trajectory, cfg: ShadowConfig, spec: LyapunovSpec,
                          tol: float = 1e-9) -> MonotonicityReport:
    """Smallest increment of psi along the trajectory.

    psi is continuous across ordering switches (the weights follow the
    sorted keys and the terms are increasing in the keys), so consecutive
    differences are valid increments.
    """
    vals = np.array([lyapunov(traj.state(k), cfg, spec) for k in range(len(traj))])
    inc = np.diff(vals)
    if inc.size == 0:
        return MonotonicityReport(True, 0.0, None, vals)
    mn = float(inc.min())
    bad = np.nonzero(inc < -tol)[0]
    first = float(traj.t[bad[0] + 1]) if bad.size else None
    return MonotonicityReport(mn >= -tol, mn, first, vals)


# ---------------------------------------------------------------------------
# randomized configurations satisfying the Cond_n hypotheses

def _separated_points(rng: np.random.Generator, p: int, n: int, spread: float,
                      min_gap: float) -> np.ndarray:
    for _ in range(1000):
        pts = rng.uniform(-spread, spread, size=(p, n))
        gaps = [np.linalg.norm(pts[i] - pts[j]) for i in range(p) for j in range(i)]
        if not gaps or min(gaps) > min_gap:
            return pts
    raise RuntimeError("could not place separated points")


def random_case(kind: str, rng: np.random.Generator, p: int | None = None,
                ) -> tuple[ShadowState, ShadowConfig, LyapunovSpec]:
    """A random flat-backend configuration for one Lyapunov kind.

    n3 and omega-positive: K = 1 + sum c_k x_k^2 with a positive mass or
    omega.  n4: the same K, whose Laplacian is positive.  n5:
    K = 1 - c x_1^3 + sum_{k>=2} q_k x_k^2, whose only critical point is the
    origin where the Laplacian is positive; where the Laplacian is negative
    the Cond_5 ratio stays at least 1/2.
    """
    p = int(rng.integers(1, 4)) if p is None else p
    n = {"n3": 3, "n4": 4, "n5": 5}.get(kind, int(rng.integers(3, 6)))
    sp = ModelSpace(n, "flat")
    nv = n
    pts = _separated_points(rng, p, n, 0.3, 0.1)
    lam = 10.0 ** rng.uniform(3.0, 4.0, size=p)
    zero = [0] * nv
    if kind == "n5":
        c = rng.uniform(0.5, 2.0)
        mons = [(1.0, zero), (-c, [3] + [0] * (nv - 1))]
        for k in range(1, nv):
            e = [0] * nv
            e[k] = 2
            mons.append((rng.uniform(0.01, 0.1), e))
    else:
        mons = [(1.0, zero)]
        for k in range(nv):
            e = [0] * nv
            e[k] = 2
            mons.append((rng.uniform(0.0, 0.2), e))
    K = KSpec([m[0] for m in mons], [m[1] for m in mons])
    if kind == "omega-positive":
        w = KSpec([rng.uniform(0.5, 2.0)], None, nv)
        cfg = ShadowConfig(sp, K, mode="with-solution", omega=w,
                           alpha_sol=rng.uniform(0.5, 2.0))
    else:
        H = rng.uniform(0.5, 2.0) if kind == "n3" else rng.uniform(0.0, 1.0)
        cfg = ShadowConfig(sp, K, H=H)
    kappa = None
    if kind == "n5":
        # where Delta K < 0 the Cond_5 ratio is at least
        # 18 c^2 x_1^2 / (6 c x_1)^2 = 1/2, a margin of 1/6 over gamma2/gamma3
        kappa = default_kappa(cfg, 1.0 / 6.0, float(K.value(pts).min()))
    spec = LyapunovSpec(kind, 10.0 ** p, kappa=kappa, eps_underline=1e-3)
    state = ShadowState(0.0, BubbleEnsemble(lock_alpha(cfg, pts), pts, lam))
    return state, cfg, spec


def scaling_deviation(state: ShadowState, cfg: ShadowConfig, t_end: float, s: float = 2.0,
                      n_out: int = 51) -> tuple[float, str, str]:
    """Sup distance of the ``(ln lambda, a)`` paths for K and ``s K``.

    The ``s K`` run is read at times ``t s^((n-2)/n)``; amplitudes start at
    the lock of each configuration.  Both runs are compared up to the
    shorter one; a regime exit lands between output times, so the stopping
    states themselves are left out.  Returns the deviation and the two exit statuses.
    """
    n = cfg.dim
    b = state.bubbles
    st1 = ShadowState(0.0, BubbleEnsemble(lock_alpha(cfg, b.pts), b.pts, b.lam))
    tr1 = integrate(st1, cfg, t_end, n_out=n_out)
    f = s ** ((n - 2) / n)
    cs = cfg.scaled(s)
    st2 = ShadowState(0.0, BubbleEnsemble(lock_alpha(cs, b.pts), b.pts, b.lam))
    t2 = np.asarray(tr1.t) * f
    tr2 = integrate(st2, cs, float(t2[-1]), t_out=t2)
    m = min(len(tr1.t), len(tr2.t))
    if tr1.status != "done" or tr2.status != "done":
        m -= 1
    dl = np.abs(np.log(tr1.lam[:m]) - np.log(tr2.lam[:m])).max()
    da = np.abs(tr1.pts[:m] - tr2.pts[:m]).max()
    return float(max(dl, da)), tr1.status, tr2.status


def critical_distance(traj: Trajectory, crit: np.ndarray) -> np.ndarray:
    """Per output time, the largest distance from a bubble center to the
    nearest critical point of K; a diagnostic only."""
    crit = np.asarray(crit, dtype=float)
    if crit.size == 0:
        return np.full(len(traj), np.inf)
    d = np.linalg.norm(traj.pts[:, :, None, :] - crit[None, None, :, :], axis=-1)
    return d.min(axis=2).max(axis=1)


# ---------------------------------------------------------------------------
# diverging scenario in dimension five

def diverging_K(n: int = 5) -> KSpec:
    """``K = 1 - sum x_i^4``."""
    mons = [(1.0, [0] * n)]
    for k in range(n):
        e = [0] * n
        e[k] = 4
        mons.append((-1.0, e))
    return KSpec([m[0] for m in mons], [m[1] for m in mons])


@dataclass
class ScenarioRun:
    lam0: float
    a0: np.ndarray
    traj: Trajectory
    gamma: float
    checks: dict[str, tuple[bool, float | None]]

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def to_json(self) -> dict:
        return {"lambda0": self.lam0, "a0": self.a0.tolist(), "gamma": self.gamma,
                "status": self.traj.status, "passed": self.passed,
                "checks": {k: {"passed": ok, "first_violation": t}
                           for k, (ok, t) in self.checks.items()}}


def _first_bad(t: np.ndarray, ok: np.ndarray) -> tuple[bool, float | None]:
    bad = np.nonzero(~ok)[0]
    return (True, None) if bad.size == 0 else (False, float(t[bad[0]]))


def scenario_checks(traj: Trajectory, gamma: float, transient: float = 0.05,
                    tol: float = 1e-9) -> dict[str, tuple[bool, float | None]]:
    t = traj.t
    lam = traj.lam[:, 0]
    a = traj.pts[:, 0, :]
    na = np.linalg.norm(a, axis=1)
    out = {}
    after = t[1:] >= transient * t[-1]
    out["lambda_increasing"] = _first_bad(t[1:], (np.diff(lam) >= 0) | ~after)
    out["norm_a_nonincreasing"] = _first_bad(t[1:], np.diff(na) <= tol)
    ratio = np.abs(a).max(axis=1) / np.abs(a).min(axis=1)
    out["component_ratio"] = _first_bad(t, ratio < (5 / 2) ** 0.25)
    la2 = lam * na ** 2
    out["lambda_a2_lower"] = _first_bad(t, la2 >= math.exp(-0.1) * la2[0])
    T = t[-1] - t[0]
    out["lambda_cubed_growth"] = _first_bad(t[-1:], np.array([lam[-1] ** 3 - lam[0] ** 3
                                                              >= 0.1 * gamma * T]))
    return out


def run_diverging_scenario(lam0s=(1e4, 1e5), a_scale: float = 1e-2,
                           perturbations=(0.0, 1e-2, -1e-2), T: float = 1e3,
                           n_out: int = 401, seed: int = 0) -> list[ScenarioRun]:
    """Single bubble, n = 5, flat chart, K = 1 - sum x^4, no mass.

    Initial centers sit on the diagonal at distance ``a_scale`` with the
    first component scaled by ``1 + perturbation``.  ``gamma`` is the
    coefficient in ``d(lambda^3)/dt >= gamma`` implied by the lambda
    equation at the initial value of ``lambda |a|^2``.
    """
    n = 5
    sp = ModelSpace(n, "flat")
    K = diverging_K(n)
    cfg = ShadowConfig(sp, K, H=0.0, alpha_dynamics="lock")
    g2 = cfg.constants["gamma2"]
    runs = []
    for lam0 in lam0s:
        for eps in perturbations:
            a0 = np.full(n, a_scale / math.sqrt(n))
            a0[0] *= 1.0 + eps
            st = ShadowState(0.0, BubbleEnsemble(lock_alpha(cfg, a0[None]), a0[None],
                                                 [lam0]))
            rk = leading_energy(cfg, K.value(a0[None]))
            gamma = 36.0 * rk * g2 * lam0 * float(a0 @ a0)
            traj = integrate(st, cfg, T, n_out=n_out, rtol=1e-11, atol=1e-14)
            runs.append(ScenarioRun(lam0, a0, traj, gamma, scenario_checks(traj, gamma)))
    return runs


# ---------------------------------------------------------------------------
# configuration files

def config_from_json(obj: dict[str, Any]) -> tuple[ShadowState, ShadowConfig, dict[str, Any]]:
    """Parse a shadow run description; returns state, config and run options."""
    known = {"dim", "backend", "mode", "K", "H", "omega", "alpha_sol", "r_over_k",
             "bubbles", "t_end", "n_out", "rtol", "atol", "eps_max", "out"}
    extra = set(obj) - known
    if extra:
        raise ValueError(f"unknown shadow config keys: {sorted(extra)}")
    for key in ("dim", "bubbles", "t_end"):
        if key not in obj:
            raise ValueError(f"shadow config misses {key!r}")
    n = int(obj["dim"])
    sp = ModelSpace(n, obj.get("backend", "flat"))
    m = sp.ambient_dim
    K = KSpec.from_json(obj.get("K", {"kind": "constant", "value": 1.0}), m)
    omega = obj.get("omega")
    if omega is not None:
        omega = KSpec.from_json(omega, m)
    cfg = ShadowConfig(sp, K, mode=obj.get("mode", "no-solution"),
                       H=float(obj.get("H", 0.0)), omega=omega,
                       alpha_sol=float(obj.get("alpha_sol", 1.0)),
                       r_over_k=obj.get("r_over_k", "leading-energy"),
                       eps_max=float(obj.get("eps_max", 0.5)))
    bl = obj["bubbles"]
    if not bl:
        raise ValueError("bubbles must be a nonempty list")
    pts = normalize_points(sp, [b["a"] for b in bl])
    if pts.shape[1] != m:
        raise ValueError(f"bubble centers need {m} coordinates")
    lam = [float(b["lambda"]) for b in bl]
    alpha = lock_alpha(cfg, pts)
    given = [b.get("alpha") for b in bl]
    alpha = np.array([a if g is None else float(g) for a, g in zip(alpha, given)])
    opts = {"t_end": float(obj["t_end"]), "n_out": int(obj.get("n_out", 201)),
            "rtol": float(obj.get("rtol", 1e-10)), "atol": float(obj.get("atol", 1e-12))}
    if opts["t_end"] <= 0:
        raise ValueError("t_end must be positive")
    return ShadowState(0.0, BubbleEnsemble(alpha, pts, lam)), cfg, opts


def read_trajectory_csv(path: str | Path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
