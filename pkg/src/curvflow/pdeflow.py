"""Time integration of the curvature flow on rotationally symmetric fields.

The flow ``u_t = -(1/K)(R - r K/k) u`` is advanced by a linearly implicit
step: with ``M = K w u_old^(4/(n-2))`` frozen,

    (M + dt A) u* = M (1 + dt r/k) u_old,

which treats the stiff conformal Laplacian implicitly and everything else
explicitly.  ``M + dt A`` is a symmetric M-matrix, so positivity is kept.
The step ends with the rescaling ``u <- u k^(-(n-2)/(2n))`` onto k = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import kernels
from .energy import (CurvatureData, PolarGrid, ScalarField, curvature, k_values,
                     normalize)
from .geometry import KSpec

DIAG_HEADER = ("t", "J", "r", "k", "minR", "minRtildeOverK", "maxU", "minU",
               "deltaJ", "intDeltaJ2")


class StepRejected(RuntimeError):
    pass


class StiffnessFailure(RuntimeError):
    """The step size underflowed; ``state`` holds the last accepted state."""

    def __init__(self, msg: str, state: "FlowState"):
        super().__init__(msg)
        self.state = state


@dataclass(frozen=True)
class FlowState:
    t: float
    field: ScalarField
    curv: CurvatureData
    K: np.ndarray
    int_r: float = 0.0      # int_0^t r/k
    int_dJ2: float = 0.0    # int_0^t |dJ|^2

    @classmethod
    def initial(cls, f: ScalarField, K) -> "FlowState":
        Kv = k_values(K, f.grid)
        f = normalize(f, Kv)
        return cls(0.0, f, curvature(f, Kv), Kv)

    @property
    def dim(self) -> int:
        return self.field.dim

    def min_rtilde_over_k(self) -> float:
        m = float(np.min(self.curv.R / self.K))
        return _scaled(self.dim, self.int_r, m)


def _scaled(n: int, int_r: float, m: float) -> float:
    """``exp(4/(n-2) int_r) * m`` without overflow warnings."""
    e = 4.0 / (n - 2) * int_r
    if m == 0.0:
        return 0.0
    lg = e + math.log(abs(m))
    if lg > 700:
        return math.copysign(math.inf, m)
    return math.copysign(math.exp(lg), m)


def step(state: FlowState, dt: float, jtol: float = 1e-12) -> FlowState:
    """One linearly implicit step followed by renormalization.

    Raises :class:`StepRejected` if the new field is not positive or J
    increased by more than ``jtol * max(1, J)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    f = state.field
    g = f.grid
    n = f.dim
    u = f.values
    Kv = state.K
    c = state.curv
    M = Kv * g.weights * u ** (4.0 / (n - 2))
    rhs = M * (1.0 + dt * c.r / c.k) * u
    off = dt * g.A_off
    us = kernels.tridiag_solve(off, M + dt * g.A_diag, off, rhs)
    if not np.all(np.isfinite(us)) or np.any(us <= 0):
        raise StepRejected("positivity lost")
    crit = 2 * n / (n - 2)
    k = float(np.sum(g.weights * Kv * us ** crit))
    us = us * k ** (-(n - 2) / (2 * n))
    nf = f.with_values(us)
    nc = curvature(nf, Kv)
    if nc.J > c.J + jtol * max(1.0, abs(c.J)):
        raise StepRejected(f"J increased by {nc.J - c.J:.3e}")
    # right-endpoint rules, matching the implicit treatment
    return FlowState(state.t + dt, nf, nc, Kv,
                     state.int_r + dt * nc.r / nc.k,
                     state.int_dJ2 + dt * nc.deltaJ ** 2)


@dataclass
class FlowDiagnostics:
    dim: int
    rows: list[tuple[float, ...]] = field(default_factory=list)
    int_r: list[float] = field(default_factory=list)
    min_RK: list[float] = field(default_factory=list)
    max_K: float = 1.0

    def record(self, s: FlowState) -> None:
        c = s.curv
        u = s.field.values
        self.rows.append((s.t, c.J, c.r, c.k, float(c.R.min()), s.min_rtilde_over_k(),
                          float(u.max()), float(u.min()), c.deltaJ, s.int_dJ2))
        self.int_r.append(s.int_r)
        self.min_RK.append(float(np.min(s.curv.R / s.K)))

    def column(self, name: str) -> np.ndarray:
        i = DIAG_HEADER.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self, path: str | Path) -> None:
        from .io import write_csv
        write_csv(path, DIAG_HEADER, self.rows)


@dataclass
class FlowConfig:
    dim: int
    K: KSpec
    grid_size: int = 512
    t_end: float = 1.0
    dt_init: float = 1e-4
    dt_max: float = 0.05
    tol: float = 1e-9
    method: str = "extrapolation"
    init: dict[str, Any] | str = field(default_factory=lambda: {"preset": "cosine"})
    grid: str = "uniform"
    out: str | None = None

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "FlowConfig":
        from .geometry import KSpec
        missing = [k for k in ("dim", "t_end") if k not in obj]
        if missing:
            raise ValueError(f"flow config misses {', '.join(missing)}")
        if obj["dim"] not in (3, 4, 5):
            raise ValueError("dim must be 3,4,5")
        try:
            dim = int(obj["dim"])
            K = KSpec.from_json(obj.get("K", {"kind": "constant", "value": 1.0}), dim + 1)
        except KeyError as e:
            raise ValueError(f"flow config misses {e}") from None
        known = {"grid_size", "t_end", "dt_init", "dt_max", "tol", "method", "init", "grid",
                 "out"}
        extra = set(obj) - known - {"dim", "K"}
        if extra:
            raise ValueError(f"unknown flow config keys: {sorted(extra)}")
        kw = {k: obj[k] for k in known if k in obj}
        cfg = cls(dim, K, **kw)
        if cfg.t_end <= 0 or cfg.dt_init <= 0 or cfg.tol <= 0 or cfg.grid_size < 8:
            raise ValueError("t_end, dt_init, tol must be positive and grid_size >= 8")
        return cfg


def initial_field(cfg: FlowConfig) -> ScalarField:
    n = cfg.dim
    if cfg.grid == "uniform":
        grid = PolarGrid.uniform(n, cfg.grid_size)
    elif cfg.grid == "clustered":
        grid = PolarGrid.clustered(n, cfg.grid_size)
    else:
        raise ValueError(f"unknown grid {cfg.grid!r}")
    init = cfg.init
    if isinstance(init, str):
        f = ScalarField.from_csv(init, n)
        return normalize(f, cfg.K)
    kind = init.get("preset", "cosine")
    th = grid.theta
    if kind == "constant":
        u = np.ones_like(th)
    elif kind == "cosine":
        u = 1.0 + float(init.get("amplitude", 0.3)) * np.cos(th)
    elif kind == "bubble":
        from .bubbles import bubble_eval
        from .geometry import ModelSpace
        lam = float(init.get("lambda", 2.0))
        sp = ModelSpace(n, "sphere")
        north = np.zeros(n + 1)
        north[-1] = 1.0
        u = bubble_eval(sp, north, lam, grid.ambient_points())
    else:
        raise ValueError(f"unknown initial preset {kind!r}")
    return normalize(ScalarField(grid, u), cfg.K)


def _chain(state: FlowState, H: float, m: int) -> np.ndarray:
    """``m`` IMEX substeps of size H/m packed as (u, int_r, int_dJ2)."""
    s = state
    for _ in range(m):
        s = step(s, H / m, jtol=math.inf)
    return np.concatenate([s.field.values, [s.int_r, s.int_dJ2]])


def extrapolated_step(state: FlowState, H: float,
                      seq: tuple[int, ...] = (1, 2, 3, 4, 5, 6)) -> tuple[FlowState, float]:
    """Polynomial extrapolation of IMEX chains with 1, 2, ... substeps.

    The IMEX step is first order with an asymptotic expansion in powers of
    the step, so the Aitken-Neville table in ``1/m`` raises the order by one
    per column.  The two integrals ride along as extra components and are
    extrapolated with the field.  Returns the new state and the difference
    of the last two diagonal entries, relative to ``max u``.
    """
    T: list[np.ndarray] = []
    prev = None
    for j, m in enumerate(seq):
        row = [_chain(state, H, m)]
        for k in range(1, j + 1):
            ratio = seq[j] / seq[j - k] - 1.0
            row.append(row[k - 1] + (row[k - 1] - T[k - 1]) / ratio)
        prev, T = T, row
    best = T[-1]
    size = state.field.grid.size
    scale = max(1.0, float(np.max(best[:size])))
    err = float(np.max(np.abs(best - T[-2]))) / scale
    u = best[:size]
    if not np.all(np.isfinite(u)) or np.any(u <= 0):
        raise StepRejected("positivity lost in extrapolation")
    n = state.dim
    g = state.field.grid
    k = float(np.sum(g.weights * state.K * u ** (2 * n / (n - 2))))
    nf = state.field.with_values(u * k ** (-(n - 2) / (2 * n)))
    nc = curvature(nf, state.K)
    c = state.curv
    if nc.J > c.J + 1e-12 * max(1.0, abs(c.J)):
        raise StepRejected(f"J increased by {nc.J - c.J:.3e}")
    return FlowState(state.t + H, nf, nc, state.K, float(best[size]),
                     float(best[size + 1])), err


def run(cfg: FlowConfig, f0: ScalarField | None = None,
        max_steps: int = 1_000_000) -> tuple[FlowDiagnostics, FlowState]:
    """Integrate to ``cfg.t_end`` with step-size control.

    ``cfg.tol`` bounds the local error relative to ``max u``.  With
    ``cfg.method == "extrapolation"`` (default) it is estimated from the
    extrapolation table; ``"imex"`` takes plain IMEX steps and estimates it
    by step doubling.
    Either way a step is also rejected (and dt halved) on positivity loss
    or an increase of J.
    """
    if cfg.method not in ("extrapolation", "imex"):
        raise ValueError(f"unknown method {cfg.method!r}")
    f0 = initial_field(cfg) if f0 is None else f0
    state = FlowState.initial(f0, cfg.K)
    diag = FlowDiagnostics(cfg.dim, max_K=float(state.K.max()))
    diag.record(state)
    dt = cfg.dt_init
    for _ in range(max_steps):
        if state.t >= cfg.t_end * (1 - 1e-14):
            break
        h = min(dt, cfg.t_end - state.t)
        shrink = 0.5
        try:
            if cfg.method == "extrapolation":
                new, err = extrapolated_step(state, h)
                if err > cfg.tol:
                    shrink = max(0.2, 0.9 * (cfg.tol / err) ** (1 / 6))
                    raise StepRejected(f"local error {err:.3e} above tol")
                fac = min(3.0, max(0.2, 0.9 * (cfg.tol / max(err, 1e-300)) ** (1 / 6)))
            else:
                # step doubling: the two-halves result is kept
                big = step(state, h)
                new = step(step(state, 0.5 * h), 0.5 * h)
                err = float(np.max(np.abs(new.field.values - big.field.values))
                            / np.max(new.field.values))
                if err > cfg.tol:
                    shrink = max(0.2, 0.9 * (cfg.tol / err) ** 0.5)
                    raise StepRejected(f"local error {err:.3e} above tol")
                fac = min(3.0, max(0.2, 0.9 * (cfg.tol / max(err, 1e-300)) ** 0.5))
        except StepRejected:
            dt = shrink * h
            if dt < 1e-12:
                raise StiffnessFailure("step size underflow", state) from None
            continue
        state = new
        diag.record(state)
        if h == dt:
            dt = min(cfg.dt_max, h * fac)
    else:
        raise StiffnessFailure(f"no convergence within {max_steps} steps", state)
    if cfg.out:
        diag.to_csv(cfg.out)
    return diag, state


@dataclass
class CheckResult:
    passed: bool
    worst: float

    def to_json(self) -> dict:
        return {"passed": self.passed, "worst": self.worst}


def verify_monotonicity(diag: FlowDiagnostics, *, j_tol: float = 1e-10,
                        k_tol: float = 1e-8, rt_tol: float = 1e-6,
                        energy_tol: float = 1e-6) -> dict[str, CheckResult]:
    """Pass/fail per monotone quantity with the worst violation seen."""
    if not diag.rows:
        raise ValueError("empty diagnostics")
    n = diag.dim
    t = diag.column("t")
    J = diag.column("J")
    k = diag.column("k")
    dJ = diag.column("deltaJ")
    I = np.array(diag.int_r)
    m = np.array(diag.min_RK)
    out: dict[str, CheckResult] = {}
    out["rows_increasing"] = CheckResult(bool(np.all(np.diff(t) > 0)), 0.0)
    kv = float(np.max(np.abs(k - 1.0)))
    out["k_unit"] = CheckResult(kv < k_tol, kv)
    jv = float(max(0.0, np.max(np.diff(J)))) if len(J) > 1 else 0.0
    out["J_nonincreasing"] = CheckResult(jv < j_tol, jv)
    # stepwise: exp(e I_i) max(0, m_i - exp(e (I_{i+1} - I_i)) m_{i+1})
    e = 4.0 / (n - 2)
    worst_step = 0.0
    for i in range(len(m) - 1):
        gap = m[i] - math.exp(e * (I[i + 1] - I[i])) * m[i + 1]
        if gap > 0:
            worst_step = max(worst_step, _scaled(n, I[i], gap))
    out["Rtilde_min_stepwise"] = CheckResult(worst_step < rt_tol, worst_step)
    drop = 0.0
    for i in range(1, len(m)):
        gap = m[0] - _scaled(n, I[i], m[i])
        drop = max(drop, gap)
    out["Rtilde_min_vs_initial"] = CheckResult(drop < rt_tol, float(drop))
    ev = float(diag.rows[-1][DIAG_HEADER.index("intDeltaJ2")]
               - 2 * diag.max_K * (J[0] - J[-1]))
    out["energy_inequality"] = CheckResult(ev <= energy_tol, max(ev, 0.0))
    out["deltaJ_decay"] = CheckResult(bool(dJ[-1] <= dJ[0]), float(max(0.0, dJ[-1] - dJ[0])))
    return out



def decay_rate(state: FlowState) -> float:
    """``dJ/dt = -2 int (1/K)|R - r K/k|^2 u^(2n/(n-2)) dmu_0`` at the state."""
    c = state.curv
    n = state.dim
    u = state.field.values
    dev = c.R - c.r * state.K / c.k
    return -2.0 * float(np.sum(state.field.weights * dev * dev * u ** (2 * n / (n - 2)) / state.K))


def j_consistency(state: FlowState, dt: float) -> float:
    """Relative gap between ``(J(t+dt) - J(t))/dt`` and :func:`decay_rate`."""
    rate = decay_rate(state)
    new = step(state, dt, jtol=math.inf)
    fd = (new.curv.J - state.curv.J) / dt
    return abs(fd - rate) / abs(rate)


def curvature_rhs(state: FlowState) -> np.ndarray:
    """``c_n Lap_g(R/K) + 4/(n-2) (R - r K/k) R/K``, the evolution of R."""
    n = state.dim
    g = state.field.grid
    u = state.field.values
    c = state.curv
    f = c.R / state.K
    lap0 = g.laplacian(f)
    lap = u ** (-4.0 / (n - 2)) * (lap0 + 2.0 * g.d1(u) * g.d1(f) / u)
    return 4.0 * (n - 1) / (n - 2) * lap + 4.0 / (n - 2) * (c.R - c.r * state.K / c.k) * f


def curvature_consistency(state: FlowState, dt: float, margin: float = 0.1) -> float:
    """Relative max-norm gap between the finite-difference ``dR/dt`` and
    :func:`curvature_rhs` on ``theta`` in ``[margin, pi - margin]``."""
    new = step(state, dt, jtol=math.inf)
    fd = (new.curv.R - state.curv.R) / dt
    rhs = curvature_rhs(state)
    th = state.field.theta
    m = (th >= margin) & (th <= math.pi - margin)
    return float(np.max(np.abs(fd[m] - rhs[m])) / np.max(np.abs(rhs[m])))
