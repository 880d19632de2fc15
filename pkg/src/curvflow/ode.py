"""Dormand-Prince 5(4) with step-size control.

Small and explicit on purpose: the shadow flow needs a per-step hook
(retraction onto the sphere, regime checks) and exact landing on output
times, which is awkward to get from ``scipy.integrate.solve_ivp``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B - _B4


class StepSizeUnderflow(RuntimeError):
    pass


@dataclass
class OdeResult:
    t: list[float] = field(default_factory=list)
    y: list[np.ndarray] = field(default_factory=list)
    status: str = "running"
    n_accepted: int = 0
    n_rejected: int = 0


def dopri54(f: Callable[[float, np.ndarray], np.ndarray], t0: float, y0: np.ndarray,
            t_out: np.ndarray, *, rtol: float = 1e-10, atol: float = 1e-12,
            h0: float | None = None, h_max: float = math.inf, max_steps: int = 100_000,
            after_step: Callable[[float, np.ndarray], np.ndarray] | None = None,
            stop: Callable[[float, np.ndarray], str | None] | None = None,
            record_steps: bool = False) -> OdeResult:
    """Integrate ``y' = f(t, y)`` and report ``y`` at each time in ``t_out``.

    ``after_step`` may project an accepted state (it returns the new y).
    ``stop`` returns a reason string to end the run at an accepted state;
    that state is appended to the output and ``status`` set to the reason.
    With ``record_steps`` every accepted step is reported as well.
    """
    t_out = np.asarray(t_out, dtype=float)
    if np.any(np.diff(t_out) <= 0) or (t_out.size and t_out[0] < t0):
        raise ValueError("output times must increase and start at or after t0")
    res = OdeResult()
    t = float(t0)
    y = np.array(y0, dtype=float)
    k1 = f(t, y)
    if h0 is None:
        d0 = np.linalg.norm(y) / math.sqrt(y.size)
        d1 = np.linalg.norm(k1) / math.sqrt(y.size)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(h0, h_max)
    j = 0
    while j < t_out.size and t_out[j] <= t:
        res.t.append(t)
        res.y.append(y.copy())
        j += 1
    if stop is not None and (why := stop(t, y)):
        res.status = why
        if not res.t or res.t[-1] != t:
            res.t.append(t)
            res.y.append(y.copy())
        return res
    for _ in range(max_steps):
        if j >= t_out.size:
            res.status = "done"
            return res
        target = t_out[j]
        hit = t + h >= target * (1 - 1e-15) - 1e-300
        hh = target - t if hit else h
        K = [k1]
        # a non-finite error estimate just rejects the step
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(1, 7):
                ys = y + hh * sum(a * K[q] for q, a in enumerate(_A[s]))
                K.append(f(t + _C[s] * hh, ys))
            ynew = y + hh * sum(b * K[q] for q, b in enumerate(_B) if b)
            err_vec = hh * sum(e * K[q] for q, e in enumerate(_E))
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
            err = float(np.sqrt(np.mean((err_vec / sc) ** 2)))
        if not math.isfinite(err):
            err = math.inf
        if err <= 1.0:
            res.n_accepted += 1
            t = target if hit else t + hh
            y = ynew
            k1 = K[6]
            if after_step is not None:
                y = after_step(t, y)
                k1 = f(t, y)
            if hit:
                res.t.append(t)
                res.y.append(y.copy())
                j += 1
            elif record_steps:
                res.t.append(t)
                res.y.append(y.copy())
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if not hit:
                h = min(hh * fac, h_max)
            if stop is not None and (why := stop(t, y)):
                res.status = why
                if res.t[-1:] != [t]:
                    res.t.append(t)
                    res.y.append(y.copy())
                return res
        else:
            res.n_rejected += 1
            h = hh * max(0.1, 0.9 * err ** -0.2)
            if h < 1e-14 * max(1.0, abs(t)):
                raise StepSizeUnderflow(f"step size underflow at t={t:.6g}")
    res.status = "max_steps"
    return res
