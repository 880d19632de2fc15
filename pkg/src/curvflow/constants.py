"""Radial-integral constants of the bubble expansions.

Every constant is a prefactor times a sum of terms
``coeff * r**(2a) / (1 + r**2)**b`` integrated over R^n, i.e.
``omega_{n-1} * int_0^inf f(r) r^(n-1) dr``.  The numerical route is
adaptive Gauss-Kronrod; the Beta-function closed form serves as the
oracle in :func:`verify_identities`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import gamma as gamma_fn

from .quadrature import gk_semi_infinite

SUPPORTED_DIMS = (3, 4, 5)


class DivergentIntegralError(ValueError):
    """The integrand does not decay fast enough for the dimension."""


@dataclass(frozen=True)
class RadialIntegrand:
    """``prefactor * sum(coeff * r^(2a) * (1+r^2)^(-b))`` for a fixed n."""

    name: str
    prefactor: float
    terms: tuple[tuple[float, float, float], ...]

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        q = 1.0 + r * r
        out = np.zeros_like(r)
        for c, a, b in self.terms:
            out = out + c * r ** (2 * a) * q ** (-b)
        return self.prefactor * out

    def decay_exponent(self) -> float:
        """Smallest algebraic decay rate ``d`` with ``f ~ r^-d`` at infinity.

        Terms sharing the same ``b`` can cancel at leading order (as in
        ``(r^2 - 1)^2``), but the leading power never does for our
        registry, so the worst term decides.
        """
        return min(2 * b - 2 * a for _, a, b in self.terms)


def sphere_area(m: int) -> float:
    """Area of the unit sphere S^m in R^(m+1)."""
    return float(2.0 * math.pi ** ((m + 1) / 2) / gamma_fn((m + 1) / 2))


def _registry(n: int) -> dict[str, RadialIntegrand]:
    p = (n + 2) / 2
    R = RadialIntegrand
    reg = [
        R("c1", 1.0, ((1, 0, n),)),
        R("c2", (n - 2) ** 2 / 4, ((1, 2, n + 2), (-2, 1, n + 2), (1, 0, n + 2))),
        R("c3", (n - 2) ** 2 / n, ((1, 1, n + 2),)),
        R("b1", 1.0, ((1, 0, p),)),
        R("b2", (n - 2) / 2, ((1, 0, p),)),
        R("b3", (n - 2) / 2, ((1, 0, p),)),
        # equivalent forms obtained by integrating by parts
        R("b2_alt", (n + 2) / 2, ((1, 1, p + 1), (-1, 0, p + 1))),
        R("b3_alt", (n + 2) * (n - 2) / (2 * n), ((1, 1, p + 1),)),
        R("e1", 1 / (2 * n), ((1, 1, n),)),
        R("e2", (n - 2) / (4 * n), ((1, 2, n + 1), (-1, 1, n + 1))),
        R("e3", (n - 2) / (2 * n), ((1, 0, n),)),
        R("e3_alt", (n - 2) / n, ((1, 1, n + 1),)),
        R("e4", (n - 2) / (4 * n * n), ((1, 1, n),)),
        # mass coefficients, normalized by 4n(n-1)
        R("d1", (n - 1) / n, ((1, (n - 2) / 2, n),)),
        R("d2", (n - 2) * (n - 1) / n, ((1, (n - 2) / 2, n),)),
    ]
    return {r.name: r for r in reg}


def integrand(name: str, n: int) -> RadialIntegrand:
    _check_dim(n)
    try:
        return _registry(n)[name]
    except KeyError:
        raise KeyError(f"unknown constant {name!r}") from None


def _check_dim(n: int) -> None:
    if n not in SUPPORTED_DIMS:
        raise ValueError(f"dimension must be one of {SUPPORTED_DIMS}, got {n}")


def radial_integral(f: RadialIntegrand | str, n: int, rtol: float = 1e-12) -> float:
    """``omega_{n-1} * int_0^inf f(r) r^(n-1) dr`` by adaptive quadrature."""
    _check_dim(n)
    if isinstance(f, str):
        f = integrand(f, n)
    if f.decay_exponent() <= n:
        raise DivergentIntegralError(
            f"{f.name}: decay r^-{f.decay_exponent():g} is not integrable in R^{n}")
    val, _ = gk_semi_infinite(lambda r: f(r) * r ** (n - 1), 0.0, 1.0,
                              epsabs=1e-16, epsrel=rtol)
    return float(sphere_area(n - 1) * val)


def beta_closed_form(f: RadialIntegrand | str, n: int) -> float:
    """Closed form through ``int_0^inf r^(s-1)(1+r^2)^-b dr = B(s/2, b-s/2)/2``."""
    if isinstance(f, str):
        f = integrand(f, n)
    tot = 0.0
    for c, a, b in f.terms:
        s = 2 * a + n
        tot += c * 0.5 * beta_fn(s / 2, b - s / 2)
    return float(sphere_area(n - 1) * f.prefactor * tot)


@dataclass
class ConstantsTable:
    dim: int
    values: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def as_flat_dict(self) -> dict[str, float]:
        return {"dim": self.dim, **self.values}


def constants_table(n: int) -> ConstantsTable:
    """All constants for dimension ``n`` together with the derived ratios."""
    _check_dim(n)
    v = {name: radial_integral(f, n) for name, f in _registry(n).items()}
    v["gamma1"] = v["e1"] / v["c1"]
    v["gamma2"] = v["e2"] / v["c2"]
    v["gamma3"] = v["e3"] / v["c3"]
    v["gamma4"] = v["e4"] / v["c3"]
    v["gamma_d1"] = v["d1"] / v["c1"]
    v["gamma_d2"] = v["d2"] / v["c2"]
    v["gamma3_over_gamma2"] = v["gamma3"] / v["gamma2"]
    # coefficients of the omega > 0 expansion
    v["d1_omega"] = v["b1"]
    v["d2_omega"] = v["b2"]
    v["d3_omega"] = v["e3"]
    # Yamabe invariant of the round sphere, 4n(n-1) c1^(2/n)
    v["c0"] = 4 * n * (n - 1) * v["c1"] ** (2 / n)
    return ConstantsTable(n, v)


def verify_identities(table: ConstantsTable) -> dict[str, float]:
    """Residuals of the structural identities and of the Beta oracle.

    Keys ending in ``_rel`` are relative errors against the closed form.
    """
    n = table.dim
    v = table.values
    res = {
        "b2_minus_b3": v["b2"] - v["b3"],
        "b2_alt": v["b2"] - v["b2_alt"],
        "b3_alt": v["b3"] - v["b3_alt"],
        "b2_over_b1": v["b2"] / v["b1"] - (n - 2) / 2,
        "e3_forms": v["e3"] - v["e3_alt"],
        "gamma3_over_gamma2": v["gamma3_over_gamma2"] - (n - 2),
        "c0_sphere": v["c0"] - n * (n - 1) * sphere_area(n) ** (2 / n),
    }
    for name in _registry(n):
        exact = beta_closed_form(name, n)
        res[f"{name}_rel"] = (v[name] - exact) / exact
    return res
