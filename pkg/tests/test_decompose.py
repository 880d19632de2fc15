from __future__ import annotations

import numpy as np
import pytest

from curvflow.bubbles import bubble_eval
from curvflow.decompose import fit, orthogonality_residuals, pole
from curvflow.energy import PolarGrid, ScalarField
from curvflow.geometry import ModelSpace
from curvflow.shadow import BubbleEnsemble


def pole_field(n, parts, size=2000):
    g = PolarGrid.clustered(n, size, strength=5.0)
    X = g.ambient_points()
    sp = ModelSpace(n, "sphere")
    u = sum(al * bubble_eval(sp, pole(n, north), lam, X) for al, lam, north in parts)
    return ScalarField(g, u)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_exact_single(n):
    r = fit(pole_field(n, [(1.5, 80.0, True)]), 1.0, 1)
    assert r.converged
    assert r.ensemble.alpha[0] == pytest.approx(1.5, rel=1e-10)
    assert r.ensemble.lam[0] == pytest.approx(80.0, rel=1e-10)
    assert r.misfit < 1e-20


def test_two_poles():
    f = pole_field(4, [(1.0, 40.0, True), (2.0, 60.0, False)])
    init = BubbleEnsemble([0.8, 1.5], [pole(4), pole(4, False)], [30.0, 70.0])
    r = fit(f, 1.0, 2, init=init)
    assert r.converged
    assert np.allclose(r.ensemble.alpha, [1.0, 2.0], rtol=1e-9)
    assert np.allclose(r.ensemble.lam, [40.0, 60.0], rtol=1e-9)
    assert len(r.to_json()["eps"]) == 2


def test_scale_equivariance():
    f = pole_field(3, [(1.0, 30.0, True)])
    f = f.with_values(f.values * (1 + 0.02 * np.cos(2 * f.theta)))
    r1 = fit(f, 1.0, 1)
    r2 = fit(f.with_values(3.0 * f.values), 1.0, 1)
    assert r2.ensemble.alpha[0] == pytest.approx(3.0 * r1.ensemble.alpha[0], rel=1e-10)
    assert r2.ensemble.lam[0] == pytest.approx(r1.ensemble.lam[0], rel=1e-10)


def test_orthogonality_at_optimum():
    f = pole_field(5, [(2.0, 50.0, True)])
    f = f.with_values(f.values * (1 + 0.01 * np.cos(f.theta)))
    r = fit(f, 1.0, 1)
    res = orthogonality_residuals(f, r)
    assert np.max(np.abs(res)) < 1e-6 * r.norm_v
    assert np.allclose(r.gradient, -2 * res)


def test_flat_field_hits_bound():
    g = PolarGrid.uniform(3, 256)
    r = fit(ScalarField(g, np.ones(256)), 1.0, 1)
    assert not r.converged
    assert "bound" in r.message


def test_bad_p():
    with pytest.raises(ValueError):
        fit(pole_field(3, [(1.0, 10.0, True)], 64), 1.0, 3)
