from __future__ import annotations

import numpy as np
import pytest

from curvflow.energy import (DomainError, J_value, PolarGrid, ScalarField, curvature,
                             first_variation, k_values, normalize, second_variation,
                             yamabe_sphere)
from curvflow.geometry import KSpec


def field(n: int, size: int = 128, amp: float = 0.3) -> ScalarField:
    g = PolarGrid.uniform(n, size)
    return ScalarField(g, 1.0 + amp * np.cos(g.theta))


def tilt(n: int, c: float = 0.2) -> KSpec:
    return KSpec([1.0, c], [[0] * (n + 1), [0] * n + [1]])


@pytest.mark.parametrize("n", [3, 4, 5])
def test_constant_field_is_yamabe_minimizer(n):
    f = field(n, amp=0.0)
    c = curvature(f, 1.0)
    assert c.J == pytest.approx(yamabe_sphere(n), rel=1e-13)
    assert np.allclose(c.R, n * (n - 1), rtol=1e-12)
    assert c.deltaJ < 1e-10
    assert J_value(field(n), 1.0) > c.J


@pytest.mark.parametrize("n", [3, 4, 5])
def test_curvature_consistency(n):
    f = field(n)
    K = tilt(n)
    c = curvature(f, K)
    u = f.values
    # r = int R u^(2n/(n-2)) exactly in the discrete setting
    assert c.r == pytest.approx(float(np.sum(f.weights * c.R * u ** (2 * n / (n - 2)))), rel=1e-13)
    assert c.J == pytest.approx(J_value(f, K), rel=1e-14)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_scale_invariance_and_normalize(n):
    f = field(n)
    K = tilt(n)
    assert J_value(f.with_values(3.7 * f.values), K) == pytest.approx(J_value(f, K), rel=1e-13)
    g = normalize(f, K)
    assert curvature(g, K).k == pytest.approx(1.0, abs=1e-14)


def test_variations_fd():
    rng = np.random.default_rng(3)
    f = field(4, 64)
    K = tilt(4)
    v = np.cos(2 * f.theta) + 0.1 * rng.normal(size=64)
    w = np.sin(f.theta)
    h = 1e-6
    fd = (J_value(f.with_values(f.values + h * v), K)
          - J_value(f.with_values(f.values - h * v), K)) / (2 * h)
    assert first_variation(f, K, v) == pytest.approx(fd, rel=1e-7)
    d1 = lambda s: first_variation(f.with_values(f.values + s * w), K, v)  # noqa: E731
    fd2 = (d1(h) - d1(-h)) / (2 * h)
    assert second_variation(f, K, v, w) == pytest.approx(fd2, rel=1e-6)
    assert second_variation(f, K, v, w) == second_variation(f, K, w, v)


def test_scaling_direction_is_null():
    # J is 0-homogeneous, so dJ(u) u = 0
    f = field(5)
    assert abs(first_variation(f, tilt(5), f.values)) < 1e-12


def test_domain_errors():
    g = PolarGrid.uniform(3, 16)
    with pytest.raises(DomainError):
        ScalarField(g, -np.ones(16))
    with pytest.raises(DomainError):
        ScalarField(g, np.full(16, np.nan))
    with pytest.raises(ValueError):
        PolarGrid(3, np.array([0.0, 1.0, 2.0]))
    with pytest.raises(ValueError):
        k_values(KSpec([1.0, 0.1], [[0, 0, 0, 0], [1, 0, 0, 0]]), g)


def test_csv_roundtrip(tmp_path):
    f = field(3, 32)
    p = tmp_path / "u.csv"
    f.to_csv(p)
    g = ScalarField.from_csv(p, 3)
    assert np.array_equal(g.values, f.values)
    assert np.array_equal(g.theta, f.theta)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_cell_volumes(n):
    from curvflow.constants import sphere_area
    for g in (PolarGrid.uniform(n, 3), PolarGrid.clustered(n, 4000, 5.0)):
        assert g.weights.sum() == pytest.approx(sphere_area(n), rel=1e-14)
        assert np.all(g.weights > 0)
    # the first cell of a strongly clustered grid is tiny but accurate
    g = PolarGrid.clustered(n, 4000, 5.0)
    a = g.faces[1]
    assert g.weights[0] == pytest.approx(sphere_area(n - 1) * a ** n / n, rel=1e-6)
