from __future__ import annotations

import numpy as np
import pytest

from curvflow.ode import StepSizeUnderflow, dopri54


def test_harmonic_oscillator():
    t = np.linspace(0, 10, 11)
    res = dopri54(lambda s, y: np.array([y[1], -y[0]]), 0.0, [1.0, 0.0], t)
    y = np.array(res.y)
    assert res.status == "done"
    assert np.allclose(res.t, t, rtol=0, atol=0)
    assert np.max(np.abs(y[:, 0] - np.cos(t))) < 1e-8


def test_exponential_order():
    res = dopri54(lambda s, y: -2 * y, 0.0, [1.0], [1.0], rtol=1e-12, atol=1e-14)
    assert res.y[-1][0] == pytest.approx(np.exp(-2.0), rel=1e-10)


def test_stop_and_projection():
    def proj(t, y):
        return y / np.linalg.norm(y)
    res = dopri54(lambda s, y: np.array([-y[1], y[0]]), 0.0, [1.0, 0.0], np.linspace(0, 5, 6),
                  after_step=proj, stop=lambda t, y: "crossed" if y[1] < 0 else None)
    assert res.status == "crossed"
    assert res.t[-1] == pytest.approx(np.pi, abs=0.5)
    assert all(abs(np.linalg.norm(y) - 1) < 1e-14 for y in res.y[1:])


def test_blowup_underflows():
    with pytest.raises(StepSizeUnderflow):
        dopri54(lambda s, y: y * y, 0.0, [1.0], [2.0])


def test_bad_output_times():
    with pytest.raises(ValueError):
        dopri54(lambda s, y: y, 0.0, [1.0], [1.0, 0.5])
