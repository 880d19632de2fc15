from __future__ import annotations

import numpy as np
import pytest

from curvflow import _pykernels, kernels

ext = pytest.importorskip("curvflow._ckernels")


def data(rng, m=50):
    return (rng.uniform(-1, 0, m - 1), 3 + rng.uniform(0, 1, m), rng.uniform(-1, 0, m - 1),
            rng.normal(size=m))


def test_backend_name():
    assert kernels.BACKEND in ("compiled", "python")


def test_tridiag_agree_and_solve():
    rng = np.random.default_rng(0)
    sub, d, sup, rhs = data(rng)
    x = ext.tridiag_solve(sub, d, sup, rhs)
    A = np.diag(d) + np.diag(sub, -1) + np.diag(sup, 1)
    assert np.allclose(A @ x, rhs, atol=1e-13)
    assert np.allclose(_pykernels.tridiag_solve(sub, d, sup, rhs), x, rtol=1e-13, atol=1e-14)


def test_fv_apply_agree():
    rng = np.random.default_rng(1)
    t, mass, u = rng.uniform(size=49), rng.uniform(size=50), rng.uniform(size=50)
    assert np.allclose(ext.fv_apply(t, mass, u), _pykernels.fv_apply(t, mass, u), rtol=1e-14)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_pair_table_agree(n):
    rng = np.random.default_rng(n)
    lam = 10 ** rng.uniform(1, 3, 4)
    pts = rng.uniform(-0.5, 0.5, (4, n + 1))
    a = ext.pair_table(lam, pts, n)
    b = _pykernels.pair_table(lam, pts, n)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-13, atol=1e-300)


def test_fallback_selected_by_env():
    import os
    import subprocess
    import sys
    code = ("from curvflow import kernels; from curvflow.pdeflow import FlowConfig, run;"
            "from curvflow.geometry import KSpec;"
            "d, s = run(FlowConfig(3, KSpec.constant(1.0, 4), grid_size=32, t_end=0.01));"
            "print(kernels.BACKEND, round(s.curv.J, 9))")
    outs = []
    for flag in ("1", "0"):
        env = {**os.environ, "CURVFLOW_PURE_PYTHON": flag}
        r = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
        assert r.returncode == 0, r.stderr
        outs.append(r.stdout.split())
    assert outs[0][0] == "python" and outs[1][0] == "compiled"
    assert outs[0][1] == outs[1][1]
