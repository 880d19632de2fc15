from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from curvflow.constants import constants_table
from curvflow.geometry import KSpec, ModelSpace
from curvflow.shadow import (BubbleEnsemble, LyapunovSpec, ShadowConfig, ShadowRegimeError,
                             ShadowState, config_from_json, cutoff, integrate, leading_energy,
                             lock_alpha, lyapunov, lyapunov_monotonicity, random_case,
                             scenario_checks, shadow_rhs, smooth_step)


def one(cfg: ShadowConfig, pt, lam: float) -> ShadowState:
    pts = np.atleast_2d(np.asarray(pt, dtype=float))
    return ShadowState(0.0, BubbleEnsemble(lock_alpha(cfg, pts), pts, [lam]))


def test_single_bubble_mass_drift():
    # one bubble, K = 1, H = 1: dln(lambda)/dt = -(r/k) (d2/c2) / lambda
    cfg = ShadowConfig(ModelSpace(3), KSpec.constant(1.0, 3), H=1.0)
    d = shadow_rhs(one(cfg, [0, 0, 0], 100.0), cfg)
    tab = constants_table(3)
    rk = tab["c0"]
    assert d.r_over_k == pytest.approx(rk)
    assert d.dlog_lam[0] == pytest.approx(-rk * tab["d2"] / tab["c2"] / 100.0, rel=1e-12)
    assert d.dlog_lam[0] == pytest.approx(-5.9517, abs=1e-4)
    assert np.allclose(d.da, 0) and np.allclose(d.dlog_alpha, 0, atol=1e-12)


def test_fixed_point_balances_mass_and_laplacian():
    # n = 4, K = 1 - |x|^2 at the origin: Delta K = -8, so H = 8 e2/d2 balances
    n = 4
    mons = [(1.0, [0] * 4)] + [(-1.0, [0] * k + [2] + [0] * (3 - k)) for k in range(4)]
    K = KSpec([m[0] for m in mons], [m[1] for m in mons])
    tab = constants_table(n)
    cfg = ShadowConfig(ModelSpace(n), K, H=8 * tab["e2"] / tab["d2"])
    d = shadow_rhs(one(cfg, np.zeros(4), 50.0), cfg)
    assert abs(d.dlog_lam[0]) < 1e-13
    assert np.allclose(d.da, 0)


def test_lock_is_stationary_for_amplitudes():
    cfg = ShadowConfig(ModelSpace(5), KSpec([1.0, 0.1], [[0] * 5, [2, 0, 0, 0, 0]]), H=0.5)
    st = one(cfg, [0.2, 0, 0, 0, 0], 1e3)
    assert abs(shadow_rhs(st, cfg).dlog_alpha[0]) < 1e-12
    off = ShadowState(0.0, BubbleEnsemble(st.bubbles.alpha * 1.01, st.bubbles.pts, [1e3]))
    assert shadow_rhs(off, cfg).dlog_alpha[0] < 0


def test_regime_errors():
    cfg = ShadowConfig(ModelSpace(3), KSpec.constant(1.0, 3), H=1.0)
    with pytest.raises(ShadowRegimeError):
        shadow_rhs(one(cfg, [0, 0, 0], 0.5), cfg)
    pts = np.array([[0, 0, 0], [1e-3, 0, 0]])
    st = ShadowState(0.0, BubbleEnsemble([1.0, 1.0], pts, [10.0, 10.0]))
    with pytest.raises(ShadowRegimeError):
        shadow_rhs(st, cfg)


def test_integrate_stops_on_lambda_floor():
    cfg = ShadowConfig(ModelSpace(3), KSpec.constant(1.0, 3), H=1.0)
    tr = integrate(one(cfg, [0, 0, 0], 5.0), cfg, 10.0, n_out=11)
    assert tr.status == "lambda_below_min"
    assert tr.lam[-1, 0] <= 1.0 + 1e-9
    # for one bubble with K = 1: d lambda/dt = -rk d2/c2, a straight line
    slope = constants_table(3)["c0"] * constants_table(3)["d2"] / constants_table(3)["c2"]
    assert tr.lam[1, 0] == pytest.approx(5.0 - slope * tr.t[1], rel=1e-9)


def test_sphere_points_stay_on_sphere(tmp_path):
    K = KSpec([1.0, 0.2, 0.1], [[0] * 4, [2, 0, 0, 0], [0, 1, 1, 0]])
    cfg = ShadowConfig(ModelSpace(3, "sphere"), K, H=0.0)
    pts = np.array([[0.3, 0.1, 0.0, 1.0], [-0.2, 0.4, 0.1, 1.0]])
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    st = ShadowState(0.0, BubbleEnsemble(lock_alpha(cfg, pts), pts, [300.0, 400.0]))
    tr = integrate(st, cfg, 0.5, n_out=6)
    assert np.allclose(np.linalg.norm(tr.pts, axis=2), 1.0, atol=1e-14)
    p = tmp_path / "traj.csv"
    tr.to_csv(p)
    rows = list(csv.DictReader(open(p)))
    assert len(rows) == 2 * len(tr)
    assert set(rows[0]) == {"t", "i", "alpha", "lambda", "a_1", "a_2", "a_3", "a_4"}


def test_smooth_step_and_cutoff():
    x = np.linspace(-1, 2, 301)
    s = smooth_step(x)
    assert s[0] == 0 and s[-1] == 1 and np.all(np.diff(s) >= 0)
    assert smooth_step(np.array([0.5]))[0] == pytest.approx(0.5)
    assert np.max(np.diff(s) / np.diff(x)) <= 2.0 + 1e-9
    c = cutoff(np.array([1e-3, 1.5e-3, 2e-3]), 1e-3)
    assert c[0] == 0 and c[2] == 1 and 0 < c[1] < 1


def test_lyapunov_ordering_weights():
    cfg = ShadowConfig(ModelSpace(3), KSpec.constant(1.0, 3), H=1.0)
    pts = np.array([[0.1, 0, 0], [-0.1, 0, 0]])
    st = ShadowState(0.0, BubbleEnsemble([1, 1], pts, [10.0, 100.0]))
    spec = LyapunovSpec("n3", 10.0)
    # key 1/lambda: the larger key (lambda = 10) gets weight C
    expect = 10 * math.log(1 / 10) + 100 * math.log(1 / 100)
    assert lyapunov(st, cfg, spec) == pytest.approx(expect)
    with pytest.raises(ValueError):
        lyapunov(st, cfg, LyapunovSpec("n4", 10.0))
    with pytest.raises(ValueError):
        LyapunovSpec("n3", 1.0)


@pytest.mark.parametrize("kind", ["n3", "n4", "n5", "omega-positive"])
def test_random_cases_monotone(kind):
    for i in range(5):
        st, cfg, spec = random_case(kind, np.random.default_rng([99, i]))
        tr = integrate(st, cfg, 0.5, n_out=51)
        rep = lyapunov_monotonicity(tr, cfg, spec)
        assert rep.passed, (kind, i, rep.min_increment)


def test_scenario_checks_flag_shrinking_lambda():
    cfg = ShadowConfig(ModelSpace(5), KSpec.constant(1.0, 5), H=1.0)
    tr = integrate(one(cfg, [0.01] * 5, 50.0), cfg, 1e-3, n_out=11)
    checks = scenario_checks(tr, gamma=1.0)
    assert not checks["lambda_increasing"][0]


def test_scaled_config():
    cfg = ShadowConfig(ModelSpace(4), KSpec.constant(1.0, 4), mode="with-solution",
                       omega=KSpec.constant(1.0, 4), alpha_sol=2.0, r_over_k="frozen",
                       frozen_value=10.0)
    s = cfg.scaled(2.0)
    assert s.K.value(np.zeros((1, 4)))[0] == pytest.approx(2.0)
    assert s.alpha_sol == pytest.approx(2.0 * 2 ** -0.25)
    assert s.frozen_value == pytest.approx(10.0 / math.sqrt(2))


def test_leading_energy_two_bubbles():
    cfg = ShadowConfig(ModelSpace(3), KSpec.constant(1.0, 3))
    c0 = constants_table(3)["c0"]
    assert leading_energy(cfg, np.ones(2)) == pytest.approx(c0 * 2 ** (2 / 3))


def test_config_from_json():
    obj = {"dim": 3, "bubbles": [{"a": [0.1, 0, 0], "lambda": 100}], "t_end": 1.0, "H": 1.0}
    st, cfg, opts = config_from_json(obj)
    assert opts["t_end"] == 1.0 and cfg.H == 1.0 and st.size == 1
    with pytest.raises(ValueError, match="unknown"):
        config_from_json({**obj, "speed": 1})
    with pytest.raises(ValueError, match="bubbles"):
        config_from_json({"dim": 3, "t_end": 1.0})
    with pytest.raises(ValueError):
        config_from_json({**obj, "bubbles": [{"a": [0, 0], "lambda": 10}]})


def test_critical_distance_shrinks_toward_maximum():
    from curvflow.geometry import KSpec, ModelSpace, critical_points
    from curvflow.shadow import (BubbleEnsemble, ShadowConfig, ShadowState, critical_distance,
                                 integrate, lock_alpha)
    sp = ModelSpace(3, "flat")
    K = KSpec([1.0, -0.2, -0.2, -0.2], [[0, 0, 0], [2, 0, 0], [0, 2, 0], [0, 0, 2]])
    cfg = ShadowConfig(sp, K, H=1.0)
    pts = np.array([[0.3, -0.2, 0.1]])
    st = ShadowState(0.0, BubbleEnsemble(lock_alpha(cfg, pts), pts, [50.0]))
    traj = integrate(st, cfg, 1.0, n_out=11)
    d = critical_distance(traj, critical_points(K, sp))
    assert d[-1] < d[0]
    assert np.all(np.diff(d) <= 1e-12)
