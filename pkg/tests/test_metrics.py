import math

import numpy as np
import pytest

from gscsim.metrics import (MetricWeights, OperatingPoints, coi_frequency, coi_weights,
                            energy_decomposition, estimate_cf, mu_ts)
from gscsim.netmodel import LoadStep
from gscsim.tds import SimOptions, Trajectory, initialize, simulate

WB = 2 * math.pi * 60


def test_weights_parse():
    w = MetricWeights.parse("kt_w=2, ks_v=0.5")
    assert (w.kt_omega, w.kt_rho, w.ks_omega, w.ks_v) == (2, 1, 1, 0.5)
    with pytest.raises(ValueError):
        MetricWeights.parse("bogus=1")
    with pytest.raises(ValueError):
        MetricWeights(kt_omega=-1)


def test_exponential_decay_transient():
    t = np.linspace(0.0, 20.0, 200001)
    tr = Trajectory.synthetic(t, 1.0 + 0.01 * np.exp(-t))
    m = mu_ts(tr, points=OperatingPoints.uniform(1), t_start=0.0)
    assert m.mu_t == pytest.approx(5e-5 * (1 - math.exp(-40)), rel=1e-6)
    assert m.mu_s == 0.0


def test_equilibrium_trajectory_zero():
    t = np.linspace(0.0, 5.0, 101)
    tr = Trajectory.synthetic(t, np.full((101, 3), 0.99), v=np.full((101, 3), 1.02))
    assert mu_ts(tr).mu_ts == 0.0


def test_constant_offset_fixture():
    t = np.linspace(0.0, 5.0, 101)
    tr = Trajectory.synthetic(t, np.ones((101, 3)))
    pts = OperatingPoints.uniform(3, omega_o=1.01, omega_f=1.0)
    m = mu_ts(tr, points=pts)
    assert m.mu_s == pytest.approx(3e-4, rel=1e-12)
    assert m.mu_t == 0.0


def test_metric_linear_in_weights():
    t = np.linspace(0.0, 3.0, 301)
    tr = Trajectory.synthetic(t, 1.0 + 0.02 * np.exp(-t), rho=0.01 * np.sin(t))
    pts = OperatingPoints.uniform(1, omega_o=1.02, v_f=0.98)
    w = MetricWeights(1.0, 2.0, 3.0, 4.0)
    a = mu_ts(tr, w, pts).mu_ts
    b = mu_ts(tr, w.scaled(2.5), pts).mu_ts
    assert b == pytest.approx(2.5 * a, rel=1e-14)


def test_window_starts_after_event():
    t = np.array([0.0, 0.5, 1.0, 1.0, 1.5, 2.0])
    om = np.array([1.0, 1.0, 1.0, 1.0, 1.1, 1.0])
    tr = Trajectory.synthetic(t, om, events=[1.0])
    m = mu_ts(tr, points=OperatingPoints.uniform(1))
    assert m.t_start == 1.0
    assert m.mu_t == pytest.approx(0.01 * 0.5, rel=1e-12)


def test_metric_rejects_bad_points():
    tr = Trajectory.synthetic(np.linspace(0, 1, 5), np.ones((5, 2)))
    with pytest.raises(ValueError):
        mu_ts(tr, points=OperatingPoints.uniform(3))


def test_metric_on_wscc(wscc_traj, wscc_eq):
    m = mu_ts(wscc_traj, points=OperatingPoints.from_trajectory(wscc_traj, wscc_eq))
    assert m.mu_ts > 0 and m.t_start == 1.0
    assert set(m.table()) == {"mu_t_rho", "mu_t_omega", "mu_t", "mu_s_omega", "mu_s_v", "mu_s",
                              "mu_ts"}
    assert m.mu_s_omega.sum() == pytest.approx(3 * (1 - wscc_eq.omega_f) ** 2)


def test_coi_equal_weights():
    assert coi_frequency([[1.00, 1.02]], [1.0, 1.0])[0] == pytest.approx(1.01, abs=1e-15)


def test_coi_common_frequency_bit_exact(rng):
    om = 1.0 + 1e-3 * rng.standard_normal(50)
    series = np.repeat(om[:, None], 3, axis=1)
    assert np.array_equal(coi_frequency(series, rng.uniform(0.5, 5.0, 3)), om)


def test_coi_weights(wscc):
    w = coi_weights(wscc.devices)
    assert w.shape == (3,) and np.all(w > 0)
    assert np.array_equal(coi_weights(wscc.devices, h=[2, 2, 2]), 2 * np.array(
        [d.sb for d in wscc.devices]))
    with pytest.raises(ValueError):
        coi_frequency([[1.0, 1.0]], [0.0, 0.0])


def test_estimate_cf_exact_phasor():
    t = np.linspace(0.0, 1.0, 2001)
    V = np.exp(0.3 * t) * np.exp(1j * 0.5 * t)
    rho, om = estimate_cf(t, V, WB)
    assert np.allclose(rho, 0.3 / WB, atol=1e-12)
    assert np.allclose(om, 1.0 + 0.5 / WB, atol=1e-12)


def _closure(case, h, decimation=1):
    model, w0, _ = initialize(case)
    ev = LoadStep(5, 0.5, 0.5, 1.0)
    opts = SimOptions(h=h, tf=20.0, decimation=decimation)
    tr = simulate(case, event=ev, options=opts, init=(model, w0))
    return [np.max(np.abs(energy_decomposition(tr, k, model.params[k], model.wb).residual))
            for k in range(model.nd)]


@pytest.mark.parametrize("name", ["wscc9_vsm", "wscc9_vsm_extended", "wscc9_vsm_coupled"])
def test_energy_closure_full_grid(name):
    # the trapezoidal quadrature repeats the integrator's own update
    from gscsim import load_bundled
    assert max(_closure(load_bundled(name), 0.005)) <= 1e-10


def test_energy_closure_sparse_grid_second_order(wscc):
    # on every 4th sample the quadrature error is O(h^2)
    a, b = _closure(wscc, 0.01, 4), _closure(wscc, 0.005, 4)
    for x, y in zip(a, b):
        assert 3.0 < x / y < 5.0
