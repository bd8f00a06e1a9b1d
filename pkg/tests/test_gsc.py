import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gscsim.gsc import (ComplexFrequency, GscParams, GscState, IllPosedError, droop_equilibrium,
                        gsc_rhs, init_from_powerflow, make_preset)
from gscsim.netmodel import solve_powerflow

WB = 2 * math.pi * 60
VSM = dict(M22=10, D22=50, D11=10, K11=20)
finite = st.floats(-2.0, 2.0, allow_nan=False)


def state(lnv=0.0, th=0.0, rho=0.0, om=1.0):
    return GscState(np.array([lnv, th]), np.array([rho, om]))


def test_vsm_preset_pattern():
    p = make_preset("vsm", VSM)
    assert np.array_equal(p.M, [[0, 0], [0, 10]])
    assert np.array_equal(p.D, np.diag([10, 50]))
    assert np.array_equal(p.K, np.diag([20, 0]))
    assert p.power_order == "normal"
    assert np.count_nonzero(p.M) + np.count_nonzero(p.D) + np.count_nonzero(p.K) == 4


def test_extended_and_coupled_presets():
    e = make_preset("vsm_extended", VSM, M11=2, K22=1)
    assert e.M[0, 0] == 2 and e.K[1, 1] == 1
    c = make_preset("vsm_coupled", VSM, d_c=1)
    assert np.array_equal(c.D, [[10, 1], [1, 50]])
    assert np.array_equal(c.D, c.D.T)


def test_dvsm_differs_only_in_order():
    v, d = make_preset("vsm", VSM), make_preset("dvsm", VSM)
    assert v.same_matrices(d)
    assert d.power_order == "dual"


@pytest.mark.parametrize("kind, vals", [("bogus", VSM), ("vsm", {"M22": 1}),
                                        ("vsm", dict(VSM, D11=0))])
def test_preset_errors(kind, vals):
    with pytest.raises(ValueError):
        make_preset(kind, vals)


def test_ill_posed_patterns():
    with pytest.raises(IllPosedError):
        GscParams(np.zeros((2, 2)), np.eye(2), np.eye(2))
    with pytest.raises(IllPosedError):
        GscParams([[0, 0], [0, 1]], [[0, 0], [0, 1]], np.eye(2))
    with pytest.raises(IllPosedError):
        GscParams([[1, 1], [1, 1]], np.eye(2), np.eye(2))
    # row 2 of M zero with D22 set is a supported pattern
    GscParams([[1, 0], [0, 0]], np.eye(2), np.eye(2))


def test_complex_frequency_finite():
    assert ComplexFrequency(0.1, 1.0).value == 0.1 + 1j
    with pytest.raises(ValueError):
        ComplexFrequency(float("nan"), 1.0)


def test_rhs_zero_at_setpoint():
    p = make_preset("vsm", VSM).with_setpoints([0.02, 0.1], [0.3, -0.2])
    du, deta = gsc_rhs(state(0.02, 0.1), [0.3, -0.2], p)
    assert np.array_equal(du, [0, 0]) and np.array_equal(deta, [0, 0])


def test_vsm_frequency_damping():
    p = make_preset("vsm", M22=1, D22=1, D11=1, K11=1)
    du, deta = gsc_rhs(state(om=1.01), [0.0, 0.0], p)
    assert deta[1] == pytest.approx(-0.01)
    assert du[1] == pytest.approx(WB * 0.01)


def test_dvsm_reactive_drives_frequency():
    p = make_preset("dvsm", M22=2, D22=5, D11=1, K11=1)
    _, deta = gsc_rhs(state(om=1.001), [0.0, 0.1], p)
    assert deta[1] == pytest.approx((0.1 - 5 * 0.001) / 2)


def test_vsm_active_drives_frequency():
    p = make_preset("vsm", M22=2, D22=5, D11=1, K11=1)
    _, deta = gsc_rhs(state(), [0.1, 0.0], p)
    assert deta[1] == pytest.approx(0.05)


@settings(max_examples=60, deadline=None)
@given(a=finite, b=finite, c=finite, d=finite, e=finite)
def test_extended_vsm_decoupled(a, b, c, d, e):
    p = make_preset("vsm_extended", M22=1.5, D22=3, D11=2, K11=4, M11=0.5, K22=0.7)
    s = np.array([0.3, -0.2])
    base = gsc_rhs(state(0.01, 0.02, 0.003, 1.001), s, p)[1]
    # rho row ignores omega and theta; omega row ignores rho and ln v
    r1 = gsc_rhs(state(0.01, 0.02 + a, 0.003, 1.001 + 0.01 * b), s, p)[1]
    r2 = gsc_rhs(state(0.01 + 0.1 * c, 0.02, 0.003 + 0.01 * d, 1.001), s, p)[1]
    assert r1[0] == base[0]
    assert r2[1] == base[1]
    del e


@settings(max_examples=60, deadline=None)
@given(sp=finite, sq=finite, lnv=finite, rho=finite)
def test_dual_equals_swapped_normal(sp, sq, lnv, rho):
    normal = make_preset("vsm", VSM)
    dual = make_preset("dvsm", VSM)
    st_ = state(0.1 * lnv, 0.0, 0.01 * rho, 1.0)
    a = gsc_rhs(st_, [sp, sq], dual)
    b = gsc_rhs(st_, [sq, sp], normal)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_algebraic_row_derivative_reported_zero():
    p = make_preset("vsm", VSM)
    du, deta = gsc_rhs(state(), [0.0, 0.2], p)
    assert deta[0] == 0.0
    assert du[0] == pytest.approx(WB * 0.2 / 10)


def test_init_from_flat_powerflow():
    from gscsim.cases import two_bus_case
    case = two_bus_case(make_preset("vsm", VSM))
    pf = solve_powerflow(case)
    st0, p = init_from_powerflow(pf, case.devices[0], case.devices[0].params)
    assert np.array_equal(p.u_o, [0, 0]) and np.allclose(p.s_o, 0)
    assert np.array_equal(st0.eta, [0, 1])


def test_init_wscc_is_equilibrium(wscc):
    pf = solve_powerflow(wscc)
    for k, d in enumerate(wscc.devices):
        st0, p = init_from_powerflow(pf, d, d.params)
        v, th = pf.voltage(d.bus)
        assert p.u_o[0] == math.log(v) and p.u_o[1] == th
        du, deta = gsc_rhs(st0, p.s_o, p)
        assert np.all(du == 0) and np.all(deta == 0)
    assert math.exp(init_from_powerflow(pf, wscc.devices[1], wscc.devices[1].params)[1].u_o[0]) \
        == pytest.approx(1.025)


def test_init_missing_bus(wscc):
    pf = solve_powerflow(wscc)
    from gscsim.netmodel import Device
    with pytest.raises(KeyError):
        init_from_powerflow(pf, Device("X", 42), make_preset("vsm", VSM))


@pytest.mark.parametrize("devs, dp, expect", [
    ([make_preset("vsm", VSM)], 0.5, -0.01),
    ([make_preset("vsm", VSM)] * 3, 0.5, -1 / 300),
    ([make_preset("vsm", VSM)], 0.0, 0.0),
])
def test_droop_equilibrium(devs, dp, expect):
    assert droop_equilibrium(devs, dp) == pytest.approx(expect, abs=1e-15)


def test_droop_equilibrium_needs_droop():
    with pytest.raises(ValueError):
        droop_equilibrium([make_preset("vsm_extended", VSM, M11=1, K22=1)], 0.5)
