"""Hot numeric kernels for the coupled device/network DAE.

Variable (and equation-row) layout for ``nd`` devices and ``nn`` non-device
buses::

    [ln v (nd) | theta (nd) | e (nn) | f (nn) | rho (nd) | omega (nd)]

Rows in the same blocks hold the kinematics (``ln v' = wb rho``,
``theta' = wb (omega - 1)``), the active/reactive balance of each non-device
bus, and the two GSC rows ``g = s~ - s~_o - D (eta - eta_o) - K (u - u_o)``
with ``s~ = [q, p]`` (rho row driven by reactive, omega row by active power)
or ``[p, q]`` for the dual ordering.
A trapezoidal step solves ``E (w1 - w0) - h/2 dmask (F1 + F0) + amask F1 = 0``
where ``E`` carries the identity on the kinematic rows and the device inertia
on the differential GSC rows.

All functions go through :func:`gscsim._accel.njit`; with numba disabled the
same code runs as vectorized numpy.
"""
import numpy as np

from ._accel import njit

DIVERGED_NEWTON = 1
DIVERGED_BOUNDS = 2


@njit
def bus_voltages(w, dev_bus, nd_bus, nb):
    nd = dev_bus.shape[0]
    nn = nd_bus.shape[0]
    V = np.zeros(nb, dtype=np.complex128)
    lv = w[0:nd]
    th = w[nd:2 * nd]
    V[dev_bus] = np.exp(lv) * (np.cos(th) + 1j * np.sin(th))
    V[nd_bus] = w[2 * nd:2 * nd + nn] + 1j * w[2 * nd + nn:2 * nd + 2 * nn]
    return V


@njit
def _device_rows(sp, sq, w, nd, nn, M, D, K, dual, uo, so):
    lv = w[0:nd]
    th = w[nd:2 * nd]
    rho = w[2 * nd + 2 * nn:3 * nd + 2 * nn]
    om = w[3 * nd + 2 * nn:4 * nd + 2 * nn]
    dp = sp - so[:, 0]
    dq = sq - so[:, 1]
    s1 = np.where(dual, dp, dq)
    s2 = np.where(dual, dq, dp)
    dl = lv - uo[:, 0]
    dt = th - uo[:, 1]
    dw = om - 1.0
    g1 = s1 - D[:, 0, 0] * rho - D[:, 0, 1] * dw - K[:, 0, 0] * dl - K[:, 0, 1] * dt
    g2 = s2 - D[:, 1, 0] * rho - D[:, 1, 1] * dw - K[:, 1, 0] * dl - K[:, 1, 1] * dt
    return g1, g2


@njit
def eval_f(w, Y, dev_bus, nd_bus, pl, ql, M, D, K, dual, uo, so, wb):
    """Right-hand side F(w) and the absorbed device powers (nd, 2).

    ``M``, ``D``, ``K`` and ``so`` are in system base (already scaled by
    the device ratings).
    """
    nb = Y.shape[0]
    nd = dev_bus.shape[0]
    nn = nd_bus.shape[0]
    V = bus_voltages(w, dev_bus, nd_bus, nb)
    S = V * np.conj(Y @ V)
    F = np.empty(4 * nd + 2 * nn)
    sp = -(S[dev_bus].real + pl[dev_bus])
    sq = -(S[dev_bus].imag + ql[dev_bus])
    F[0:nd] = wb * w[2 * nd + 2 * nn:3 * nd + 2 * nn]
    F[nd:2 * nd] = wb * (w[3 * nd + 2 * nn:4 * nd + 2 * nn] - 1.0)
    F[2 * nd:2 * nd + nn] = S[nd_bus].real + pl[nd_bus]
    F[2 * nd + nn:2 * nd + 2 * nn] = S[nd_bus].imag + ql[nd_bus]
    g1, g2 = _device_rows(sp, sq, w, nd, nn, M, D, K, dual, uo, so)
    F[2 * nd + 2 * nn:3 * nd + 2 * nn] = g1
    F[3 * nd + 2 * nn:] = g2
    sabs = np.empty((nd, 2))
    sabs[:, 0] = sp
    sabs[:, 1] = sq
    return F, sabs


@njit
def eval_fj(w, Y, dev_bus, nd_bus, var_bus, pl, ql, M, D, K, dual, uo, so, wb):
    """F(w), its analytic Jacobian and the absorbed device powers."""
    nb = Y.shape[0]
    nd = dev_bus.shape[0]
    nn = nd_bus.shape[0]
    n = 4 * nd + 2 * nn
    nv = 2 * nd + 2 * nn
    V = bus_voltages(w, dev_bus, nd_bus, nb)
    I = Y @ V
    S = V * np.conj(I)

    F = np.empty(n)
    sp = -(S[dev_bus].real + pl[dev_bus])
    sq = -(S[dev_bus].imag + ql[dev_bus])
    F[0:nd] = wb * w[2 * nd + 2 * nn:3 * nd + 2 * nn]
    F[nd:2 * nd] = wb * (w[3 * nd + 2 * nn:n] - 1.0)
    F[2 * nd:2 * nd + nn] = S[nd_bus].real + pl[nd_bus]
    F[2 * nd + nn:nv] = S[nd_bus].imag + ql[nd_bus]
    g1, g2 = _device_rows(sp, sq, w, nd, nn, M, D, K, dual, uo, so)
    F[nv:nv + nd] = g1
    F[nv + nd:] = g2

    # dV/dvar: V for ln v, jV for theta, 1 for e, j for f
    c = np.empty(nv, dtype=np.complex128)
    c[0:nd] = V[dev_bus]
    c[nd:2 * nd] = 1j * V[dev_bus]
    c[2 * nd:2 * nd + nn] = 1.0 + 0j
    c[2 * nd + nn:] = 1j
    dS = V.reshape(nb, 1) * np.conj(Y[:, var_bus] * c.reshape(1, nv))
    cI = np.conj(I)
    for k in range(nv):
        dS[var_bus[k], k] += c[k] * cI[var_bus[k]]

    J = np.zeros((n, n))
    for k in range(nd):
        J[k, nv + k] = wb
        J[nd + k, nv + nd + k] = wb
    for j in range(nn):
        J[2 * nd + j, 0:nv] = dS[nd_bus[j]].real
        J[2 * nd + nn + j, 0:nv] = dS[nd_bus[j]].imag
    for k in range(nd):
        dp = -dS[dev_bus[k]].real
        dq = -dS[dev_bus[k]].imag
        r1 = nv + k
        r2 = nv + nd + k
        if dual[k]:
            J[r1, 0:nv] = dp
            J[r2, 0:nv] = dq
        else:
            J[r1, 0:nv] = dq
            J[r2, 0:nv] = dp
        J[r1, k] -= K[k, 0, 0]
        J[r1, nd + k] -= K[k, 0, 1]
        J[r1, nv + k] -= D[k, 0, 0]
        J[r1, nv + nd + k] -= D[k, 0, 1]
        J[r2, k] -= K[k, 1, 0]
        J[r2, nd + k] -= K[k, 1, 1]
        J[r2, nv + k] -= D[k, 1, 0]
        J[r2, nv + nd + k] -= D[k, 1, 1]

    sabs = np.empty((nd, 2))
    sabs[:, 0] = sp
    sabs[:, 1] = sq
    return F, J, sabs


@njit
def newton_step(w0, F0, h, E, amask, dmask, Y, dev_bus, nd_bus, var_bus, pl, ql,
                M, D, K, dual, uo, so, wb, xtol, max_iter):
    """One implicit trapezoidal step (``h = 0`` re-solves the algebraic part).

    Returns ``(w1, F1, sabs1, iterations, ok)``.
    """
    w = w0.copy()
    n = w.shape[0]
    hh = 0.5 * h
    ok = False
    it = 0
    for it in range(1, max_iter + 1):
        F1, J1, sabs = eval_fj(w, Y, dev_bus, nd_bus, var_bus, pl, ql, M, D, K, dual, uo, so, wb)
        R = E @ (w - w0) - hh * dmask * (F1 + F0) + amask * F1
        JS = E + (amask - hh * dmask).reshape(n, 1) * J1
        if not np.all(np.isfinite(R)):
            break
        dx = np.linalg.solve(JS, -R)
        w = w + dx
        if np.max(np.abs(dx)) <= xtol:
            ok = True
            break
    F1, sabs = eval_f(w, Y, dev_bus, nd_bus, pl, ql, M, D, K, dual, uo, so, wb)
    if not np.all(np.isfinite(F1)):
        ok = False
    return w, F1, sabs, it, ok


@njit
def simulate_kernel(w_init, h, n_steps, event_step, decim, E, amask, dmask, Y, dev_bus,
                    nd_bus, var_bus, pl0, ql0, pl1, ql1, M, D, K, dual, uo, so, wb,
                    xtol, max_iter, lnv_max, dw_max):
    """Fixed-step trapezoidal integration with one load-change event.

    The event is applied after step ``event_step`` (both the pre- and
    post-event samples are recorded at that instant). Returns the recorded
    step indices, states, absorbed powers, the sample count, a status code
    (0 completed, 1 Newton failure, 2 bounds exceeded) and the Newton
    iteration total.
    """
    nd = dev_bus.shape[0]
    n = w_init.shape[0]
    cap = n_steps // decim + 4
    steps = np.empty(cap, dtype=np.int64)
    W = np.empty((cap, n))
    SA = np.empty((cap, nd, 2))

    pl = pl0.copy()
    ql = ql0.copy()
    w = w_init.copy()
    F, sabs = eval_f(w, Y, dev_bus, nd_bus, pl, ql, M, D, K, dual, uo, so, wb)
    m = 0
    steps[m] = 0
    W[m] = w
    SA[m] = sabs
    m += 1
    status = 0
    iters = 0
    if event_step == 0:
        pl = pl1.copy()
        ql = ql1.copy()
        w, F, sabs, it, ok = newton_step(w, F, 0.0, E, amask, dmask, Y, dev_bus, nd_bus,
                                         var_bus, pl, ql, M, D, K, dual, uo, so, wb,
                                         xtol, max_iter)
        iters += it
        steps[m] = 0
        W[m] = w
        SA[m] = sabs
        m += 1
        if not ok:
            return steps, W, SA, m, DIVERGED_NEWTON, iters
    for k in range(1, n_steps + 1):
        w, F, sabs, it, ok = newton_step(w, F, h, E, amask, dmask, Y, dev_bus, nd_bus,
                                         var_bus, pl, ql, M, D, K, dual, uo, so, wb,
                                         xtol, max_iter)
        iters += it
        if not ok:
            status = DIVERGED_NEWTON
        else:
            lv = w[0:nd]
            om = w[n - nd:n]
            if np.max(np.abs(lv)) > lnv_max or np.max(np.abs(om - 1.0)) > dw_max:
                status = DIVERGED_BOUNDS
        if status != 0 or k % decim == 0 or k == n_steps or k == event_step:
            steps[m] = k
            W[m] = w
            SA[m] = sabs
            m += 1
        if status != 0:
            break
        if k == event_step:
            pl = pl1.copy()
            ql = ql1.copy()
            w, F, sabs, it, ok = newton_step(w, F, 0.0, E, amask, dmask, Y, dev_bus, nd_bus,
                                             var_bus, pl, ql, M, D, K, dual, uo, so, wb,
                                             xtol, max_iter)
            iters += it
            steps[m] = k
            W[m] = w
            SA[m] = sabs
            m += 1
            if not ok:
                status = DIVERGED_NEWTON
                break
    return steps, W, SA, m, status, iters
