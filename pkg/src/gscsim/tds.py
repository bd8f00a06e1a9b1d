"""Time-domain simulation of GSC devices coupled to a phasor network."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .gsc import algebraic_rows, init_from_powerflow
from .netmodel import LoadStep, NetworkCase, build_ybus, solve_powerflow

DEVICE_SIGNALS = ("lnv", "theta", "rho", "omega", "p", "q")


class SimulationError(RuntimeError):
    pass


class EquilibriumError(RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass
class SimOptions:
    h: float = 0.005
    tf: float = 20.0
    xtol: float = 1e-10
    max_newton: int = 20
    decimation: int = 1
    lnv_max: float = 3.0
    dw_max: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.h < self.tf:
            raise ValueError("need 0 < h < tf")
        if self.decimation < 1 or self.max_newton < 1:
            raise ValueError("decimation and max_newton must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.tf / self.h))


class DaeModel:
    """Flat arrays describing one case with a fixed set of device parameters.

    ``params`` are in device base with setpoints filled in; the kernels see
    ``M, D, K, s_o`` multiplied by each device rating.
    """

    def __init__(self, case: NetworkCase, params):
        self.case = case
        self.params = list(params)
        if len(self.params) != len(case.devices):
            raise ValueError("one GscParams per device required")
        idx = case.bus_index()
        dev_set = {d.bus for d in case.devices}
        self.dev_bus = np.array([idx[d.bus] for d in case.devices], dtype=np.int64)
        self.nd_bus = np.array([idx[b.id] for b in case.buses if b.id not in dev_set], dtype=np.int64)
        self.var_bus = np.concatenate([self.dev_bus, self.dev_bus, self.nd_bus, self.nd_bus])
        self.nb = case.n_bus
        self.nd = len(self.dev_bus)
        self.nn = len(self.nd_bus)
        self.n = 4 * self.nd + 2 * self.nn
        self.Y = np.ascontiguousarray(build_ybus(case))
        self.pl, self.ql = case.load_vectors()
        self.wb = case.omega_b
        sb = np.array([d.sb for d in case.devices], dtype=float)
        self.sb = sb
        self.M = np.array([p.M * s for p, s in zip(self.params, sb)]).reshape(self.nd, 2, 2)
        self.D = np.array([p.D * s for p, s in zip(self.params, sb)]).reshape(self.nd, 2, 2)
        self.K = np.array([p.K * s for p, s in zip(self.params, sb)]).reshape(self.nd, 2, 2)
        self.dual = np.array([p.dual for p in self.params], dtype=np.bool_)
        self.uo = np.array([p.u_o for p in self.params], dtype=float).reshape(self.nd, 2)
        self.so = np.array([p.s_o * s for p, s in zip(self.params, sb)], dtype=float).reshape(self.nd, 2)
        self.alg = np.array([algebraic_rows(p.M, p.D) for p in self.params], dtype=bool).reshape(self.nd, 2)

        nd, nn, n = self.nd, self.nn, self.n
        nv = 2 * nd + 2 * nn
        self.sl_lnv = slice(0, nd)
        self.sl_theta = slice(nd, 2 * nd)
        self.sl_e = slice(2 * nd, 2 * nd + nn)
        self.sl_f = slice(2 * nd + nn, nv)
        self.sl_rho = slice(nv, nv + nd)
        self.sl_omega = slice(nv + nd, n)

        amask = np.zeros(n)
        amask[self.sl_e] = 1.0
        amask[self.sl_f] = 1.0
        amask[self.sl_rho] = self.alg[:, 0]
        amask[self.sl_omega] = self.alg[:, 1]
        self.amask = amask
        self.dmask = 1.0 - amask
        E = np.zeros((n, n))
        for k in range(nd):
            E[k, k] = 1.0
            E[nd + k, nd + k] = 1.0
            for i in (0, 1):
                if not self.alg[k, i]:
                    r = nv + i * nd + k
                    E[r, nv + k] = self.M[k, i, 0]
                    E[r, nv + nd + k] = self.M[k, i, 1]
        self.E = E

    # -- evaluation -----------------------------------------------------
    def _loads(self, loads):
        if loads is None:
            return self.pl, self.ql
        return np.asarray(loads[0], float), np.asarray(loads[1], float)

    def f(self, w, loads=None):
        pl, ql = self._loads(loads)
        return kernels.eval_f(np.ascontiguousarray(w, dtype=float), self.Y, self.dev_bus, self.nd_bus,
                              pl, ql, self.M, self.D, self.K, self.dual, self.uo, self.so, self.wb)

    def fj(self, w, loads=None):
        pl, ql = self._loads(loads)
        return kernels.eval_fj(np.ascontiguousarray(w, dtype=float), self.Y, self.dev_bus, self.nd_bus,
                               self.var_bus, pl, ql, self.M, self.D, self.K, self.dual, self.uo,
                               self.so, self.wb)

    def solve_algebraic(self, w, loads=None, xtol=1e-12, max_iter=30):
        """Re-solve network voltages and algebraic eta rows with u fixed."""
        pl, ql = self._loads(loads)
        F0, _ = self.f(w, (pl, ql))
        w1, F1, sabs, it, ok = kernels.newton_step(
            np.ascontiguousarray(w, dtype=float), F0, 0.0, self.E, self.amask, self.dmask, self.Y,
            self.dev_bus, self.nd_bus, self.var_bus, pl, ql, self.M, self.D, self.K, self.dual,
            self.uo, self.so, self.wb, xtol, max_iter)
        if not ok:
            raise SimulationError("algebraic re-solve failed")
        return w1, sabs

    @property
    def rotation_invariant(self) -> bool:
        """True when no device has stiffness on its angle (K12 = K22 = 0)."""
        return bool(np.all(self.K[:, :, 1] == 0.0))

    # -- packing ----------------------------------------------------------
    def pack(self, lnv, theta, v_nd, rho, omega):
        w = np.empty(self.n)
        w[self.sl_lnv] = lnv
        w[self.sl_theta] = theta
        w[self.sl_e] = np.real(v_nd)
        w[self.sl_f] = np.imag(v_nd)
        w[self.sl_rho] = rho
        w[self.sl_omega] = omega
        return w

    def bus_phasors(self, W):
        """Complex bus voltages for a (n,) or (m, n) array of states."""
        W = np.atleast_2d(W)
        V = np.empty((W.shape[0], self.nb), dtype=complex)
        V[:, self.dev_bus] = np.exp(W[:, self.sl_lnv] + 1j * W[:, self.sl_theta])
        V[:, self.nd_bus] = W[:, self.sl_e] + 1j * W[:, self.sl_f]
        return V

    def eta(self, w):
        return np.stack([w[self.sl_rho], w[self.sl_omega]], axis=1)


def initialize(case: NetworkCase, params=None, pf=None):
    """Power flow plus equilibrium initialization of every device.

    Returns ``(model, w0, pf)`` where ``w0`` is an exact equilibrium of the
    pre-event system.
    """
    if params is None:
        params = [d.params for d in case.devices]
    if any(p is None for p in params):
        raise ValueError("every device needs GSC parameters")
    if pf is None:
        pf = solve_powerflow(case)
    completed = [init_from_powerflow(pf, d, p)[1] for d, p in zip(case.devices, params)]
    model = DaeModel(case, completed)
    V = pf.phasors
    w = model.pack(np.log(pf.v[model.dev_bus]), pf.theta[model.dev_bus], V[model.nd_bus],
                   0.0, 1.0)
    w, _ = model.solve_algebraic(w)
    w[model.sl_rho] = 0.0
    w[model.sl_omega] = 1.0
    _, sabs = model.f(w)
    final = [p.with_setpoints([w[k], w[model.nd + k]], sabs[k] / d.sb)
             for k, (p, d) in enumerate(zip(completed, case.devices))]
    return DaeModel(case, final), w, pf


@dataclass
class Trajectory:
    t: np.ndarray
    device_names: list
    bus_ids: list
    lnv: np.ndarray
    theta: np.ndarray
    rho: np.ndarray
    omega: np.ndarray
    p: np.ndarray
    q: np.ndarray
    bus_v: np.ndarray
    bus_theta: np.ndarray
    events: list = field(default_factory=list)
    status: str = "completed"
    message: str = ""
    states: Optional[np.ndarray] = None
    newton_iterations: int = 0

    @classmethod
    def synthetic(cls, t, omega, rho=None, v=None, theta=None, names=None, events=()):
        """Trajectory from given device series of shape (n, nd); unset signals are flat."""
        t = np.asarray(t, float)
        omega = np.asarray(omega, float).reshape(len(t), -1)
        flat = lambda x, c: np.full_like(omega, c) if x is None else np.asarray(x, float).reshape(omega.shape)
        lnv = np.log(flat(v, 1.0))
        th = flat(theta, 0.0)
        nd = omega.shape[1]
        names = list(names) if names is not None else [f"G{k + 1}" for k in range(nd)]
        zero = np.zeros_like(omega)
        return cls(t, names, list(range(1, nd + 1)), lnv, th, flat(rho, 0.0), omega, zero, zero,
                   np.exp(lnv), th.copy(), list(events))

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def v(self):
        return np.exp(self.lnv)

    @property
    def eta(self):
        """Complex frequency per sample and device, shape (n, nd, 2)."""
        return np.stack([self.rho, self.omega], axis=2)

    def start_index(self, t_start: float) -> int:
        """First sample at or after ``t_start``; the post-event sample on ties."""
        hits = np.nonzero(self.t >= t_start - 1e-12)[0]
        if hits.size == 0:
            raise ValueError(f"t_start={t_start} beyond the trajectory")
        i = hits[0]
        while i + 1 < len(self.t) and self.t[i + 1] == self.t[i]:
            i += 1
        return int(i)

    def columns(self):
        cols = {"time": self.t}
        for k, name in enumerate(self.device_names):
            for sig in DEVICE_SIGNALS:
                cols[f"{name}.{sig}"] = getattr(self, sig)[:, k]
        for j, b in enumerate(self.bus_ids):
            cols[f"bus{b}.v"] = self.bus_v[:, j]
            cols[f"bus{b}.theta"] = self.bus_theta[:, j]
        return cols

    def to_csv(self, path):
        cols = self.columns()
        names = list(cols)
        data = np.column_stack([cols[n] for n in names])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(names)
            for row in data:
                wr.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, events=(), status="completed"):
        with open(path, newline="", encoding="utf-8") as fh:
            rd = csv.reader(fh)
            names = next(rd)
            data = np.array([[float(x) for x in row] for row in rd])
        col = {n: data[:, i] for i, n in enumerate(names)}
        devs, buses = [], []
        for n in names[1:]:
            head, sig = n.rsplit(".", 1)
            if head.startswith("bus") and sig == "v":
                buses.append(int(head[3:]))
            elif sig == "lnv":
                devs.append(head)
        get = lambda sig: np.column_stack([col[f"{d}.{sig}"] for d in devs])
        return cls(col["time"], devs, buses, get("lnv"), get("theta"), get("rho"), get("omega"),
                   get("p"), get("q"),
                   np.column_stack([col[f"bus{b}.v"] for b in buses]),
                   np.column_stack([col[f"bus{b}.theta"] for b in buses]),
                   list(events), status)

    def summary(self):
        return {
            "status": self.status,
            "message": self.message,
            "events": list(self.events),
            "t_final": float(self.t[-1]),
            "samples": int(len(self.t)),
            "final": {
                name: {sig: float(getattr(self, sig)[-1, k]) for sig in DEVICE_SIGNALS}
                for k, name in enumerate(self.device_names)
            },
        }


def _event_step(event: Optional[LoadStep], opts: SimOptions) -> int:
    if event is None:
        return -1
    if not 0.0 <= event.t < opts.tf:
        raise ValueError(f"event time {event.t} outside [0, {opts.tf})")
    k = int(round(event.t / opts.h))
    if abs(k * opts.h - event.t) > 1e-9 * max(1.0, event.t):
        raise ValueError(f"event time {event.t} is not on the step grid (h={opts.h})")
    return k


def simulate(case: NetworkCase, params=None, event: Optional[LoadStep] = None,
             options: Optional[SimOptions] = None, init=None) -> Trajectory:
    """Integrate the device/network DAE from its power-flow equilibrium.

    ``init`` may carry a precomputed ``(model, w0)`` from :func:`initialize`.
    """
    opts = options or SimOptions()
    model, w0 = init if init is not None else initialize(case, params)[:2]
    k_ev = _event_step(event, opts)
    pl0, ql0 = model.pl, model.ql
    pl1, ql1 = event.loads_after(case) if event is not None else (pl0, ql0)
    steps, W, SA, m, status, iters = kernels.simulate_kernel(
        w0, opts.h, opts.n_steps, k_ev, opts.decimation, model.E, model.amask, model.dmask,
        model.Y, model.dev_bus, model.nd_bus, model.var_bus, pl0, ql0, pl1, ql1,
        model.M, model.D, model.K, model.dual, model.uo, model.so, model.wb,
        opts.xtol, opts.max_newton, opts.lnv_max, opts.dw_max)
    return _to_trajectory(model, steps[:m], W[:m], SA[:m], opts, event, status, iters)


def _to_trajectory(model, steps, W, SA, opts, event, status, iters):
    with np.errstate(over="ignore", invalid="ignore"):
        V = model.bus_phasors(W)
    sb = model.sb
    msg = {0: "", kernels.DIVERGED_NEWTON: "Newton iteration failed",
           kernels.DIVERGED_BOUNDS: "state left the admissible range"}[status]
    return Trajectory(
        t=steps * opts.h,
        device_names=[d.name for d in model.case.devices],
        bus_ids=[b.id for b in model.case.buses],
        lnv=W[:, model.sl_lnv].copy(), theta=W[:, model.sl_theta].copy(),
        rho=W[:, model.sl_rho].copy(), omega=W[:, model.sl_omega].copy(),
        p=SA[:, :, 0] / sb, q=SA[:, :, 1] / sb,
        bus_v=np.abs(V), bus_theta=np.angle(V),
        events=[event.t] if event is not None else [],
        status="completed" if status == 0 else "diverged",
        message=msg, states=W, newton_iterations=int(iters))


@dataclass
class Equilibrium:
    w: np.ndarray
    omega_f: float
    rho_f: np.ndarray
    v: np.ndarray            # per bus
    theta: np.ndarray        # per bus
    residual: float
    iterations: int
    sabs: np.ndarray         # (nd, 2) system base

    @property
    def eta(self):
        return np.column_stack([self.rho_f, np.full_like(self.rho_f, self.omega_f)])


def find_equilibrium(case: NetworkCase, params=None, event: Optional[LoadStep] = None,
                     post_event: bool = True, guess=None, init=None,
                     tol: float = 1e-11, max_iter: int = 50) -> Equilibrium:
    """Steady state with every time derivative at zero.

    All devices share one frequency ``omega_f``. When no device has angle
    stiffness, the angle of the first device is pinned to its guess value and
    ``omega_f`` is free; otherwise ``omega_f = 1``.
    """
    model, w0 = init if init is not None else initialize(case, params)[:2]
    loads = event.loads_after(case) if (event is not None and post_event) else (model.pl, model.ql)
    nd, n = model.nd, model.n
    x = np.empty(n + 1)
    x[:n] = w0 if guess is None else guess
    x[n] = float(np.mean(x[model.sl_omega]))
    invariant = model.rotation_invariant
    th_ref = x[nd]
    if not invariant:
        x[n] = 1.0

    def residual(x):
        w = x[:n]
        F, J, sabs = model.fj(w, loads)
        r = F.copy()
        r[model.sl_lnv] = w[model.sl_rho]
        r[model.sl_theta] = w[model.sl_omega] - x[n]
        extra = (w[nd] - th_ref) if invariant else (x[n] - 1.0)
        Jx = np.zeros((n + 1, n + 1))
        Jx[:n, :n] = J
        Jx[model.sl_lnv, :] = 0.0
        Jx[model.sl_theta, :] = 0.0
        for k in range(nd):
            Jx[k, model.sl_rho.start + k] = 1.0
            Jx[nd + k, model.sl_omega.start + k] = 1.0
            Jx[nd + k, n] = -1.0
        if invariant:
            Jx[n, nd] = 1.0
        else:
            Jx[n, n] = 1.0
        return np.append(r, extra), Jx, sabs

    r, Jx, sabs = residual(x)
    norm = np.max(np.abs(r))
    for it in range(1, max_iter + 1):
        if norm <= tol:
            break
        try:
            dx = np.linalg.solve(Jx, -r)
        except np.linalg.LinAlgError:
            raise EquilibriumError("singular equilibrium Jacobian", norm) from None
        step = 1.0
        while True:
            xn = x + step * dx
            rn, Jn, sn = residual(xn)
            nn_ = np.max(np.abs(rn))
            if np.isfinite(nn_) and (nn_ < norm or step < 1e-3):
                break
            step *= 0.5
        x, r, Jx, sabs, norm = xn, rn, Jn, sn, nn_
    if not np.isfinite(norm) or norm > tol:
        raise EquilibriumError(f"equilibrium solve did not converge (residual {norm:.2e})", norm)
    w = x[:n]
    V = model.bus_phasors(w)[0]
    return Equilibrium(w=w, omega_f=float(x[n]), rho_f=w[model.sl_rho].copy(),
                       v=np.abs(V), theta=np.angle(V), residual=float(norm),
                       iterations=it, sabs=sabs)
