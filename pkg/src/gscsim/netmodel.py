"""Static network description, admittance matrix and Newton power flow."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

BUS_TYPES = ("slack-device", "device", "load", "transit")


class CaseError(ValueError):
    """Invalid network or device data."""


class PowerFlowError(RuntimeError):
    def __init__(self, message, mismatch=float("nan"), iterations=0):
        super().__init__(f"{message} (mismatch={mismatch:.3e}, iterations={iterations})")
        self.mismatch = mismatch
        self.iterations = iterations


@dataclass
class Bus:
    id: int
    kv: float = 1.0
    type: str = "transit"


@dataclass
class Branch:
    id: str
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0


@dataclass
class Load:
    bus: int
    p: float
    q: float


@dataclass
class Device:
    """A GSC converter at ``bus``.

    ``sb`` is the device rating in pu of the system base; ``p`` and ``v`` are
    the power-flow dispatch (injected active power, voltage magnitude).
    ``params`` holds a :class:`gscsim.gsc.GscParams` in device base.
    """
    name: str
    bus: int
    sb: float = 1.0
    p: float = 0.0
    v: float = 1.0
    params: Any = None
    h: float = 1.0


@dataclass
class NetworkCase:
    buses: list
    branches: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    devices: list = field(default_factory=list)
    base_mva: float = 100.0
    fn: float = 60.0
    name: str = "case"

    def __post_init__(self):
        self.validate()

    @property
    def omega_b(self) -> float:
        return 2.0 * math.pi * self.fn

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def bus_index(self) -> dict:
        return {b.id: i for i, b in enumerate(self.buses)}

    def reference_bus(self) -> int:
        return next(b.id for b in self.buses if b.type == "slack-device")

    def device_at(self, bus_id: int) -> Optional[Device]:
        for d in self.devices:
            if d.bus == bus_id:
                return d
        return None

    def load_vectors(self):
        """Per-bus constant-power load arrays (p, q) in bus order."""
        idx = self.bus_index()
        p = np.zeros(self.n_bus)
        q = np.zeros(self.n_bus)
        for ld in self.loads:
            p[idx[ld.bus]] += ld.p
            q[idx[ld.bus]] += ld.q
        return p, q

    def validate(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseError("duplicate bus ids")
        known = set(ids)
        for b in self.buses:
            if b.type not in BUS_TYPES:
                raise CaseError(f"bus {b.id}: unknown type {b.type!r}")
        n_ref = sum(b.type == "slack-device" for b in self.buses)
        if n_ref != 1:
            raise CaseError(f"exactly one slack-device bus required, found {n_ref}")
        br_ids = [br.id for br in self.branches]
        if len(set(br_ids)) != len(br_ids):
            raise CaseError("duplicate branch ids")
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise CaseError(f"branch {br.id}: unknown bus {end}")
            vals = (br.r, br.x, br.b, br.tap)
            if not all(math.isfinite(v) for v in vals):
                raise CaseError(f"branch {br.id}: non-finite impedance")
            if math.hypot(br.r, br.x) == 0.0:
                raise CaseError(f"branch {br.id}: zero series impedance")
            if br.tap <= 0.0:
                raise CaseError(f"branch {br.id}: tap ratio must be positive")
        for ld in self.loads:
            if ld.bus not in known:
                raise CaseError(f"load at unknown bus {ld.bus}")
        dev_buses = [d.bus for d in self.devices]
        if len(set(dev_buses)) != len(dev_buses):
            raise CaseError("at most one device per bus")
        types = {b.id: b.type for b in self.buses}
        for d in self.devices:
            if d.bus not in known:
                raise CaseError(f"device {d.name}: unknown bus {d.bus}")
            if types[d.bus] not in ("slack-device", "device"):
                raise CaseError(f"device {d.name}: bus {d.bus} is not a device bus")
            if d.sb <= 0.0:
                raise CaseError(f"device {d.name}: base power must be positive")
        for b in self.buses:
            if b.type in ("slack-device", "device") and b.id not in dev_buses:
                raise CaseError(f"bus {b.id} is typed {b.type} but has no device")


@dataclass
class PowerFlowSolution:
    bus_ids: list
    v: np.ndarray
    theta: np.ndarray
    p_inj: np.ndarray        # per device, generation in pu (device order)
    q_inj: np.ndarray
    mismatch: float
    iterations: int
    device_buses: list = field(default_factory=list)

    def voltage(self, bus_id):
        i = self.bus_ids.index(bus_id)
        return self.v[i], self.theta[i]

    @property
    def phasors(self):
        return self.v * np.exp(1j * self.theta)


def build_ybus(case: NetworkCase) -> np.ndarray:
    """Bus admittance matrix from pi-model branches (tap on the from side)."""
    idx = case.bus_index()
    Y = np.zeros((case.n_bus, case.n_bus), dtype=complex)
    for br in case.branches:
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b
        a = br.tap
        Y[f, f] += (ys + ysh) / (a * a)
        Y[t, t] += ys + ysh
        Y[f, t] -= ys / a
        Y[t, f] -= ys / a
    return Y


def power_injection(Y, V):
    return V * np.conj(Y @ V)


def _dS_dV(Y, V):
    Ibus = Y @ V
    dV = np.diag(V)
    dVn = np.diag(V / np.abs(V))
    dS_dVa = 1j * dV @ np.conj(np.diag(Ibus) - Y @ dV)
    dS_dVm = dV @ np.conj(Y @ dVn) + np.conj(np.diag(Ibus)) @ dVn
    return dS_dVa, dS_dVm


def solve_powerflow(case: NetworkCase, tol: float = 1e-10, max_iter: int = 50) -> PowerFlowSolution:
    """Polar Newton-Raphson power flow.

    The slack device fixes magnitude and angle, other devices are PV buses
    at their dispatch, load and transit buses are PQ.
    """
    idx = case.bus_index()
    nb = case.n_bus
    Y = build_ybus(case)
    pl, ql = case.load_vectors()
    pg = np.zeros(nb)
    vm = np.ones(nb)
    for d in case.devices:
        pg[idx[d.bus]] = d.p
        vm[idx[d.bus]] = d.v
    va = np.zeros(nb)
    types = [b.type for b in case.buses]
    pv = [i for i, t in enumerate(types) if t == "device"]
    pq = [i for i, t in enumerate(types) if t in ("load", "transit")]
    pvpq = pv + pq
    p_spec = pg - pl
    q_spec = -ql

    npvpq, npq = len(pvpq), len(pq)
    mis = np.inf
    for it in range(max_iter + 1):
        V = vm * np.exp(1j * va)
        S = power_injection(Y, V)
        F = np.r_[S.real[pvpq] - p_spec[pvpq], S.imag[pq] - q_spec[pq]]
        mis = float(np.max(np.abs(F))) if F.size else 0.0
        if not np.isfinite(mis):
            raise PowerFlowError("power flow diverged", mis, it)
        if mis <= tol:
            break
        if it == max_iter:
            raise PowerFlowError("power flow did not converge", mis, it)
        dVa, dVm = _dS_dV(Y, V)
        J = np.block([
            [dVa.real[np.ix_(pvpq, pvpq)], dVm.real[np.ix_(pvpq, pq)]],
            [dVa.imag[np.ix_(pq, pvpq)], dVm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError("singular power-flow Jacobian", mis, it) from exc
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq:npvpq + npq]
    V = vm * np.exp(1j * va)
    S = power_injection(Y, V)
    if np.any(vm <= 0.0):
        raise PowerFlowError("non-positive voltage in solution", mis, it)
    sg = S + pl + 1j * ql
    p_inj = np.array([sg[idx[d.bus]].real for d in case.devices])
    q_inj = np.array([sg[idx[d.bus]].imag for d in case.devices])
    return PowerFlowSolution([b.id for b in case.buses], vm, va, p_inj, q_inj, mis, it,
                             [d.bus for d in case.devices])


@dataclass(frozen=True)
class LoadStep:
    """Constant-power load change applied at ``t`` and held to the end."""
    bus: int
    dp: float
    dq: float
    t: float

    def loads_after(self, case: NetworkCase):
        p, q = case.load_vectors()
        i = case.bus_index()[self.bus]
        p[i] += self.dp
        q[i] += self.dq
        return p, q


def apply_load_step(case: NetworkCase, bus: int, dp: float, dq: float, t_event: float,
                    t_f: Optional[float] = None) -> LoadStep:
    if bus not in case.bus_index():
        raise CaseError(f"load step at unknown bus {bus}")
    if t_event < 0.0 or (t_f is not None and t_event >= t_f):
        raise CaseError(f"event time {t_event} outside simulation horizon")
    return LoadStep(bus, float(dp), float(dq), float(t_event))


def parse_event(text: str) -> LoadStep:
    """Parse ``bus=5,dp=0.5,dq=0.5,t=1``."""
    fields = {}
    for part in text.split(","):
        k, _, v = part.partition("=")
        fields[k.strip()] = v.strip()
    try:
        return LoadStep(int(fields["bus"]), float(fields.get("dp", 0.0)),
                        float(fields.get("dq", 0.0)), float(fields.get("t", 1.0)))
    except (KeyError, ValueError) as exc:
        raise CaseError(f"bad event spec {text!r}") from exc
