"""Generalized swing control device.

Each converter obeys, on the generalized position ``u = [ln v, theta]`` and the
complex frequency ``eta = [rho, omega]``::

    M eta' + D (eta - eta_o) + K (u - u_o) = s - s_o
    u' = [Omega_b rho, Omega_b (omega - 1)]

``s`` is the power absorbed from the grid at the device terminal (the
negative of the injection), in device base, stored as ``[p, q]``. With the
normal ordering the rho row balances reactive power and the omega row active
power (the VSM pairing); the dual ordering exchanges them. ``eta`` is in pu of
``Omega_b`` and ``theta`` is measured in the frame rotating at ``Omega_b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

PRESETS = ("vsm", "vsm_extended", "vsm_coupled", "dvsm")
_REQUIRED = {
    "vsm": ("M22", "D22", "D11", "K11"),
    "vsm_extended": ("M22", "D22", "D11", "K11", "M11", "K22"),
    "vsm_coupled": ("M22", "D22", "D11", "K11", "d_c"),
    "dvsm": ("M22", "D22", "D11", "K11"),
}
ETA_O = np.array([0.0, 1.0])


class IllPosedError(ValueError):
    """The (M, D) pattern does not define a solvable set of device equations."""


@dataclass(frozen=True)
class ComplexFrequency:
    rho: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.rho) and math.isfinite(self.omega)):
            raise ValueError("complex frequency must be finite")

    @property
    def value(self) -> complex:
        return complex(self.rho, self.omega)

    def as_array(self):
        return np.array([self.rho, self.omega])


@dataclass(frozen=True)
class FilterParams:
    """LC output filter. Stored with the device, not simulated at phasor scale."""
    L_f: float = 0.2e-3
    R_f: float = 0.0
    C_f: float = 0.265e-6

    def __post_init__(self):
        if min(self.L_f, self.R_f, self.C_f) < 0.0:
            raise ValueError("filter parameters must be non-negative")


@dataclass
class GscState:
    u: np.ndarray
    eta: np.ndarray

    @property
    def v(self) -> float:
        return float(np.exp(self.u[0]))

    @property
    def cf(self) -> ComplexFrequency:
        return ComplexFrequency(float(self.eta[0]), float(self.eta[1]))


@dataclass
class GscParams:
    M: np.ndarray
    D: np.ndarray
    K: np.ndarray
    power_order: str = "normal"
    u_o: np.ndarray = field(default_factory=lambda: np.zeros(2))
    s_o: np.ndarray = field(default_factory=lambda: np.zeros(2))
    sb: float = 1.0
    preset: str | None = None
    values: dict | None = None
    filter: FilterParams = field(default_factory=FilterParams)

    def __post_init__(self):
        self.M = np.array(self.M, dtype=float).reshape(2, 2)
        self.D = np.array(self.D, dtype=float).reshape(2, 2)
        self.K = np.array(self.K, dtype=float).reshape(2, 2)
        self.u_o = np.array(self.u_o, dtype=float).reshape(2)
        self.s_o = np.array(self.s_o, dtype=float).reshape(2)
        if self.power_order not in ("normal", "dual"):
            raise ValueError(f"power_order must be 'normal' or 'dual', got {self.power_order!r}")
        for name in ("M", "D", "K"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")
        algebraic_rows(self.M, self.D)

    @property
    def dual(self) -> bool:
        return self.power_order == "dual"

    @property
    def eta_o(self):
        return ETA_O.copy()

    def swap(self, s):
        """Row-ordered power for ``s = [p, q]``: ``[q, p]`` normal, ``[p, q]`` dual."""
        s = np.asarray(s, dtype=float)
        return s.copy() if self.dual else s[::-1].copy()

    def with_setpoints(self, u_o, s_o, sb=None):
        return replace(self, u_o=np.array(u_o, float), s_o=np.array(s_o, float),
                       sb=self.sb if sb is None else sb)

    def same_matrices(self, other) -> bool:
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in "MDK")


def algebraic_rows(M, D):
    """Return ``(row0_alg, row1_alg)`` for a supported inertia pattern.

    Supported: full-rank M, or a single zero row of M with a nonzero matching
    D diagonal and a zero off-diagonal M entry in the other row.
    """
    M = np.asarray(M, float)
    D = np.asarray(D, float)
    zero = [not np.any(M[i]) for i in range(2)]
    scale = max(np.max(np.abs(M)), 1.0)
    if not any(zero):
        if abs(np.linalg.det(M)) <= 1e-14 * scale * scale:
            raise IllPosedError("singular inertia matrix with no zero row")
        return (False, False)
    if all(zero):
        raise IllPosedError("inertia matrix is zero")
    i = 0 if zero[0] else 1
    j = 1 - i
    if D[i, i] == 0.0:
        raise IllPosedError(f"zero inertia row {i + 1} needs a nonzero D{i + 1}{i + 1}")
    if M[j, i] != 0.0:
        raise IllPosedError(f"zero inertia row {i + 1} requires M{j + 1}{i + 1} = 0")
    return (i == 0, i == 1)


def make_preset(kind: str, values=None, **kw) -> GscParams:
    """Build one of the named GSC configurations from scalar gains."""
    vals = dict(values or {})
    vals.update(kw)
    if "D12" in vals and "d_c" not in vals:
        vals["d_c"] = vals["D12"]
    if kind not in _REQUIRED:
        raise ValueError(f"unknown preset {kind!r}; expected one of {PRESETS}")
    missing = [k for k in _REQUIRED[kind] if k not in vals]
    if missing:
        raise ValueError(f"preset {kind}: missing {', '.join(missing)}")
    for k in _REQUIRED[kind]:
        if k != "d_c" and not vals[k] > 0.0:
            raise ValueError(f"preset {kind}: {k} must be positive")
    M = np.zeros((2, 2))
    D = np.zeros((2, 2))
    K = np.zeros((2, 2))
    M[1, 1] = vals["M22"]
    D[1, 1] = vals["D22"]
    D[0, 0] = vals["D11"]
    K[0, 0] = vals["K11"]
    if kind == "vsm_extended":
        M[0, 0] = vals["M11"]
        K[1, 1] = vals["K22"]
    if kind == "vsm_coupled":
        D[0, 1] = D[1, 0] = vals["d_c"]
    order = "dual" if kind == "dvsm" else "normal"
    used = {k: float(vals[k]) for k in _REQUIRED[kind]}
    return GscParams(M, D, K, power_order=order, preset=kind, values=used)


def init_from_powerflow(pf, device, params: GscParams):
    """Equilibrium state and completed setpoints for ``device``.

    ``s_o`` is the absorbed power in device base, i.e. minus the power-flow
    generation divided by the device rating.
    """
    if device.bus not in pf.bus_ids or device.bus not in pf.device_buses:
        raise KeyError(f"device bus {device.bus} not in power-flow solution")
    i = pf.bus_ids.index(device.bus)
    k = pf.device_buses.index(device.bus)
    u_o = np.array([math.log(pf.v[i]), pf.theta[i]])
    s_o = -np.array([pf.p_inj[k], pf.q_inj[k]]) / device.sb
    p = params.with_setpoints(u_o, s_o, sb=device.sb)
    return GscState(u_o.copy(), ETA_O.copy()), p


def gsc_rhs(state: GscState, s_abs, params: GscParams, omega_b: float = 2 * math.pi * 60):
    """Time derivatives ``(u', eta')`` of one device for absorbed power ``s_abs``.

    A zero row of M makes the matching eta component algebraic: it is solved
    from its row before the kinematics are evaluated and its reported
    derivative is 0.
    """
    eta = np.array(state.eta, float)
    du_pos = np.asarray(state.u, float) - params.u_o
    ds = params.swap(s_abs) - params.swap(params.s_o)
    alg = algebraic_rows(params.M, params.D)
    for i in (0, 1):
        if alg[i]:
            j = 1 - i
            eta[i] = (ds[i] - params.D[i, j] * (eta[j] - ETA_O[j])
                      - params.K[i] @ du_pos) / params.D[i, i]
    g = ds - params.D @ (eta - ETA_O) - params.K @ du_pos
    deta = np.zeros(2)
    diff = [i for i in (0, 1) if not alg[i]]
    if len(diff) == 2:
        deta = np.linalg.solve(params.M, g)
    else:
        i = diff[0]
        deta[i] = g[i] / params.M[i, i]
    du = omega_b * np.array([eta[0], eta[1] - 1.0])
    return du, deta


def droop_equilibrium(devices, dp_total: float) -> float:
    """Frequency deviation shared by droop devices (no frequency stiffness)
    after an absorbed-power change ``dp_total`` (system pu) on a lossless grid.

    Positive ``dp_total`` is a load increase and lowers the frequency.
    """
    total = 0.0
    for p in devices:
        if p.K[1, 1] != 0.0 or p.K[1, 0] != 0.0:
            raise ValueError("droop equilibrium needs K21 = K22 = 0")
        if p.D[1, 1] <= 0.0:
            raise ValueError("droop equilibrium needs D22 > 0")
        total += p.sb * p.D[1, 1]
    if total == 0.0:
        raise ValueError("sum of D22 is zero")
    return -dp_total / total
