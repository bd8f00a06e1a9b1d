"""Performance index, centre-of-inertia frequency and exchanged-energy split."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_WEIGHT_KEYS = {"kt_w": "kt_omega", "kt_r": "kt_rho", "ks_w": "ks_omega", "ks_v": "ks_v"}


@dataclass(frozen=True)
class MetricWeights:
    kt_omega: float = 1.0
    kt_rho: float = 1.0
    ks_omega: float = 1.0
    ks_v: float = 1.0

    def __post_init__(self):
        if min(self.kt_omega, self.kt_rho, self.ks_omega, self.ks_v) < 0.0:
            raise ValueError("metric weights must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "MetricWeights":
        """``kt_w=1,kt_r=1,ks_w=1,ks_v=1`` (missing keys stay at 1)."""
        kw = {}
        for part in filter(None, (s.strip() for s in text.split(","))):
            key, _, val = part.partition("=")
            key = key.strip()
            if key not in _WEIGHT_KEYS:
                raise ValueError(f"unknown weight {key!r}; expected {sorted(_WEIGHT_KEYS)}")
            kw[_WEIGHT_KEYS[key]] = float(val)
        return cls(**kw)

    def scaled(self, c: float) -> "MetricWeights":
        return MetricWeights(c * self.kt_omega, c * self.kt_rho, c * self.ks_omega, c * self.ks_v)


@dataclass
class OperatingPoints:
    """Initial and final steady states used by the index (per device arrays)."""
    omega_o: np.ndarray
    v_o: np.ndarray
    omega_f: np.ndarray
    v_f: np.ndarray
    rho_f: np.ndarray

    @classmethod
    def from_trajectory(cls, traj, equilibrium=None):
        """Initial values from the first sample; finals from ``equilibrium``
        (a :class:`gscsim.tds.Equilibrium`) or else the last sample. ``rho_f`` is 0."""
        nd = traj.omega.shape[1]
        if equilibrium is not None:
            v_f = np.exp(equilibrium.w[:nd])
            om_f = np.full(nd, equilibrium.omega_f)
        else:
            v_f = traj.v[-1].copy()
            om_f = traj.omega[-1].copy()
        return cls(traj.omega[0].copy(), traj.v[0].copy(), om_f, v_f, np.zeros(nd))

    @classmethod
    def uniform(cls, nd, omega_o=1.0, v_o=1.0, omega_f=1.0, v_f=1.0, rho_f=0.0):
        full = lambda x: np.broadcast_to(np.asarray(x, float), (nd,)).copy()
        return cls(full(omega_o), full(v_o), full(omega_f), full(v_f), full(rho_f))


@dataclass
class MetricBreakdown:
    names: list
    mu_t_rho: np.ndarray
    mu_t_omega: np.ndarray
    mu_s_omega: np.ndarray
    mu_s_v: np.ndarray
    points: OperatingPoints = None
    t_start: float = 0.0

    @property
    def mu_t_k(self):
        return self.mu_t_rho + self.mu_t_omega

    @property
    def mu_s_k(self):
        return self.mu_s_omega + self.mu_s_v

    @property
    def mu_t(self) -> float:
        return float(np.sum(self.mu_t_k))

    @property
    def mu_s(self) -> float:
        return float(np.sum(self.mu_s_k))

    @property
    def mu_ts(self) -> float:
        return float(np.sum(self.mu_t_k + self.mu_s_k))

    def table(self) -> dict:
        """System totals in the row order rho, omega, t | omega, v, s | ts."""
        return {
            "mu_t_rho": float(np.sum(self.mu_t_rho)),
            "mu_t_omega": float(np.sum(self.mu_t_omega)),
            "mu_t": self.mu_t,
            "mu_s_omega": float(np.sum(self.mu_s_omega)),
            "mu_s_v": float(np.sum(self.mu_s_v)),
            "mu_s": self.mu_s,
            "mu_ts": self.mu_ts,
        }

    def to_dict(self):
        out = self.table()
        out["t_start"] = self.t_start
        out["per_device"] = {
            n: {"mu_t": float(self.mu_t_k[k]), "mu_s": float(self.mu_s_k[k])}
            for k, n in enumerate(self.names)
        }
        if self.points is not None:
            out["finals"] = {"omega_f": self.points.omega_f.tolist(), "v_f": self.points.v_f.tolist(),
                             "rho_f": self.points.rho_f.tolist()}
        return out


def _window(traj, t_start):
    if t_start is None:
        t_start = traj.events[0] if traj.events else float(traj.t[0])
    i = traj.start_index(t_start)
    return i, float(t_start)


def mu_ts(traj, weights: MetricWeights | None = None, points: OperatingPoints | None = None,
          t_start: float | None = None) -> MetricBreakdown:
    """Weighted quadratic transient plus steady-state error of every device bus.

    The transient integrals run from ``t_start`` (default: the first event)
    to the end of the trajectory with the trapezoidal rule on the recorded grid.
    """
    w = weights or MetricWeights()
    if not traj.completed:
        raise ValueError("metric needs a completed trajectory")
    pts = points or OperatingPoints.from_trajectory(traj)
    nd = traj.omega.shape[1]
    for name in ("omega_o", "v_o", "omega_f", "v_f", "rho_f"):
        if np.shape(getattr(pts, name)) != (nd,):
            raise ValueError(f"operating point {name} needs one value per device")
    i, t0 = _window(traj, t_start)
    t = traj.t[i:]
    e_w = (traj.omega[i:] - pts.omega_f) ** 2
    e_r = (traj.rho[i:] - pts.rho_f) ** 2
    mu_tw = w.kt_omega * np.trapezoid(e_w, t, axis=0) if len(t) > 1 else np.zeros(nd)
    mu_tr = w.kt_rho * np.trapezoid(e_r, t, axis=0) if len(t) > 1 else np.zeros(nd)
    mu_sw = w.ks_omega * (pts.omega_o - pts.omega_f) ** 2
    mu_sv = w.ks_v * (pts.v_o - pts.v_f) ** 2
    return MetricBreakdown(list(traj.device_names), mu_tr, mu_tw, mu_sw, mu_sv, pts, t0)


def coi_weights(devices, h=None):
    """``H_k S_b,k`` per device; ``H`` defaults to each device's stored constant."""
    hs = [d.h for d in devices] if h is None else list(h)
    return np.array([hk * d.sb for hk, d in zip(hs, devices)], dtype=float)


def coi_frequency(omega, weights):
    """Centre-of-inertia frequency of an (n, nd) frequency series.

    Computed as the first device's frequency plus the weighted mean deviation
    from it, so a common frequency is returned bit-exactly.
    """
    omega = np.atleast_2d(np.asarray(omega, float))
    wts = np.asarray(weights, float)
    total = wts.sum()
    if total == 0.0:
        raise ValueError("centre-of-inertia weights sum to zero")
    ref = omega[:, :1]
    return ref[:, 0] + ((omega - ref) @ wts) / total


@dataclass
class EnergyBreakdown:
    t: np.ndarray
    storage: np.ndarray
    damping: np.ndarray
    potential: np.ndarray
    total: np.ndarray

    @property
    def residual(self):
        return self.total - (self.storage + self.damping + self.potential)

    def endpoint(self) -> dict:
        return {"storage": float(self.storage[-1]), "damping": float(self.damping[-1]),
                "potential": float(self.potential[-1]), "total": float(self.total[-1]),
                "closure_error": float(self.residual[-1])}


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))
    return out


def energy_decomposition(traj, k: int, params, omega_b: float, t_start: float | None = None
                         ) -> EnergyBreakdown:
    """Split the first-row exchanged energy of device ``k`` into its three parts.

    ``params`` is the device's GscParams with setpoints (device base). The
    integration constants are chosen so each part is zero at ``t_start``.
    The damping part carries a ``1/omega_b`` factor because the position
    rates are ``omega_b`` times the complex frequency.
    """
    i, _ = _window(traj, t_start)
    t = traj.t[i:]
    lnv, th = traj.lnv[i:, k], traj.theta[i:, k]
    rho, om = traj.rho[i:, k], traj.omega[i:, k]
    M, D, K = params.M, params.D, params.K
    storage = M[0, 0] * (rho - rho[0]) + M[0, 1] * (om - om[0])
    damping = (D[0, 0] * (lnv - lnv[0]) + D[0, 1] * (th - th[0])) / omega_b
    pot_rate = K[0, 0] * (lnv - params.u_o[0]) + K[0, 1] * (th - params.u_o[1])
    s = np.column_stack([traj.p[i:, k], traj.q[i:, k]])
    s_row = s[:, 0] if params.dual else s[:, 1]
    s_o_row = params.swap(params.s_o)[0]
    return EnergyBreakdown(t.copy(), storage, damping, _cumtrapz(pot_rate, t),
                           _cumtrapz(s_row - s_o_row, t))


def estimate_cf(t, V, omega_b: float):
    """Complex frequency of a phasor series ``V(t)`` (rows: samples).

    ``rho = d ln|V| / dt / omega_b`` and ``omega = 1 + d angle(V) / dt / omega_b``
    with angles measured in the synchronous frame. Repeated instants (event
    samples) share the derivative of the later sample.
    """
    t = np.asarray(t, float)
    V = np.asarray(V, complex)
    squeeze = V.ndim == 1
    V = V.reshape(len(t), -1)
    keep = np.ones(len(t), dtype=bool)
    keep[:-1] = np.diff(t) > 0.0
    tk = t[keep]
    if len(tk) < 2:
        raise ValueError("need at least two distinct instants")
    lm = np.log(np.abs(V[keep]))
    ang = np.unwrap(np.angle(V[keep]), axis=0)
    rho_k = np.gradient(lm, tk, axis=0) / omega_b
    om_k = 1.0 + np.gradient(ang, tk, axis=0) / omega_b
    idx = np.cumsum(keep[::-1])[::-1]
    idx = len(tk) - idx
    rho, om = rho_k[idx], om_k[idx]
    if squeeze:
        return rho[:, 0], om[:, 0]
    return rho, om


__all__ = ["MetricWeights", "OperatingPoints", "MetricBreakdown", "mu_ts", "coi_weights",
           "coi_frequency", "EnergyBreakdown", "energy_decomposition", "estimate_cf"]
