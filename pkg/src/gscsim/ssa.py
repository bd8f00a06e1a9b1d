"""Small-signal analysis and the three-part stability classifier."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class LinearizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class StabilityThresholds:
    eps: complex = 1e-10 + 1e-10j
    t_min: float = 0.01

    def __post_init__(self):
        if self.t_min <= 0.0 or self.eps.real <= 0.0 or self.eps.imag <= 0.0:
            raise ValueError("T_min and both components of eps must be positive")

    @property
    def decay_bound(self) -> float:
        return 1.0 / self.t_min

    @property
    def oscillation_bound(self) -> float:
        return 2.0 * math.pi / self.t_min


@dataclass
class StabilityVerdict:
    converged: bool
    hurwitz: bool
    within_speed: bool
    worst_eigenvalue: complex = complex("nan")
    max_eta_error: float = float("nan")
    reason: str = ""

    @property
    def stable(self) -> bool:
        return self.converged and self.hurwitz and self.within_speed

    def to_dict(self):
        lam = self.worst_eigenvalue
        return {"stable": self.stable, "converged": self.converged, "hurwitz": self.hurwitz,
                "within_speed": self.within_speed,
                "worst_eigenvalue": [lam.real, lam.imag],
                "max_eta_error": self.max_eta_error, "reason": self.reason}


def fd_jacobian(fun, x, rel=1e-6, floor=1e-8):
    """Central-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, float)
    f0 = fun(x)
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        d = max(rel * abs(x[i]), floor)
        xp = x.copy()
        xm = x.copy()
        xp[i] += d
        xm[i] -= d
        J[:, i] = (fun(xp) - fun(xm)) / (2.0 * d)
    return J


@dataclass
class Linearization:
    A: np.ndarray
    states: list = field(default_factory=list)
    rotation_removed: bool = False

    @property
    def eigenvalues(self):
        return np.linalg.eigvals(self.A) if self.A.size else np.zeros(0, complex)


def linearize(model, w, loads=None, remove_rotation=True, rel=1e-6, floor=1e-8,
              check_residual=1e-8) -> Linearization:
    """Reduced state matrix of the DAE at the equilibrium ``w``.

    Algebraic variables (network voltages and any algebraic eta component)
    are eliminated through the algebraic Jacobian. For systems without angle
    stiffness the common-rotation mode is projected out when
    ``remove_rotation`` is set.
    """
    nd, n = model.nd, model.n
    F0, _ = model.f(w, loads)
    res = np.abs(F0.copy())
    if model.rotation_invariant:
        res[model.sl_theta] = np.abs(F0[model.sl_theta] - np.mean(F0[model.sl_theta]))
    if check_residual is not None and np.max(res) > check_residual:
        raise LinearizationError(f"not an equilibrium (residual {np.max(res):.2e})")

    J = fd_jacobian(lambda x: model.f(x, loads)[0], w, rel, floor)

    # express differential GSC rows as eta' = M^-1 g
    rows = J.copy()
    nv = model.sl_rho.start
    diff = np.ones(n, dtype=bool)
    diff[model.sl_e] = False
    diff[model.sl_f] = False
    for k in range(nd):
        r = [nv + k, nv + nd + k]
        alg = model.alg[k]
        if not alg.any():
            rows[r] = np.linalg.solve(model.M[k], J[r])
        else:
            i = 0 if alg[1] else 1
            rows[r[i]] = J[r[i]] / model.M[k, i, i]
            diff[r[1 - i]] = False
    xi = np.nonzero(diff)[0]
    yi = np.nonzero(~diff)[0]
    Fx = rows[np.ix_(xi, xi)]
    if yi.size:
        Fy = rows[np.ix_(xi, yi)]
        Gx = rows[np.ix_(yi, xi)]
        Gy = rows[np.ix_(yi, yi)]
        try:
            A = Fx - Fy @ np.linalg.solve(Gy, Gx)
        except np.linalg.LinAlgError:
            raise LinearizationError("singular algebraic Jacobian") from None
    else:
        A = Fx
    names = []
    for i in xi:
        names.append(_state_name(model, i))
    removed = False
    if remove_rotation and model.rotation_invariant and nd >= 1:
        th = [list(xi).index(model.sl_theta.start + k) for k in range(nd)]
        P = np.eye(len(xi))
        P[th, th[0]] = 1.0
        Ap = np.linalg.solve(P, A @ P)
        keep = [j for j in range(len(xi)) if j != th[0]]
        A = Ap[np.ix_(keep, keep)]
        names = [names[j] for j in keep]
        removed = True
    if not np.all(np.isfinite(A)):
        raise LinearizationError("non-finite state matrix")
    return Linearization(A, names, removed)


def _state_name(model, i):
    labels = [(model.sl_lnv, "lnv"), (model.sl_theta, "theta"), (model.sl_rho, "rho"),
              (model.sl_omega, "omega")]
    for sl, lab in labels:
        if sl.start <= i < sl.stop:
            return f"{model.case.devices[i - sl.start].name}.{lab}"
    return f"x{i}"  # pragma: no cover


def damping_ratios(eigs):
    eigs = np.asarray(eigs, complex)
    mag = np.abs(eigs)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mag > 0, -eigs.real / mag, 1.0)


def classify_stability(traj, eigenvalues, thresholds=StabilityThresholds(), eta_f=None,
                       window=1.0) -> StabilityVerdict:
    """Three-part verdict: converged CF, Hurwitz spectrum, modes slower than T_min.

    ``eta_f`` is an (nd, 2) array of equilibrium complex frequencies. Without it
    the final sample is compared with the samples of the trailing ``window``.
    A diverged trajectory is unstable without looking at the eigenvalues.
    """
    if traj is not None and not traj.completed:
        return StabilityVerdict(False, False, False, reason=f"diverged: {traj.message}")
    eps = complex(thresholds.eps)
    if traj is None:
        converged, err = True, float("nan")
    else:
        eta_end = np.column_stack([traj.rho[-1], traj.omega[-1]])
        if eta_f is not None:
            dev = np.abs(eta_end - np.asarray(eta_f, float).reshape(eta_end.shape))
        else:
            tail = traj.t >= traj.t[-1] - window
            dev = np.stack([np.max(np.abs(traj.rho[tail] - traj.rho[-1]), axis=0),
                            np.max(np.abs(traj.omega[tail] - traj.omega[-1]), axis=0)], axis=1)
        err = float(np.max(dev)) if dev.size else 0.0
        converged = bool(np.all(dev[:, 0] <= eps.real) and np.all(dev[:, 1] <= eps.imag))
    eigs = np.asarray(eigenvalues, complex)
    if eigs.size == 0:
        return StabilityVerdict(converged, True, True, complex(0.0), err,
                                "" if converged else "complex frequency not converged")
    if not np.all(np.isfinite(eigs)):
        return StabilityVerdict(converged, False, False, complex("nan"), err, "non-finite eigenvalues")
    worst = eigs[np.argmax(eigs.real)]
    hurwitz = bool(np.max(eigs.real) < 0.0)
    fast = (-eigs.real >= thresholds.decay_bound) | (np.abs(eigs.imag) >= thresholds.oscillation_bound)
    within = not bool(np.any(fast))
    reasons = []
    if not converged:
        reasons.append("complex frequency not converged")
    if not hurwitz:
        reasons.append("eigenvalue in the closed right half-plane")
    if not within:
        reasons.append("mode faster than T_min")
        worst_fast = eigs[fast][0]
        if hurwitz:
            worst = worst_fast
    v = StabilityVerdict(converged, hurwitz, within, complex(worst), err, "; ".join(reasons))
    assert v.stable == (v.converged and v.hurwitz and v.within_speed)
    return v
