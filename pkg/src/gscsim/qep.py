"""Quadratic eigenvalue analysis of the 2x2 pencil ``lambda^2 M + lambda D + K``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STRIP_TOL = 1e-12


class PencilError(ValueError):
    pass


def adj2(A):
    """Adjugate of a 2x2 matrix."""
    return np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]])


@dataclass(frozen=True)
class QuadraticPencil:
    M: np.ndarray
    D: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        for name in ("M", "D", "K"):
            a = np.array(getattr(self, name), dtype=float).reshape(2, 2)
            if not np.all(np.isfinite(a)):
                raise PencilError(f"{name} has non-finite entries")
            object.__setattr__(self, name, a)

    @classmethod
    def from_params(cls, params, omega_b: float | None = None):
        """Pencil of a device; with ``omega_b`` the stiffness is scaled to ``omega_b K``."""
        k = params.K if omega_b is None else omega_b * params.K
        return cls(params.M, params.D, k)

    def __call__(self, lam):
        return lam * lam * self.M + lam * self.D + self.K

    def det(self, lam):
        Q = self(lam)
        return Q[0, 0] * Q[1, 1] - Q[0, 1] * Q[1, 0]


@dataclass(frozen=True)
class QuarticCoeffs:
    a4: float
    a3: float
    a2: float
    a1: float
    a0: float

    def as_array(self):
        """Coefficients from the highest power down."""
        return np.array([self.a4, self.a3, self.a2, self.a1, self.a0])

    def __call__(self, lam):
        return np.polyval(self.as_array(), lam)

    @property
    def degree(self) -> int:
        return len(_strip(self.as_array())) - 1


def quartic_coeffs(p: QuadraticPencil) -> QuarticCoeffs:
    # det(A + B) = det A + det B + tr(adj(A) B) for 2x2 matrices
    M, D, K = p.M, p.D, p.K
    return QuarticCoeffs(
        a4=float(np.linalg.det(M)),
        a3=float(np.trace(adj2(M) @ D)),
        a2=float(np.linalg.det(D) + np.trace(adj2(M) @ K)),
        a1=float(np.trace(adj2(D) @ K)),
        a0=float(np.linalg.det(K)),
    )


def companion_matrix(p: QuadraticPencil):
    """First-order form ``[[0, I], [-M^-1 K, -M^-1 D]]``; needs invertible M."""
    M = p.M
    scale = max(np.max(np.abs(M)), 1e-300)
    if abs(np.linalg.det(M)) <= 1e-14 * scale * scale:
        raise PencilError("singular M: use qep_eigenvalues on the quartic instead")
    A = np.zeros((4, 4))
    A[:2, 2:] = np.eye(2)
    A[2:, :2] = -np.linalg.solve(M, p.K)
    A[2:, 2:] = -np.linalg.solve(M, p.D)
    return A


def _strip(a):
    a = np.asarray(a, float)
    big = np.max(np.abs(a))
    if big == 0.0:
        raise PencilError("identically zero polynomial")
    i = 0
    while abs(a[i]) <= STRIP_TOL * big:
        i += 1
    return a[i:]


def poly_roots(a):
    """Roots of ``a[0] x^n + ... + a[n]`` from the companion matrix of the monic polynomial.

    Leading coefficients below ``1e-12`` of the largest are dropped, so fewer
    than ``n`` roots come back when the leading terms vanish. LAPACK balances
    the companion matrix before the QR iteration.
    """
    a = _strip(a)
    n = len(a) - 1
    if n == 0:
        return np.zeros(0, dtype=complex)
    C = np.zeros((n, n))
    C[0, :] = -a[1:] / a[0]
    C[1:, :-1] = np.eye(n - 1)
    return np.linalg.eigvals(C).astype(complex)


def qep_eigenvalues(p: QuadraticPencil):
    """Finite eigenvalues of the pencil (4, or fewer for singular M)."""
    return poly_roots(quartic_coeffs(p).as_array())


def pencil_is_stable(p: QuadraticPencil) -> bool:
    lam = qep_eigenvalues(p)
    return bool(lam.size == 0 or np.max(lam.real) < 0.0)


def analyze(p: QuadraticPencil) -> dict:
    c = quartic_coeffs(p)
    lam = qep_eigenvalues(p)
    out = {
        "coefficients": dict(zip(("a4", "a3", "a2", "a1", "a0"), c.as_array().tolist())),
        "degree": int(lam.size),
        "roots": [[float(z.real), float(z.imag)] for z in lam],
        "stable": pencil_is_stable(p),
    }
    try:
        ev = np.linalg.eigvals(companion_matrix(p))
        out["companion_roots"] = [[float(z.real), float(z.imag)] for z in ev]
    except PencilError:
        out["companion_roots"] = None
    return out
