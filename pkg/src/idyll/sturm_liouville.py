"""Ground state of ``L phi = -phi'' - K(y) phi`` with periodic boundary conditions.

For a shear profile with a single inflection value ``U_s`` the potential is
``K = -U'' / (U - U_s)``; when ``K > 0`` the lowest eigenvalue of ``L`` is
``-alpha_max**2 < 0`` and its positive eigenfunction ``phi_s`` together with
``c = U_s`` is a neutral Rayleigh mode at wavenumber ``alpha_max``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .fields import FourierInterpolant, PeriodicGrid1D, ShearProfile, spectral_derivative

__all__ = [
    "SLResult",
    "SturmLiouvilleError",
    "build_K",
    "find_inflection_values",
    "lowest_eigenpair",
    "second_derivative_matrix",
]

INFLECTION_MERGE_TOL = 1e-6


class SturmLiouvilleError(ValueError):
    """Raised when a profile or potential does not admit the neutral-mode construction."""


@dataclass(frozen=True)
class SLResult:
    lambda_min: float
    alpha_max: float
    phi_s: np.ndarray
    gap: float
    grid: PeriodicGrid1D
    K: np.ndarray
    y1_index: int
    residual: float

    @property
    def y1(self) -> float:
        return float(self.grid.nodes[self.y1_index])


def find_inflection_values(profile: ShearProfile, refine: int = 8):
    """Locate the zeros of ``U''`` and return ``(points, values)`` sorted by position.

    Sign changes are bracketed on a refined evaluation of the trigonometric
    interpolant of ``U''`` and polished with Brent's method.
    """
    ddu = FourierInterpolant(profile.ddu, profile.grid)
    u = FourierInterpolant(profile.u, profile.grid)
    scale = max(np.abs(profile.ddu).max(), np.finfo(float).tiny)
    if np.abs(profile.ddu).max() < 1e-12:
        return np.array([]), np.array([])
    n = profile.grid.n * refine
    y = np.arange(n + 1) * (profile.grid.length / n)
    f = ddu(y)
    zero = np.abs(f) <= 1e-13 * scale
    points = list(y[:-1][zero[:-1]])
    for j in range(n):
        if zero[j] or zero[j + 1]:
            continue
        if f[j] * f[j + 1] < 0:
            points.append(brentq(lambda s: float(ddu(s)), y[j], y[j + 1], xtol=1e-14))
    points = np.sort(np.mod(np.array(points), profile.grid.length))
    return points, u(points)


def _distinct(values, tol):
    distinct = []
    for v in sorted(values):
        if not distinct or abs(v - distinct[-1]) > tol:
            distinct.append(float(v))
    return distinct


def build_K(profile: ShearProfile, U_s: float | None = None, zero_tol: float = 1e-9) -> np.ndarray:
    """Return ``K = -U'' / (U - U_s)`` at the profile nodes.

    Nodes where ``U - U_s`` vanishes must also be zeros of ``U''``; there the
    value is filled by L'Hopital's rule, ``K = -U''' / U'``.
    """
    points, values = find_inflection_values(profile)
    distinct = _distinct(values, INFLECTION_MERGE_TOL)
    if len(distinct) > 1:
        raise SturmLiouvilleError(f"profile has several inflection values {distinct}; exactly one is required")
    if U_s is None:
        U_s = profile.inflection_value if profile.inflection_value is not None else (distinct[0] if distinct else None)
    if U_s is None:
        raise SturmLiouvilleError("profile has no inflection point and no inflection value was given")
    if distinct and abs(distinct[0] - U_s) > INFLECTION_MERGE_TOL:
        raise SturmLiouvilleError(f"inflection value {distinct[0]:.12g} differs from U_s = {U_s:.12g}")

    scale = max(np.abs(profile.u).max(), np.abs(profile.ddu).max(), 1.0)
    d = profile.u - U_s
    small = np.abs(d) < zero_tol * scale
    if np.any(np.abs(profile.ddu[small]) > 1e3 * zero_tol * scale):
        raise SturmLiouvilleError("U - U_s vanishes at a node where U'' does not (K would be singular)")
    K = np.empty_like(d)
    K[~small] = -profile.ddu[~small] / d[~small]
    if np.any(small):
        dddu = spectral_derivative(profile.u, profile.grid, 3)
        du = profile.du[small]
        if np.any(np.abs(du) < zero_tol * scale):
            raise SturmLiouvilleError("degenerate inflection point (U' = 0 where U = U_s)")
        K[small] = -dddu[small] / du
    if np.any(K <= 0):
        raise SturmLiouvilleError(
            f"K = -U''/(U - U_s) is not positive everywhere (min K = {K.min():.6g}); the profile violates the positivity condition"
        )
    return K


def second_derivative_matrix(grid: PeriodicGrid1D) -> np.ndarray:
    """Dense symmetric Fourier collocation matrix for ``d^2/dy^2``."""
    k = grid.wavenumbers
    column = np.fft.ifft(-(k**2)).real
    idx = np.arange(grid.n)
    return column[(idx[:, None] - idx[None, :]) % grid.n]


def lowest_eigenpair(K, grid: PeriodicGrid1D, tie_tol: float = 1e-10) -> SLResult:
    """Lowest eigenvalue and positive ground state of ``-d^2/dy^2 - K``.

    ``phi_s`` is scaled to equal 1 at its minimum node ``y1`` (the first such
    node when several agree to ``tie_tol``).
    """
    K = np.asarray(K, dtype=float)
    if K.shape != (grid.n,) or not np.all(np.isfinite(K)):
        raise SturmLiouvilleError("K must be a finite array on the grid")
    D2 = second_derivative_matrix(grid)
    H = -D2 - np.diag(K)
    w, v = eigh(H, subset_by_index=[0, 1])
    lam, lam2 = float(w[0]), float(w[1])
    if lam >= 0:
        raise SturmLiouvilleError(f"no instability band: lowest eigenvalue {lam:.6g} is not negative")
    gap = lam2 - lam
    if gap < 1e-10 * abs(lam):
        raise SturmLiouvilleError(f"lowest eigenvalue is not simple (gap {gap:.3e})")
    phi = v[:, 0]
    phi = phi * np.sign(phi[np.argmax(np.abs(phi))])
    if np.any(phi <= 0):
        raise SturmLiouvilleError("ground state is not positive; discretization is under-resolved")
    pmin = phi.min()
    y1 = int(np.flatnonzero(phi <= pmin * (1 + tie_tol))[0])
    phi = phi / phi[y1]
    residual = np.abs(-D2 @ phi - K * phi - lam * phi).max() / np.abs(phi).max()
    phi.setflags(write=False)
    return SLResult(lam, float(np.sqrt(-lam)), phi, gap, grid, K, y1, float(residual))
