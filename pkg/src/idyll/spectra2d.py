"""Linearized Euler operators of shear flows as dense Fourier-Galerkin matrices.

Planar (2D) operator, for perturbations ``omega(y) e^{i alpha x}`` of the
vorticity of ``(U(y), 0)``::

    omega_t = -i alpha U omega + i alpha U'' psi,    (d_yy - alpha^2) psi = omega

The first term is the advection part (skew-adjoint, purely imaginary
spectrum); the second comes from reconstructing the velocity from the
vorticity and is compact. The mean-momentum component only lives in the
``alpha = 0`` sector where it is neutral, so it never appears here.

3D operator, for velocity perturbations ``(u, v, w)(y, z) e^{i alpha x}`` of
``(U(y, z), 0, 0)``: pressure is removed by restricting the advection and
lift-up terms to the divergence-free subspace of each Fourier mode.

Eigenvalues relate to phase speeds through ``lambda = -i alpha c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .fields import ShearProfile

__all__ = [
    "ModalOperator",
    "DichotomySplit",
    "DichotomyError",
    "assemble_planar",
    "assemble_shear3d",
    "unstable_spectrum",
    "dichotomy_split",
    "leading_eigenvalue",
    "real_form",
]


class DichotomyError(ValueError):
    pass


@dataclass(frozen=True)
class ModalOperator:
    alpha: float
    matrix: np.ndarray
    n_modes: int
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator matrix must be square, got shape {m.shape}")
        if self.meta.get("unknowns") is not None and self.meta["unknowns"] != m.shape[0]:
            raise ValueError("matrix size does not match the declared unknown count")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _fourier_coefficients_1d(samples) -> callable:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    coef = np.fft.fft(samples) / n

    def c(m):
        m = np.asarray(m)
        out = coef[np.mod(m, n)]
        out = np.where(np.abs(m) < n // 2, out, 0.0)
        return np.where(np.abs(m) == n // 2, coef[n // 2] / 2.0, out)

    return c


def convolution_matrix(coefficient, modes) -> np.ndarray:
    """``T[i, j] = f_hat(m_i - m_j)``: multiplication by ``f`` restricted to ``modes``."""
    modes = np.asarray(modes)
    return coefficient(modes[:, None] - modes[None, :])


def assemble_planar(profile: ShearProfile, alpha: float, n_modes: int) -> ModalOperator:
    """Vorticity-form linearized operator on modes ``|m| <= n_modes``.

    Rows/columns are ordered ``m = -n_modes, ..., n_modes`` with physical
    wavenumber ``2 pi m / L_y``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive; the alpha = 0 sector (mean momentum) is neutral and handled analytically")
    if n_modes < 16:
        raise ValueError("n_modes must be at least 16")
    modes = np.arange(-n_modes, n_modes + 1)
    k = modes * profile.grid.base_wavenumber
    T_u = convolution_matrix(_fourier_coefficients_1d(profile.u), modes)
    T_upp = convolution_matrix(_fourier_coefficients_1d(profile.ddu), modes)
    inv_symbol = -1.0 / (k**2 + alpha**2)
    matrix = -1j * alpha * T_u + 1j * alpha * T_upp * inv_symbol[None, :]
    meta = {"length": profile.grid.length, "modes": modes, "unknowns": modes.size, "profile": profile.name}
    return ModalOperator(float(alpha), matrix, int(n_modes), "planar_vorticity", meta)


def _divergence_free_basis(wavevectors: np.ndarray):
    """Two orthonormal real vectors spanning the plane orthogonal to each wavevector.

    ``e1`` is built from ``k x e_z``, which never vanishes because ``k_x = alpha > 0``.
    """
    kh = wavevectors / np.linalg.norm(wavevectors, axis=1)[:, None]
    e1 = np.cross(kh, np.array([0.0, 0.0, 1.0]))
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(kh, e1)
    return e1, e2


def assemble_shear3d(U, alpha: float, n_modes: int, n_modes_z: int | None = None, lengths=(2 * np.pi, 2 * np.pi)) -> ModalOperator:
    """Linearized 3D Euler operator about ``(U(y, z), 0, 0)`` at streamwise wavenumber ``alpha``.

    ``U`` holds samples on a uniform periodic ``(n_y, n_z)`` grid. The
    unknowns are the two divergence-free velocity components of every Fourier
    mode ``|m| <= n_modes``, ``|p| <= n_modes_z``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive (the projector is singular at alpha = 0)")
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise ValueError("U must be a 2D array of samples on the (y, z) grid")
    ny, nz = U.shape
    n_modes_z = max(2, n_modes // 4) if n_modes_z is None else int(n_modes_z)
    if 2 * n_modes >= ny or 2 * n_modes_z >= nz:
        raise ValueError("(y, z) sample grid too coarse for the requested truncation")
    Ly, Lz = lengths
    Uh = np.fft.fft2(U) / (ny * nz)
    ky_all = np.fft.fftfreq(ny, 1.0 / ny) * (2 * np.pi / Ly)
    kz_all = np.fft.fftfreq(nz, 1.0 / nz) * (2 * np.pi / Lz)
    Uyh = 1j * ky_all[:, None] * Uh
    Uzh = 1j * kz_all[None, :] * Uh

    M, P = np.meshgrid(np.arange(-n_modes, n_modes + 1), np.arange(-n_modes_z, n_modes_z + 1), indexing="ij")
    M, P = M.ravel(), P.ravel()
    dm = M[:, None] - M[None, :]
    dp = P[:, None] - P[None, :]

    def conv(h):
        return h[dm % ny, dp % nz]

    TU, TUy, TUz = conv(Uh), conv(Uyh), conv(Uzh)
    zero = np.zeros_like(TU)
    adv = -1j * alpha * TU
    A = np.block([[adv, -TUy, -TUz], [zero, adv, zero], [zero, zero, adv]])

    nk = M.size
    wavevectors = np.stack([np.full(nk, float(alpha)), M * 2 * np.pi / Ly, P * 2 * np.pi / Lz], axis=1)
    e1, e2 = _divergence_free_basis(wavevectors)
    Q = np.zeros((3 * nk, 2 * nk))
    rows = np.arange(nk)
    for comp in range(3):
        Q[comp * nk + rows, rows] = e1[:, comp]
        Q[comp * nk + rows, nk + rows] = e2[:, comp]
    matrix = Q.T @ A @ Q
    meta = {
        "lengths": tuple(lengths),
        "n_modes_z": n_modes_z,
        "unknowns": 2 * nk,
        "mode_y": M,
        "mode_z": P,
    }
    return ModalOperator(float(alpha), matrix, int(n_modes), "shear3d_modal", meta)


def real_form(op: ModalOperator) -> ModalOperator:
    """Operator on real perturbations: the ``alpha`` sector together with its conjugate ``-alpha`` sector.

    Acting on ``(Re w, Im w)`` the matrix is ``[[Re A, -Im A], [Im A, Re A]]``,
    whose spectrum is that of ``A`` together with its complex conjugate.
    """
    A = np.asarray(op.matrix)
    R = np.block([[A.real, -A.imag], [A.imag, A.real]])
    meta = dict(op.meta, unknowns=R.shape[0], sector_unknowns=A.shape[0])
    return ModalOperator(op.alpha, R, op.n_modes, op.kind + "_real", meta)


def unstable_spectrum(op, threshold: float = 0.0, rtol: float = 1e-9):
    """All eigenvalues sorted by decreasing real part and the count with ``Re > threshold``.

    Real parts within ``rtol * max(1, |A|)`` of the threshold are treated as
    round-off of eigenvalues sitting on it (the advection spectrum lies on the
    imaginary axis).
    """
    matrix = op.matrix if isinstance(op, ModalOperator) else np.asarray(op)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("operator matrix has non-finite entries")
    try:
        eig = sla.eigvals(matrix)
    except sla.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    eig = eig[np.lexsort((-eig.imag, -eig.real))]
    slack = rtol * max(1.0, float(np.abs(matrix).max()))
    return eig, int(np.count_nonzero(eig.real > threshold + slack))


def leading_eigenvalue(op) -> complex:
    eig, _ = unstable_spectrum(op)
    return complex(eig[0])


@dataclass(frozen=True)
class DichotomySplit:
    """Spectral splitting of a matrix into unstable and center-stable invariant subspaces.

    ``M`` bounds ``|e^{tA} P_cs| e^{-lambda_cs t}`` and
    ``|e^{-tA} P_u| e^{lambda_u t}`` on the time grid ``t_grid``.
    """

    lambda_u: float
    lambda_cs: float
    basis_u: np.ndarray
    basis_cs: np.ndarray
    proj_u: np.ndarray
    proj_cs: np.ndarray
    M: float
    matrix: np.ndarray
    eig_u: np.ndarray
    eig_cs: np.ndarray
    t_grid: np.ndarray

    @property
    def rank_u(self) -> int:
        return self.basis_u.shape[1]

    def invariant_residuals(self) -> dict:
        n = self.matrix.shape[0]
        P, Q, A = self.proj_u, self.proj_cs, self.matrix
        scale = max(np.abs(A).max(), 1e-300)
        return {
            "sum": float(np.abs(P + Q - np.eye(n)).max()),
            "idempotent_u": float(np.abs(P @ P - P).max()),
            "idempotent_cs": float(np.abs(Q @ Q - Q).max()),
            "commute": float(np.abs(P @ A - A @ P).max() / scale),
        }


def _ordered_schur_basis(A, select, real):
    if real:
        T, Z, sdim = sla.schur(A, output="real", sort=lambda re, im: select(re))
    else:
        T, Z, sdim = sla.schur(A.astype(complex), output="complex", sort=lambda lam: select(lam.real))
    return Z[:, :sdim]


def _propagator_bound(A, P, rate, sign, t_grid):
    """max over t of ``|exp(sign t A) P| exp(-sign rate t)``."""
    dt = t_grid[1] - t_grid[0] if t_grid.size > 1 else 0.0
    step = sla.expm(sign * dt * A)
    prop = P.copy()
    best = 0.0
    for i, t in enumerate(t_grid):
        if i:
            prop = step @ prop
        best = max(best, np.linalg.norm(prop, 2) * np.exp(-sign * rate * t))
    return best


def dichotomy_split(op, lambda_cs: float | None = None, lambda_u: float | None = None, t_max: float = 10.0, dt: float = 0.5) -> DichotomySplit:
    """Split at the spectral gap ``(lambda_cs, lambda_u)``.

    Defaults are ``0.01`` and ``0.9`` times the leading real part. Real
    matrices keep real bases (real Schur form).
    """
    A = np.asarray(op.matrix if isinstance(op, ModalOperator) else op)
    n = A.shape[0]
    eig = sla.eigvals(A)
    lead = float(eig.real.max())
    if lambda_cs is None:
        lambda_cs = 0.01 * lead
    if lambda_u is None:
        lambda_u = 0.9 * lead
    if not lambda_u > lambda_cs:
        raise DichotomyError(f"need lambda_u > lambda_cs, got {lambda_u} <= {lambda_cs}")
    # eigenvalues exactly on a rate line are admissible (bounded growth when semisimple; M measures it)
    inside = (eig.real > lambda_cs) & (eig.real < lambda_u)
    if np.any(inside):
        bad = eig[inside]
        raise DichotomyError(
            f"gap violated: {bad.size} eigenvalue(s) have real part in ({lambda_cs:.6g}, {lambda_u:.6g}), e.g. {bad[np.argmax(bad.real)]:.6g}"
        )
    real = np.isrealobj(A)
    mid = 0.5 * (lambda_cs + lambda_u)
    Zu = _ordered_schur_basis(A, lambda re: re > mid, real)
    Zcs = _ordered_schur_basis(A, lambda re: re < mid, real)
    k = Zu.shape[1]
    if k + Zcs.shape[1] != n or k != np.count_nonzero(eig.real > mid):
        raise DichotomyError("ordered Schur decomposition did not separate the spectrum cleanly")
    V = np.hstack([Zu, Zcs])
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > 1e12:
        raise DichotomyError(f"defective cluster straddles the gap (basis condition number {cond:.3e})")
    Vinv = np.linalg.inv(V)
    proj_u = V[:, :k] @ Vinv[:k, :]
    proj_cs = V[:, k:] @ Vinv[k:, :]
    t_grid = np.arange(0.0, t_max + 0.5 * dt, dt)
    M_cs = _propagator_bound(A, proj_cs, lambda_cs, +1, t_grid) if k < n else 1.0
    M_u = _propagator_bound(A, proj_u, lambda_u, -1, t_grid) if k > 0 else 1.0
    M = max(1.0, M_cs, M_u)
    return DichotomySplit(
        float(lambda_u),
        float(lambda_cs),
        Zu,
        Zcs,
        proj_u,
        proj_cs,
        float(M),
        A,
        eig[eig.real > mid],
        eig[eig.real < mid],
        t_grid,
    )
