"""Galerkin truncation of 2D Euler about a shear flow, as a finite-dimensional :class:`LPSystem`.

Perturbation vorticity is expanded in ``exp(i (j alpha x + k_m y))`` with
``|j| <= 2`` and ``|m| <= n_modes`` (sharp cutoff); the ``(0, 0)`` slot
carries the mean streamwise velocity ``s`` instead of the (vanishing) mean
vorticity. Real coordinates pair each mode with its conjugate and are scaled
by ``sqrt(2)``, so that the Euclidean norm of a coordinate vector is
``sqrt(s**2 + mean(omega**2))``.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft
from scipy.optimize import minimize

from .fields import ShearProfile
from .lyapunov_perron import LPSystem, autonomous_system, measure_C1
from .spectra2d import assemble_planar

__all__ = ["GalerkinEuler2D", "galerkin_reduce"]

N_SECTORS = 2


class GalerkinEuler2D:
    def __init__(self, profile: ShearProfile, alpha: float, n_modes: int):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.profile = profile
        self.alpha = float(alpha)
        self.N = int(n_modes)
        self.J = N_SECTORS
        self.length = profile.grid.length
        self.m = np.arange(-self.N, self.N + 1)
        self.ky = self.m * (2 * np.pi / self.length)
        self.kx = np.arange(-self.J, self.J + 1) * self.alpha
        self.k2 = self.kx[:, None] ** 2 + self.ky[None, :] ** 2
        # quadratic products reach |j| <= 2J and |m| <= 2N; these sizes keep the retained modes alias-free
        self.nx = 4 * self.J
        self.ny = 4 * self.N
        self.dim = 1 + 2 * self.N + 2 * self.J * (2 * self.N + 1)
        self._linear = None
        self.workers = 1

    # -- coordinates -------------------------------------------------------

    def _slots(self):
        """(j, m) pairs represented by real coordinates, in storage order."""
        slots = [(0, m) for m in range(1, self.N + 1)]
        for j in range(1, self.J + 1):
            slots += [(j, m) for m in range(-self.N, self.N + 1)]
        return slots

    def to_complex(self, Z):
        """Real coordinates ``(B, dim)`` to ``(W, s)`` with ``W`` of shape ``(B, 2J+1, 2N+1)``."""
        Z = np.atleast_2d(Z)
        B = Z.shape[0]
        W = np.zeros((B, 2 * self.J + 1, 2 * self.N + 1), dtype=complex)
        N, J = self.N, self.J
        c = (Z[:, 1::2] + 1j * Z[:, 2::2]) / np.sqrt(2.0)
        W[:, J, N + 1 :] = c[:, :N]
        W[:, J, :N] = np.conj(c[:, :N][:, ::-1])
        rest = c[:, N:].reshape(B, J, 2 * N + 1)
        W[:, J + 1 :, :] = rest
        W[:, :J, :] = np.conj(rest[:, ::-1, ::-1])
        return W, Z[:, 0].copy()

    def to_real(self, W, s):
        W = np.asarray(W)
        B = W.shape[0]
        N, J = self.N, self.J
        c = np.concatenate([W[:, J, N + 1 :], W[:, J + 1 :, :].reshape(B, -1)], axis=1)
        out = np.empty((B, self.dim))
        out[:, 0] = np.real(s)
        out[:, 1::2] = np.sqrt(2.0) * c.real
        out[:, 2::2] = np.sqrt(2.0) * c.imag
        return out

    # -- dynamics ----------------------------------------------------------

    def linear_matrix(self) -> np.ndarray:
        """Linearization about the shear flow: block diagonal over the sectors ``j alpha``."""
        if self._linear is None:
            W, _ = self.to_complex(np.eye(self.dim))
            dW = np.zeros_like(W)
            for j in range(1, self.J + 1):
                L = assemble_planar(self.profile, j * self.alpha, self.N).matrix
                dW[:, self.J + j, :] = W[:, self.J + j, :] @ L.T
            self._linear = self.to_real(dW, np.zeros(self.dim)).T.copy()
        return self._linear

    def advection(self, Z, base=False):
        """``-P (u . grad omega)`` of the states ``Z`` (optionally with the base flow added)."""
        Z = np.atleast_2d(Z)
        W, s = self.to_complex(Z)
        if base:
            W0, s0 = self.to_complex(self.base_state())
            W, s = W + W0, s + s0
        nx, ny, N, J = self.nx, self.ny, self.N, self.J
        B = W.shape[0]
        jj = (np.arange(-J, J + 1) % nx)[:, None]
        mm = (self.m % ny)[None, :]
        kx = np.zeros((nx, ny))
        ky = np.zeros((nx, ny))
        kx[jj, mm] = self.kx[:, None]
        ky[jj, mm] = self.ky[None, :]
        k2 = kx**2 + ky**2
        hat = np.zeros((B, nx, ny), dtype=complex)
        hat[:, jj, mm] = W * (nx * ny)
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = np.where(k2 > 0, -hat / k2, 0.0)
        half = ny // 2 + 1
        spectra = np.stack([-1j * ky * psi, 1j * kx * psi, 1j * kx * hat, 1j * ky * hat], axis=1)[..., :half]
        u, v, wx, wy = np.moveaxis(sfft.irfft2(spectra, s=(nx, ny), axes=(-2, -1), workers=self.workers), 1, 0)
        u = u + s[:, None, None]
        prod = sfft.rfft2(u * wx + v * wy, axes=(-2, -1), workers=self.workers) / (nx * ny)
        # retained modes with m < 0 follow from the conjugate symmetry of a real field
        pos = self.m >= 0
        dW = np.empty((B, 2 * J + 1, 2 * N + 1), dtype=complex)
        dW[:, :, pos] = -prod[:, jj, self.m[pos][None, :]]
        dW[:, :, ~pos] = -np.conj(prod[:, (-jj) % nx, -self.m[~pos][None, :]])
        dW[:, J, N] = 0.0
        return self.to_real(dW, np.zeros(B))

    def nonlinearity(self, t, Z):
        return self.advection(Z)

    def base_state(self) -> np.ndarray:
        """Coordinates of the shear flow itself: ``s = mean U`` and ``omega = -U'``."""
        coef = np.fft.fft(self.profile.u) / self.profile.grid.n
        n = self.profile.grid.n
        W = np.zeros((1, 2 * self.J + 1, 2 * self.N + 1), dtype=complex)
        for i, m in enumerate(self.m):
            if m != 0 and abs(m) < n // 2:
                W[0, self.J, i] = -1j * self.ky[i] * coef[m % n]
        return self.to_real(W, [coef[0].real])[0]

    def weights(self, kind: str) -> np.ndarray:
        """Diagonal of the quadratic form of ``energy`` (``s^2 + |u|^2``) or ``enstrophy``."""
        W, _ = self.to_complex(np.eye(self.dim))
        k2 = np.where(self.k2 > 0, self.k2, 1.0)
        if kind == "energy":
            w = self.to_real(W / k2, np.ones(self.dim))
            w[0, 0] = 1.0
        elif kind == "enstrophy":
            w = self.to_real(W, np.zeros(self.dim))
        else:
            raise ValueError(kind)
        return np.diag(w).copy()

    def energy_norm(self, Z):
        """``sqrt(s^2 + mean |u|^2)`` of the velocity represented by ``Z``."""
        Z = np.asarray(Z)
        return np.sqrt(np.sum(self.weights_energy * Z**2, axis=-1))

    @property
    def weights_energy(self):
        if not hasattr(self, "_we"):
            self._we = self.weights("energy")
        return self._we

    def quadratic_sup(self, n_starts: int = 2, seed: int = 0) -> float:
        """``max |F(z)| / |z|^2`` over the unit sphere by gradient ascent from random starts.

        ``F`` is a homogeneous quadratic, so its Jacobian at ``u`` has columns
        ``F(u + e_i) - F(u) - F(e_i)`` (one batched evaluation).
        """
        eye = np.eye(self.dim)
        F_e = self.advection(eye)

        def objective(z):
            n = np.linalg.norm(z)
            u = z / n
            F = self.advection(u)[0]
            jac = (self.advection(u[None, :] + eye) - F[None, :] - F_e).T
            grad = -2.0 * jac.T @ F
            return -F @ F, (grad - (grad @ u) * u) / n

        rng = np.random.default_rng(seed)
        best = 0.0
        for _ in range(n_starts):
            res = minimize(objective, rng.standard_normal(self.dim), jac=True, method="L-BFGS-B", options={"maxiter": 500})
            best = max(best, float(np.sqrt(-res.fun)))
        return best

    def invariant_defect(self, Z, kind: str = "energy") -> np.ndarray:
        """Relative rate of change of the energy or enstrophy of ``base + Z`` along the truncated flow."""
        Z = np.atleast_2d(Z)
        w = self.weights(kind)
        total = Z + self.base_state()
        f = Z @ self.linear_matrix().T + self.advection(Z)
        rate = np.sum(w * total * f, axis=1)
        return np.abs(rate) / (np.linalg.norm(w * total, axis=1) * np.linalg.norm(f, axis=1))


def galerkin_reduce(
    profile: ShearProfile,
    alpha: float,
    n_modes: int,
    lambda_cs: float | None = None,
    lambda_u: float | None = None,
    n_C1_samples: int = 100,
    seed: int = 0,
    t_max: float = 30.0,
    C1_mode: str = "sample",
) -> LPSystem:
    """Truncated 2D Euler perturbation dynamics about ``profile`` with its dichotomy data.

    The linear part is the block diagonal of the planar sector operators at
    ``alpha`` and ``2 alpha``. With ``C1_mode="sample"``, ``C1`` is the largest
    ``|F(z)| / |z|^2`` over ``n_C1_samples`` random states; ``"sup"`` uses the
    maximum over the sphere found by :meth:`GalerkinEuler2D.quadratic_sup`.
    Both values are kept in ``meta``; random sampling in this dimension
    underestimates the supremum.
    """
    if C1_mode not in ("sample", "sup"):
        raise ValueError("C1_mode must be 'sample' or 'sup'")
    model = GalerkinEuler2D(profile, alpha, n_modes)
    A = model.linear_matrix()
    C1_sample = measure_C1(model.nonlinearity, model.dim, n_C1_samples, seed)
    C1_sup = max(model.quadratic_sup(seed=seed), C1_sample)
    C1 = C1_sample if C1_mode == "sample" else C1_sup
    return autonomous_system(
        A,
        model.nonlinearity,
        lambda_cs,
        lambda_u,
        C1=C1,
        name=f"galerkin-euler2d({profile.name}, alpha={alpha}, n_modes={n_modes})",
        t_max=t_max,
        energy_norm=model.energy_norm,
        meta={"model": model, "seed": seed, "n_C1_samples": n_C1_samples, "C1_sample": C1_sample, "C1_sup": C1_sup, "C1_mode": C1_mode},
    )
