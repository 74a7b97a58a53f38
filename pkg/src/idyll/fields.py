"""Periodic grids, Fourier differentiation and planar/3D velocity fields.

Everything here is fully periodic and trigonometric: samples live on uniform
collocation nodes ``y_j = j L / n`` and derivatives are taken of the
trigonometric interpolant, so band-limited inputs are differentiated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "PeriodicGrid1D",
    "ShearProfile",
    "PlanarField",
    "VectorField3D",
    "FourierInterpolant",
    "spectral_derivative",
    "leray_project",
    "vorticity_and_momentum",
    "velocity_from_vorticity",
    "sin_profile",
    "sin_beta_profile",
    "constant_profile",
    "custom_profile",
    "constant_flow",
    "shear_flow",
    "abc_flow",
    "sinusoidal_shear",
]

TWO_PI = 2.0 * np.pi
MAX_DERIVATIVE_ORDER = 4


@dataclass(frozen=True)
class PeriodicGrid1D:
    """Uniform periodic collocation grid with ``n`` nodes on ``[0, length)``."""

    n: int
    length: float = TWO_PI

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 8, got {self.n}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"grid length must be positive, got {self.length}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * (self.length / self.n)

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def base_wavenumber(self) -> float:
        return TWO_PI / self.length

    @property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers in FFT order (Nyquist mode carries ``-n/2``)."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n) * self.base_wavenumber

    def refine(self, factor: int = 2) -> "PeriodicGrid1D":
        return PeriodicGrid1D(self.n * factor, self.length)


def _derivative_symbol(grid: PeriodicGrid1D, order: int) -> np.ndarray:
    k = grid.wavenumbers
    symbol = (1j * k) ** order
    if order % 2:
        # odd derivatives of the real Nyquist cosine vanish at the nodes
        symbol[grid.n // 2] = 0.0
    return symbol


def spectral_derivative(samples, grid: PeriodicGrid1D, order: int = 1, axis: int = -1) -> np.ndarray:
    """Differentiate the trigonometric interpolant of ``samples`` ``order`` times.

    Real input gives real output. ``axis`` selects the periodic direction for
    multi-dimensional arrays.
    """
    if int(order) != order or order < 1 or order > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order must be an integer in 1..{MAX_DERIVATIVE_ORDER}, got {order}")
    f = np.asarray(samples)
    if not np.all(np.isfinite(f)):
        raise ValueError("samples contain non-finite values")
    if f.shape[axis] != grid.n:
        raise ValueError(f"samples have {f.shape[axis]} points along axis {axis}, grid has {grid.n}")
    shape = [1] * f.ndim
    shape[axis] = grid.n
    symbol = _derivative_symbol(grid, int(order)).reshape(shape)
    out = np.fft.ifft(np.fft.fft(f, axis=axis) * symbol, axis=axis)
    if np.isrealobj(f):
        return out.real
    return out


class FourierInterpolant:
    """Evaluate the trigonometric interpolant of periodic samples anywhere.

    The Nyquist coefficient is split evenly between ``+n/2`` and ``-n/2`` so
    that real data interpolate to a real function. Coefficients below
    ``1e-15`` of the largest one are dropped, which makes evaluation of
    band-limited profiles (a few modes) cheap.
    """

    def __init__(self, samples, grid: PeriodicGrid1D, drop: float = 1e-15):
        f = np.asarray(samples)
        n = grid.n
        coef = np.fft.fft(f) / n
        modes = np.fft.fftfreq(n, d=1.0 / n).astype(float)
        coef = np.concatenate([coef, [coef[n // 2] / 2.0]])
        coef[n // 2] /= 2.0
        modes = np.concatenate([modes, [n / 2.0]])
        keep = np.abs(coef) > drop * max(np.abs(coef).max(), np.finfo(float).tiny)
        self.grid = grid
        self.is_real = np.isrealobj(f)
        self.k = modes[keep] * grid.base_wavenumber
        self.coef = coef[keep]

    def __call__(self, y, order: int = 0):
        y = np.asarray(y, dtype=float)
        phase = np.exp(1j * np.multiply.outer(y, self.k))
        value = phase @ (self.coef * (1j * self.k) ** order)
        if self.is_real:
            return value.real
        return value


@dataclass(frozen=True)
class ShearProfile:
    """Periodic shear profile ``U(y)`` with first and second derivatives at the nodes.

    Build with :meth:`from_samples` (spectral derivatives) or
    :meth:`from_functions` (analytic derivatives, checked against spectral
    ones). ``name`` and ``params`` are provenance only.
    """

    grid: PeriodicGrid1D
    u: np.ndarray
    du: np.ndarray
    ddu: np.ndarray
    inflection_value: Optional[float] = None
    name: str = "custom-samples"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for label in ("u", "du", "ddu"):
            arr = np.asarray(getattr(self, label), dtype=float)
            if arr.shape != (self.grid.n,):
                raise ValueError(f"profile {label} must have shape ({self.grid.n},), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"profile {label} has non-finite samples")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, label, arr)

    @classmethod
    def from_samples(cls, grid: PeriodicGrid1D, u, inflection_value=None, name="custom-samples", params=None):
        u = np.asarray(u, dtype=float)
        return cls(
            grid,
            u,
            spectral_derivative(u, grid, 1),
            spectral_derivative(u, grid, 2),
            inflection_value,
            name,
            dict(params or {}),
        )

    @classmethod
    def from_functions(cls, grid: PeriodicGrid1D, f, df, ddf, inflection_value=None, name="custom", params=None, rtol=1e-8):
        y = grid.nodes
        u, du, ddu = (np.asarray(g(y), dtype=float) * np.ones_like(y) for g in (f, df, ddf))
        for label, analytic, order in (("U'", du, 1), ("U''", ddu, 2)):
            spectral = spectral_derivative(u, grid, order)
            scale = max(np.abs(spectral).max(), np.abs(analytic).max(), 1.0)
            err = np.abs(spectral - analytic).max() / scale
            if err > rtol:
                raise ValueError(f"analytic {label} disagrees with spectral derivative (rel. error {err:.2e})")
        return cls(grid, u, du, ddu, inflection_value, name, dict(params or {}))

    def interpolant(self) -> FourierInterpolant:
        return FourierInterpolant(self.u, self.grid)

    @property
    def u_min(self) -> float:
        return float(self.u.min())

    @property
    def u_max(self) -> float:
        return float(self.u.max())


def sin_profile(n: int = 128, length: float = TWO_PI) -> ShearProfile:
    """``U(y) = sin(2 pi y / L)``: single inflection value 0 and ``K = (2 pi / L)^2``."""
    grid = PeriodicGrid1D(n, length)
    k = grid.base_wavenumber
    return ShearProfile.from_functions(
        grid,
        lambda y: np.sin(k * y),
        lambda y: k * np.cos(k * y),
        lambda y: -k * k * np.sin(k * y),
        inflection_value=0.0,
        name="sin",
        params={"n": n, "length": length},
    )


def sin_beta_profile(beta: float, n: int = 128, periods: int = 1) -> ShearProfile:
    """``U(y) = sin(beta y)`` on the cell of length ``periods * 2 pi / beta``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return ShearProfile.from_functions(
        PeriodicGrid1D(n, periods * TWO_PI / beta),
        lambda y: np.sin(beta * y),
        lambda y: beta * np.cos(beta * y),
        lambda y: -beta * beta * np.sin(beta * y),
        inflection_value=0.0,
        name="sin-beta",
        params={"beta": beta, "n": n, "periods": periods},
    )


def constant_profile(value: float, n: int = 64, length: float = TWO_PI) -> ShearProfile:
    grid = PeriodicGrid1D(n, length)
    u = np.full(n, float(value))
    return ShearProfile(grid, u, np.zeros(n), np.zeros(n), float(value), "constant", {"value": value})


def custom_profile(samples, length: float = TWO_PI, inflection_value=None) -> ShearProfile:
    samples = np.asarray(samples, dtype=float)
    grid = PeriodicGrid1D(samples.size, length)
    return ShearProfile.from_samples(grid, samples, inflection_value, "custom-samples", {"n": samples.size, "length": length})


# ---------------------------------------------------------------------------
# planar fields on the doubly periodic cell


@dataclass(frozen=True)
class PlanarField:
    """Velocity samples ``(vx, vy)`` indexed ``[i, j] -> (x_i, y_j)``."""

    grid_x: PeriodicGrid1D
    grid_y: PeriodicGrid1D
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        shape = (self.grid_x.n, self.grid_y.n)
        for label in ("vx", "vy"):
            arr = np.array(getattr(self, label), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{label} must have shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, label, arr)

    def __add__(self, other: "PlanarField") -> "PlanarField":
        return PlanarField(self.grid_x, self.grid_y, self.vx + other.vx, self.vy + other.vy)

    def divergence(self) -> np.ndarray:
        return spectral_derivative(self.vx, self.grid_x, 1, axis=0) + spectral_derivative(self.vy, self.grid_y, 1, axis=1)

    def max_abs(self) -> float:
        return float(max(np.abs(self.vx).max(), np.abs(self.vy).max()))


def _planar_wavenumbers(grid_x: PeriodicGrid1D, grid_y: PeriodicGrid1D):
    kx = grid_x.wavenumbers[:, None]
    ky = grid_y.wavenumbers[None, :]
    # the Nyquist rows cannot be differentiated consistently for real data
    kx_d = kx.copy()
    ky_d = ky.copy()
    kx_d[grid_x.n // 2, 0] = 0.0
    ky_d[0, grid_y.n // 2] = 0.0
    k2 = kx**2 + ky**2
    return kx_d, ky_d, k2


def _inverse_laplacian(f_hat: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """Mean-zero periodic solution of ``Delta h = f`` in Fourier space."""
    out = np.zeros_like(f_hat)
    nz = k2 > 0
    out[nz] = -f_hat[nz] / k2[nz]
    return out


def leray_project(field_: PlanarField):
    """Split ``field_`` into a divergence-free part and a periodic gradient.

    Solves ``Delta h = div X`` with the mean of ``h`` pinned to zero and
    returns ``(X - grad h, grad h)``. The constant mode of ``X`` is
    divergence free and stays in the first component.
    """
    if not (np.all(np.isfinite(field_.vx)) and np.all(np.isfinite(field_.vy))):
        raise ValueError("field samples contain non-finite values")
    kx, ky, k2 = _planar_wavenumbers(field_.grid_x, field_.grid_y)
    ax = np.fft.fft2(field_.vx)
    ay = np.fft.fft2(field_.vy)
    h_hat = _inverse_laplacian(1j * kx * ax + 1j * ky * ay, k2)
    gx = np.fft.ifft2(1j * kx * h_hat).real
    gy = np.fft.ifft2(1j * ky * h_hat).real
    gradient = PlanarField(field_.grid_x, field_.grid_y, gx, gy)
    divfree = PlanarField(field_.grid_x, field_.grid_y, field_.vx - gx, field_.vy - gy)
    return divfree, gradient


def vorticity_and_momentum(field_: PlanarField, tol: float = 1e-10):
    """Return the spectral curl ``dx vy - dy vx`` and the mean horizontal velocity."""
    div = field_.divergence()
    if np.abs(div).max() > tol:
        raise ValueError(f"field is not divergence free (max |div| = {np.abs(div).max():.3e})")
    omega = spectral_derivative(field_.vy, field_.grid_x, 1, axis=0) - spectral_derivative(field_.vx, field_.grid_y, 1, axis=1)
    return omega, float(field_.vx.mean())


def velocity_from_vorticity(omega, s: float, grid_x: PeriodicGrid1D, grid_y: PeriodicGrid1D, tol: float = 1e-10) -> PlanarField:
    """Rebuild ``v = J grad(Delta^-1 omega) + s e_1`` with ``J`` the rotation by +90 degrees.

    ``omega`` must have zero mean. The reconstructed field has zero mean
    vertical velocity, so the round trip with :func:`vorticity_and_momentum`
    is the identity on divergence-free fields whose ``vy`` has zero mean.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (grid_x.n, grid_y.n):
        raise ValueError(f"omega must have shape {(grid_x.n, grid_y.n)}, got {omega.shape}")
    scale = max(np.abs(omega).max(), 1.0)
    if abs(omega.mean()) > tol * scale:
        raise ValueError(f"omega must have zero mean for a periodic Poisson solve (mean = {omega.mean():.3e})")
    kx, ky, k2 = _planar_wavenumbers(grid_x, grid_y)
    psi_hat = _inverse_laplacian(np.fft.fft2(omega), k2)
    vx = -np.fft.ifft2(1j * ky * psi_hat).real + s
    vy = np.fft.ifft2(1j * kx * psi_hat).real
    return PlanarField(grid_x, grid_y, vx, vy)


# ---------------------------------------------------------------------------
# steady 3D flows on T^3


@dataclass(frozen=True)
class VectorField3D:
    """Steady velocity field on the 3-torus with its Jacobian ``J_ij = d u_i / d x_j``.

    ``shear`` is set for flows of the form ``(U(y, z), 0, 0)`` and returns
    ``(U, U_y, U_z)`` at ``(y, z)``; the ray module uses it for the
    shear-specific conserved quantity and closed form.
    """

    periods: tuple
    velocity: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    shear: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def reduce(self, x) -> np.ndarray:
        return np.mod(np.asarray(x, dtype=float), np.asarray(self.periods, dtype=float))

    def check(self, n_points: int = 1000, seed: int = 0, fd_step: float = 1e-5):
        """Return ``(max |div u|, max |J - central FD|)`` over random points."""
        rng = np.random.default_rng(seed)
        pts = rng.random((n_points, 3)) * np.asarray(self.periods, dtype=float)
        max_div = 0.0
        max_fd = 0.0
        for x in pts:
            jac = np.asarray(self.jacobian(x), dtype=float)
            max_div = max(max_div, abs(np.trace(jac)))
            if max_fd < np.inf:
                fd = np.empty((3, 3))
                for j in range(3):
                    e = np.zeros(3)
                    e[j] = fd_step
                    fd[:, j] = (np.asarray(self.velocity(x + e)) - np.asarray(self.velocity(x - e))) / (2 * fd_step)
                max_fd = max(max_fd, np.abs(fd - jac).max())
        return max_div, max_fd


def constant_flow(u=(1.0, 0.0, 0.0), periods=(TWO_PI, TWO_PI, TWO_PI)) -> VectorField3D:
    u = np.asarray(u, dtype=float)

    def shear(y, z):
        return u[0], 0.0, 0.0

    is_shear = u[1] == 0 and u[2] == 0
    return VectorField3D(
        tuple(periods),
        lambda x: u.copy(),
        lambda x: np.zeros((3, 3)),
        "constant",
        shear if is_shear else None,
        {"u": u.tolist()},
    )


def shear_flow(U, U_y, U_z, periods=(TWO_PI, TWO_PI, TWO_PI), name="shear", params=None) -> VectorField3D:
    """Wrap ``(U(y, z), 0, 0)`` given ``U`` and its two partial derivatives."""

    def velocity(x):
        return np.array([U(x[1], x[2]), 0.0, 0.0])

    def jacobian(x):
        jac = np.zeros((3, 3))
        jac[0, 1] = U_y(x[1], x[2])
        jac[0, 2] = U_z(x[1], x[2])
        return jac

    def shear(y, z):
        return U(y, z), U_y(y, z), U_z(y, z)

    return VectorField3D(tuple(periods), velocity, jacobian, name, shear, dict(params or {}))


def sinusoidal_shear(amp_y: float = 1.0, amp_z: float = 0.5) -> VectorField3D:
    """``U = amp_y sin y + amp_z sin z`` on the 2 pi torus."""
    return shear_flow(
        lambda y, z: amp_y * np.sin(y) + amp_z * np.sin(z),
        lambda y, z: amp_y * np.cos(y),
        lambda y, z: amp_z * np.cos(z),
        name="sin-shear",
        params={"amp_y": amp_y, "amp_z": amp_z},
    )


def abc_flow(A: float = 1.0, B: float = 1.0, C: float = 1.0) -> VectorField3D:
    """Arnold-Beltrami-Childress flow, a steady Euler solution on the 2 pi torus."""

    def velocity(x):
        return np.array(
            [
                A * np.sin(x[2]) + C * np.cos(x[1]),
                B * np.sin(x[0]) + A * np.cos(x[2]),
                C * np.sin(x[1]) + B * np.cos(x[0]),
            ]
        )

    def jacobian(x):
        return np.array(
            [
                [0.0, -C * np.sin(x[1]), A * np.cos(x[2])],
                [B * np.cos(x[0]), 0.0, -A * np.sin(x[2])],
                [-B * np.sin(x[0]), C * np.cos(x[1]), 0.0],
            ]
        )

    return VectorField3D((TWO_PI, TWO_PI, TWO_PI), velocity, jacobian, "abc", None, {"A": A, "B": B, "C": C})
