"""Unstable Rayleigh modes of periodic shear flows by shooting.

The fundamental pair of

    -phi'' + U''/(U - c) phi + a phi = 0,    a = alpha**2,

is integrated over one period starting at the minimum point ``y1`` of the
Sturm-Liouville ground state. A periodic solution exists iff the trace of the
monodromy matrix equals 2, i.e. the discriminant
``I = phi1(y2) + phi2'(y2) - 2`` vanishes. Roots with ``Im c > 0`` are found
by a guarded Newton iteration and continued in ``alpha``.

Phase speeds ``c`` are absolute throughout (not measured from ``U_s``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .fields import FourierInterpolant, PeriodicGrid1D, ShearProfile, spectral_derivative
from .sturm_liouville import SLResult, SturmLiouvilleError, build_K, lowest_eigenpair

__all__ = [
    "RayleighError",
    "Fundamental",
    "ComplexMode",
    "Branch",
    "Shooter",
    "integrate_fundamental",
    "floquet_discriminant",
    "find_unstable_mode",
    "continue_branch",
    "winding_number",
]

log = logging.getLogger(__name__)

NEUTRAL_OFFSET = 1e-6


class RayleighError(RuntimeError):
    pass


@dataclass(frozen=True)
class Fundamental:
    """Fundamental pair sampled at ``y`` (from ``y1`` to ``y1 + L`` inclusive)."""

    y: np.ndarray
    phi1: np.ndarray
    dphi1: np.ndarray
    phi2: np.ndarray
    dphi2: np.ndarray
    dtrace_dc: complex | None = None
    nfev: int = 0

    @property
    def monodromy(self) -> np.ndarray:
        return np.array([[self.phi1[-1], self.phi2[-1]], [self.dphi1[-1], self.dphi2[-1]]])

    @property
    def discriminant(self) -> complex:
        return complex(self.phi1[-1] + self.dphi2[-1] - 2.0)

    @property
    def wronskian(self) -> np.ndarray:
        return self.phi1 * self.dphi2 - self.dphi1 * self.phi2

    @property
    def wronskian_drift(self) -> float:
        return float(np.abs(self.wronskian - 1.0).max())

    @property
    def wronskian_relative_drift(self) -> float:
        """Drift measured against the size of the two products forming the Wronskian."""
        scale = np.abs(self.phi1 * self.dphi2) + np.abs(self.dphi1 * self.phi2)
        return float((np.abs(self.wronskian - 1.0) / np.maximum(scale, 1.0)).max())


@dataclass(frozen=True)
class ComplexMode:
    alpha: float
    c: complex
    y: np.ndarray
    phi: np.ndarray
    discriminant_residual: float
    rayleigh_residual: float
    iterations: int = 0

    @property
    def growth_rate(self) -> float:
        return float(self.alpha * self.c.imag)

    def in_semicircle(self, u_min: float, u_max: float, slack: float = 1e-8) -> bool:
        center = 0.5 * (u_max + u_min)
        radius = 0.5 * (u_max - u_min)
        return abs(self.c - center) ** 2 <= radius**2 + slack


@dataclass
class Branch:
    """Modes along a decreasing ``alpha`` grid; ``diagnostic`` is set if the branch was lost."""

    modes: list = field(default_factory=list)
    diagnostic: str | None = None

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, i):
        return self.modes[i]


class Shooter:
    """Shooting machinery for one profile and inflection value.

    The Sturm-Liouville data (``K``, ``alpha_max``, ``phi_s``, ``y1``) are
    computed once. Profiles that violate the positivity condition (for
    instance constant ones) are still accepted; they simply have no
    ``alpha_max`` and integration starts at node 0.
    """

    def __init__(self, profile: ShearProfile, U_s: float | None = None, rtol: float = 1e-10):
        self.profile = profile
        self.rtol = rtol
        if U_s is None:
            U_s = profile.inflection_value
        self.U_s = float(U_s) if U_s is not None else float(np.mean(profile.u))
        self.U = FourierInterpolant(profile.u, profile.grid)
        self.Upp = FourierInterpolant(profile.ddu, profile.grid)
        self.flat = np.abs(profile.ddu).max() < 1e-14
        self.sl: SLResult | None = None
        self.K = None
        if not self.flat:
            try:
                K = build_K(profile, self.U_s)
                self.sl = lowest_eigenpair(K, profile.grid)
                self.K = FourierInterpolant(K, profile.grid)
            except SturmLiouvilleError as exc:
                log.info("no neutral-mode data for profile %s: %s", profile.name, exc)
        self.y1 = self.sl.y1 if self.sl is not None else 0.0

    @property
    def alpha_max(self) -> float | None:
        return None if self.sl is None else self.sl.alpha_max

    @property
    def grid(self) -> PeriodicGrid1D:
        return self.profile.grid

    def _potential(self, c: complex):
        """Return ``q(y) = U''/(U - c)`` and ``dq/dc``, regularized at ``c == U_s``."""
        if self.flat:
            zero = lambda y: 0.0  # noqa: E731
            return zero, zero
        if c == self.U_s and self.K is not None:
            return (lambda y: -self.K(y)), None
        return (lambda y: self.Upp(y) / (self.U(y) - c)), (lambda y: self.Upp(y) / (self.U(y) - c) ** 2)

    def integrate(self, a: float, c: complex, sensitivity: bool = False, n_samples: int | None = None, rtol=None) -> Fundamental:
        c = complex(c)
        rtol = self.rtol if rtol is None else rtol
        if c.imag == 0 and c != self.U_s and not self.flat:
            d = self.U(np.linspace(0, self.grid.length, 8 * self.grid.n, endpoint=False)) - c.real
            if np.any(d[:-1] * d[1:] <= 0) or d[-1] * d[0] <= 0:
                raise RayleighError("real phase speed inside the range of U: critical layer on the contour")
        q, dq = self._potential(c)
        if sensitivity and dq is None:
            raise RayleighError("dI/dc is not available at the regularized neutral point c = U_s")
        length = self.grid.length
        y1 = self.y1

        if sensitivity:

            def rhs(y, s):
                qa = q(y) + a
                dqy = dq(y)
                return np.array(
                    [s[1], qa * s[0], s[3], qa * s[2], s[5], qa * s[4] + dqy * s[0], s[7], qa * s[6] + dqy * s[2]]
                )

            s0 = np.array([1, 0, 0, 1, 0, 0, 0, 0], dtype=complex)
        else:

            def rhs(y, s):
                qa = q(y) + a
                return np.array([s[1], qa * s[0], s[3], qa * s[2]])

            s0 = np.array([1, 0, 0, 1], dtype=complex)

        n = self.grid.n if n_samples is None else n_samples
        y_eval = y1 + np.arange(n + 1) * (length / n)
        y_eval[-1] = y1 + length
        sol = solve_ivp(rhs, (y1, y1 + length), s0, method="DOP853", t_eval=y_eval, rtol=rtol, atol=rtol * 1e-2)
        if sol.status != 0:
            raise RayleighError(f"integration failed at c = {c}: {sol.message}")
        s = sol.y
        dtrace = complex(s[4, -1] + s[7, -1]) if sensitivity else None
        return Fundamental(sol.t, s[0], s[1], s[2], s[3], dtrace, int(sol.nfev))

    def discriminant(self, a: float, c: complex) -> complex:
        return self.integrate(a, c, n_samples=2).discriminant

    def discriminant_and_derivative(self, a: float, c: complex):
        fund = self.integrate(a, c, sensitivity=True, n_samples=2)
        return fund.discriminant, fund.dtrace_dc

    # ------------------------------------------------------------------
    def eigenfunction(self, alpha: float, c: complex, max_points: int = 8192):
        """Periodic solution on a grid fine enough to resolve it, plus the Rayleigh residual."""
        a = alpha * alpha
        n = self.grid.n
        while True:
            fund = self.integrate(a, c, n_samples=n)
            mono = fund.monodromy - np.eye(2)
            _, _, vh = np.linalg.svd(mono)
            coef = vh[-1].conj()
            phi = coef[0] * fund.phi1 + coef[1] * fund.phi2
            dphi = coef[0] * fund.dphi1 + coef[1] * fund.dphi2
            spec = np.abs(np.fft.fft(dphi[:-1]))
            tail = spec[n // 4 : 3 * n // 4 + 1].max() / spec.max()
            if tail < 1e-11 or 2 * n > max_points:
                break
            n *= 2
        grid = PeriodicGrid1D(n, self.grid.length)
        phi_p, dphi_p = phi[:-1], dphi[:-1]
        ddphi = spectral_derivative(dphi_p, grid, 1)
        y = fund.y[:-1]
        U = self.U(y)
        Upp = self.Upp(y)
        scale = np.abs(phi_p).max()
        residual = np.abs(Upp * phi_p - (U - c) * (ddphi - a * phi_p)).max() / scale
        j = int(np.argmax(np.abs(phi_p)))
        phase = phi_p[j] / abs(phi_p[j])
        return y, phi_p / (scale * phase), float(residual)

    def find_mode(self, alpha: float, c_guess: complex, tol: float = 1e-8, max_iter: int = 100) -> ComplexMode:
        if self.flat:
            raise RayleighError("no unstable mode: U'' vanishes identically, so the equation reduces to phi'' = a phi")
        if self.alpha_max is None:
            raise RayleighError("no unstable mode: profile has no instability band (positivity condition fails)")
        if not 0 < alpha < self.alpha_max:
            raise RayleighError(f"alpha = {alpha} outside the instability band (0, {self.alpha_max})")
        c = complex(c_guess)
        if c.imag <= 0:
            raise RayleighError("initial guess must lie in the upper half plane")
        a = alpha * alpha
        I_val, dI = self.discriminant_and_derivative(a, c)
        it = 0
        for it in range(1, max_iter + 1):
            if dI == 0 or not np.isfinite(dI):
                raise RayleighError(f"no unstable mode: dI/dc vanishes at c = {c}")
            step = -I_val / dI
            for _ in range(11):
                trial = c + step
                if trial.imag > 0:
                    break
                step *= 0.5
            else:
                raise RayleighError(f"Newton step leaves the upper half plane at c = {c}")
            trial_I, trial_dI = self.discriminant_and_derivative(a, trial)
            # backtrack on |I| to keep the iteration monotone
            for _ in range(10):
                if abs(trial_I) < abs(I_val) or abs(step) < 1e-14:
                    break
                step *= 0.5
                trial = c + step
                trial_I, trial_dI = self.discriminant_and_derivative(a, trial)
            c, I_val, dI = trial, trial_I, trial_dI
            if abs(I_val) <= 1e-3 * tol or abs(step) <= 1e-15 * max(abs(c), 1.0):
                break
        if abs(I_val) > tol:
            raise RayleighError(f"no convergence after {it} iterations (|I| = {abs(I_val):.3e}, c = {c})")
        if c.imag <= 1e-12:
            raise RayleighError(f"converged root c = {c} is neutral or stable")
        y, phi, residual = self.eigenfunction(alpha, c)
        return ComplexMode(float(alpha), c, y, phi, float(abs(I_val)), residual, it)


def integrate_fundamental(profile: ShearProfile, U_s: float, a: float, c: complex, n_samples=None, rtol=1e-10) -> Fundamental:
    """Fundamental pair ``phi1, phi2`` with unit initial data at ``y1`` over one period."""
    return Shooter(profile, U_s, rtol).integrate(a, c, n_samples=n_samples)


def floquet_discriminant(profile: ShearProfile, U_s: float, a: float, c: complex) -> complex:
    """``I = phi1(y2) + phi2'(y2) - 2``; zero iff a periodic solution exists."""
    return Shooter(profile, U_s).discriminant(a, c)


def find_unstable_mode(profile: ShearProfile, U_s: float, alpha: float, c_guess: complex, tol=1e-8, max_iter=100) -> ComplexMode:
    return Shooter(profile, U_s).find_mode(alpha, c_guess, tol, max_iter)


def continue_branch(profile: ShearProfile, U_s: float, alpha_grid, shooter: Shooter | None = None) -> Branch:
    """Follow the unstable branch down a strictly decreasing ``alpha`` grid.

    The first Newton seed is ``U_s + 0.05 i (alpha_max - alpha_1)``; each later
    solve starts from the previous root.
    """
    alphas = [float(a) for a in alpha_grid]
    if not alphas:
        return Branch()
    shooter = shooter or Shooter(profile, U_s)
    if shooter.alpha_max is None:
        raise RayleighError("no unstable mode: profile has no instability band")
    amax = shooter.alpha_max
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alpha grid must be strictly decreasing")
    if not (0 < alphas[-1] and alphas[0] < amax and amax - alphas[0] <= 0.05 + 1e-9):
        raise ValueError(f"alpha grid must lie in (0, alpha_max) and start within 0.05 of alpha_max = {amax}")
    branch = Branch()
    c = shooter.U_s + 0.05j * (amax - alphas[0])
    for alpha in alphas:
        try:
            mode = shooter.find_mode(alpha, c)
        except RayleighError as exc:
            branch.diagnostic = f"branch lost at alpha = {alpha}: {exc}"
            log.warning(branch.diagnostic)
            return branch
        if branch.modes and abs(mode.c - branch.modes[-1].c) > 0.2:
            branch.diagnostic = f"branch jumped at alpha = {alpha}: |dc| = {abs(mode.c - branch.modes[-1].c):.3g}"
            log.warning(branch.diagnostic)
            return branch
        branch.modes.append(mode)
        c = mode.c
    return branch


def winding_number(f, corners, max_turn: float = np.pi / 8, max_depth: int = 20) -> int:
    """Winding number of ``f`` around 0 along the closed polygon through ``corners``.

    Edges are bisected until consecutive arguments differ by less than
    ``max_turn``, so only evaluations of ``f`` enter the count.
    """
    corners = [complex(z) for z in corners]
    total = 0.0

    def edge(z0, f0, z1, f1, depth):
        turn = np.angle(f1 / f0)
        if abs(turn) < max_turn or depth >= max_depth:
            return turn
        zm = 0.5 * (z0 + z1)
        fm = f(zm)
        return edge(z0, f0, zm, fm, depth + 1) + edge(zm, fm, z1, f1, depth + 1)

    values = [f(z) for z in corners]
    for i in range(len(corners)):
        j = (i + 1) % len(corners)
        total += edge(corners[i], values[i], corners[j], values[j], 0)
    return int(round(total / (2 * np.pi)))
