"""Bicharacteristic amplitude system of a steady 3D flow and the growth exponents built on it.

Along a particle path ``x' = u(x)`` a wave vector and an amplitude evolve by

    xi' = -J^T xi,    b' = -J b + 2 (J b . xi) xi / |xi|^2,      J = du/dx,

which keeps ``b . xi`` constant. ``Lambda_m`` is the growth exponent of
``|b| |xi|^m`` maximized over initial data with ``|xi| = |b| = 1`` and
``b . xi = 0``; ``mu0`` is the largest Lyapunov exponent of the linearized
particle dynamics. For shear flows ``(U(y, z), 0, 0)`` the system is solvable
by quadrature, which gives an exact oracle for the integrator.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.stats import qmc

from .fields import VectorField3D

__all__ = [
    "RayError",
    "RayState",
    "RayTrajectory",
    "LambdaEstimate",
    "ray_rhs",
    "integrate_ray",
    "shear_closed_form",
    "min_xi_norm",
    "sample_initial_states",
    "estimate_lambda_m",
    "estimate_mu0",
    "lyapunov_qr",
    "fit_cubic_growth",
]

log = logging.getLogger(__name__)

XI_FLOOR = 1e-8


class RayError(RuntimeError):
    pass


@dataclass(frozen=True)
class RayState:
    x: np.ndarray
    xi: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("x", "xi", "b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.xi, self.b])

    @classmethod
    def from_array(cls, y) -> "RayState":
        y = np.asarray(y, dtype=float)
        return cls(y[:3], y[3:6], y[6:9])


def _rhs(y, flow: VectorField3D) -> np.ndarray:
    x, xi, b = y[:3], y[3:6], y[6:9]
    n2 = xi @ xi
    if n2 < XI_FLOOR**2:
        raise RayError(f"|xi| = {np.sqrt(n2):.3e} fell below {XI_FLOOR}")
    J = np.asarray(flow.jacobian(x), dtype=float)
    Jb = J @ b
    return np.concatenate([np.asarray(flow.velocity(x), dtype=float), -J.T @ xi, -Jb + (2.0 * (Jb @ xi) / n2) * xi])


def ray_rhs(state: RayState, flow: VectorField3D) -> RayState:
    """Time derivative of ``(x, xi, b)`` as a :class:`RayState`."""
    return RayState.from_array(_rhs(state.as_array(), flow))


@dataclass(frozen=True)
class RayTrajectory:
    t: np.ndarray
    x: np.ndarray  # (n, 3), reduced modulo the periods
    xi: np.ndarray
    b: np.ndarray
    bxi_drift: float
    shear_drift: float | None
    nfev: int

    @property
    def bxi_relative_drift(self) -> float:
        """``b . xi`` drift measured against ``max(1, max_t |b| |xi|)``."""
        scale = np.max(np.linalg.norm(self.b, axis=1) * np.linalg.norm(self.xi, axis=1))
        return self.bxi_drift / max(1.0, float(scale))

    def state(self, k: int = -1) -> RayState:
        return RayState(self.x[k], self.xi[k], self.b[k])


def integrate_ray(state0: RayState, flow: VectorField3D, T: float, tol: float = 1e-10, n_out: int = 101, t_eval=None, check: bool = True) -> RayTrajectory:
    """Integrate the ray system to time ``T`` with DOP853 at relative tolerance ``tol``.

    Reports the drift of ``b . xi`` and, for shear flows, of
    ``(U_y b2 + U_z b3) |xi|^2``; both are exact invariants, so a drift beyond
    ``1e3 * tol`` (relative to the size of the invariant's terms) is an error.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-12, 1e-6]")
    y0 = state0.as_array()
    if np.linalg.norm(y0[3:6]) < XI_FLOOR:
        raise RayError("initial |xi| below 1e-8")
    t_eval = np.linspace(0.0, T, n_out) if t_eval is None else np.asarray(t_eval, dtype=float)
    try:
        sol = solve_ivp(lambda t, y: _rhs(y, flow), (0.0, T), y0, method="DOP853", t_eval=t_eval, rtol=tol, atol=tol * 1e-3)
    except RayError:
        raise
    if sol.status != 0:
        raise RayError(f"ray integration failed: {sol.message}")
    Y = sol.y.T
    xi, b = Y[:, 3:6], Y[:, 6:9]
    bxi = np.einsum("ij,ij->i", b, xi)
    scale = max(1.0, float(np.max(np.linalg.norm(b, axis=1) * np.linalg.norm(xi, axis=1))))
    bxi_drift = float(np.max(np.abs(bxi - bxi[0])))
    shear_drift = None
    if flow.shear is not None:
        _, Uy, Uz = flow.shear(y0[1], y0[2])
        combo = (Uy * b[:, 1] + Uz * b[:, 2]) * np.einsum("ij,ij->i", xi, xi)
        shear_drift = float(np.max(np.abs(combo - combo[0])))
        cscale = max(1.0, float(np.max((abs(Uy) + abs(Uz)) * np.linalg.norm(b, axis=1) * np.einsum("ij,ij->i", xi, xi))))
        if check and shear_drift > 1e3 * tol * cscale:
            raise RayError(f"shear invariant drifted by {shear_drift:.3e}; check the Jacobian callback")
    if check and bxi_drift > 1e3 * tol * scale:
        raise RayError(f"b . xi drifted by {bxi_drift:.3e}; check the Jacobian callback")
    return RayTrajectory(sol.t, flow.reduce(Y[:, :3]), xi, b, bxi_drift, shear_drift, int(sol.nfev))


# ---------------------------------------------------------------------------
# shear flows: exact solution


def min_xi_norm(U_y: float, U_z: float, t: float) -> float:
    """``min |xi(t)|^2`` over unit initial wave vectors for a shear with gradient ``(U_y, U_z)``.

    ``xi(t) = M xi0`` with ``M = I - t e_grad e1^T`` and the minimum is the
    smaller eigenvalue of ``M^T M``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    s = (U_y**2 + U_z**2) * t * t
    return 2.0 / (2.0 + s + np.sqrt((2.0 + s) ** 2 - 4.0))


def shear_closed_form(U_y: float, U_z: float, U_val: float, state0: RayState, t: float) -> RayState:
    """Exact ray state at time ``t`` for ``u = (U(y, z), 0, 0)`` frozen at the initial ``(y, z)``.

    ``xi`` is linear in ``t``; ``C = U_y b2 + U_z b3`` satisfies
    ``C(t) |xi(t)|^2 = C(0) |xi(0)|^2``, and ``b`` follows by quadrature of
    its explicit right-hand side.
    """
    x0, xi0, b0 = state0.x, state0.xi, state0.b
    x = x0 + np.array([U_val * t, 0.0, 0.0])
    grad = np.array([0.0, U_y, U_z])

    def xi_at(s):
        return xi0 - s * xi0[0] * grad

    xi = xi_at(t)
    invariant = (U_y * b0[1] + U_z * b0[2]) * (xi0 @ xi0)
    if invariant == 0.0 or xi0[0] == 0.0 or t == 0.0:
        return RayState(x, xi, b0.copy())
    g2 = U_y**2 + U_z**2
    points = None
    if g2 > 0:
        s_min = (U_y * xi0[1] + U_z * xi0[2]) / (xi0[0] * g2)
        if 0.0 < s_min < t:
            points = [s_min]

    def forcing(s, i):
        v = xi_at(s)
        n2 = v @ v
        C = invariant / n2
        if i == 0:
            return C * (-1.0 + 2.0 * v[0] ** 2 / n2)
        return 2.0 * C * v[0] * v[i] / n2

    b = b0.copy()
    for i in range(3):
        val, _ = quad(forcing, 0.0, t, args=(i,), epsabs=1e-13, epsrel=1e-12, limit=200, points=points)
        b[i] += val
    return RayState(x, xi, b)


# ---------------------------------------------------------------------------
# sampling and exponent estimates


def _tangent_frame(xi: np.ndarray):
    a = np.array([0.0, 0.0, 1.0]) if abs(xi[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(a, xi)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(xi, e1)


def sample_initial_states(flow: VectorField3D, n_samples: int, seed: int):
    """Scrambled-Halton points on ``T^3 x S^2`` with ``b0`` a unit tangent vector at ``xi0``."""
    u = qmc.Halton(d=6, scramble=True, seed=seed).random(n_samples)
    states = []
    for row in u:
        x0 = row[:3] * np.asarray(flow.periods, dtype=float)
        z = 2.0 * row[3] - 1.0
        phi = 2.0 * np.pi * row[4]
        r = np.sqrt(max(0.0, 1.0 - z * z))
        xi0 = np.array([r * np.cos(phi), r * np.sin(phi), z])
        e1, e2 = _tangent_frame(xi0)
        theta = 2.0 * np.pi * row[5]
        states.append(RayState(x0, xi0, np.cos(theta) * e1 + np.sin(theta) * e2))
    return states


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class LambdaEstimate:
    m: int
    T: float
    n_samples: int
    value: float
    per_sample: np.ndarray
    seed: int
    bias_bound: float | None = None
    growth_fit: tuple | None = None
    max_drift: float = 0.0
    meta: dict = field(default_factory=dict)


def fit_cubic_growth(t: np.ndarray, b_norms: np.ndarray, t_split: float = 1.0):
    """Constants with ``|b(t)| <= c3 t^3 + c4``: ``c4`` from ``t <= t_split``, ``c3`` from the rest.

    ``b_norms`` has shape ``(n_samples, n_times)``.
    """
    t = np.asarray(t)
    peak = np.max(b_norms, axis=0)
    early = t <= t_split
    c4 = float(np.max(peak[early]))
    late = ~early
    c3 = float(max(0.0, np.max((peak[late] - c4) / t[late] ** 3))) if np.any(late) else 0.0
    return c3, c4


def estimate_lambda_m(
    flow: VectorField3D,
    m: int,
    T: float,
    n_samples: int,
    seed: int = 0,
    tol: float = 1e-10,
    threads: int = 1,
    T_fit: float = 50.0,
) -> LambdaEstimate:
    """Finite-``T`` maximum of ``(1/T) ln(|b(T)| |xi(T)|^m)`` over sampled unit initial data.

    For shear flows the estimate comes with a bias bound from a cubic growth
    fit ``|b(t)| <= c3 t^3 + c4`` on ``t <= T_fit`` and ``|xi(t)| <= 1 + G t``
    with ``G = max |grad U|`` over the samples.
    """
    if not 0 <= m <= 4:
        raise ValueError("m must lie in 0..4")
    if T < 10:
        raise ValueError("T must be at least 10")
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    states = sample_initial_states(flow, n_samples, seed)
    t_fit = min(T, T_fit)
    t_eval = np.unique(np.concatenate([np.linspace(0.0, 1.0, 11), np.linspace(1.0, t_fit, 50), [T]]))

    def run(state):
        traj = integrate_ray(state, flow, T, tol, t_eval=t_eval)
        nb0, nx0 = np.linalg.norm(state.b), np.linalg.norm(state.xi)
        nb, nx = np.linalg.norm(traj.b[-1]), np.linalg.norm(traj.xi[-1])
        exponent = (np.log(nb / nb0) + m * np.log(nx / nx0)) / T
        return exponent, np.linalg.norm(traj.b, axis=1), traj.bxi_drift

    results = _map(run, states, threads)
    per_sample = np.array([r[0] for r in results])
    if not np.all(np.isfinite(per_sample)):
        raise RayError("non-finite per-sample exponent")
    bias = None
    fit = None
    if flow.shear is not None:
        mask = t_eval <= t_fit
        norms = np.array([r[1][mask] for r in results])
        fit = fit_cubic_growth(t_eval[mask], norms)
        grad = max(np.hypot(*flow.shear(s.x[1], s.x[2])[1:]) for s in states)
        c3, c4 = fit
        bias = float((np.log(max(1.0, c3 * T**3 + c4)) + m * np.log1p(grad * T)) / T)
    return LambdaEstimate(
        m,
        float(T),
        n_samples,
        float(per_sample.max()),
        per_sample,
        seed,
        bias,
        fit,
        float(max(r[2] for r in results)),
        {"flow": flow.name, "tol": tol},
    )


def _tangent_rhs(t, y, flow: VectorField3D, sign: float, adjoint: bool):
    """Particle path with a unit tangent vector ``w`` and ``r = ln |y|`` (continuous renormalization)."""
    x, w = y[:3], y[3:6]
    J = np.asarray(flow.jacobian(x), dtype=float)
    G = -J.T if adjoint else J
    Gw = sign * (G @ w)
    rate = w @ Gw
    return np.concatenate([sign * np.asarray(flow.velocity(x), dtype=float), Gw - rate * w, [rate]])


def estimate_mu0(flow: VectorField3D, T: float, n_samples: int, seed: int = 0, tol: float = 1e-10, threads: int = 1) -> float:
    """Largest ``(1/T) ln |y(T)|`` for ``y' = J y`` and ``y' = -J^T y``, forward and backward in time."""
    if T < 10:
        raise ValueError("T must be at least 10")
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    states = sample_initial_states(flow, n_samples, seed)

    def run(state):
        best = -np.inf
        for sign in (1.0, -1.0):
            for adjoint in (False, True):
                y0 = np.concatenate([state.x, state.xi, [0.0]])
                sol = solve_ivp(_tangent_rhs, (0.0, T), y0, method="DOP853", args=(flow, sign, adjoint), rtol=tol, atol=tol * 1e-3)
                if sol.status != 0:
                    raise RayError(f"tangent integration failed: {sol.message}")
                best = max(best, sol.y[6, -1] / T)
        return best

    return float(max(_map(run, states, threads)))


def lyapunov_qr(flow: VectorField3D, x0, T: float, dt: float = 1.0, tol: float = 1e-10) -> np.ndarray:
    """Lyapunov spectrum of the particle flow by Jacobian propagation with QR re-orthonormalization."""
    x = np.asarray(x0, dtype=float)
    Q = np.eye(3)
    sums = np.zeros(3)

    def rhs(t, y):
        Y = y[3:].reshape(3, 3)
        return np.concatenate([flow.velocity(y[:3]), (flow.jacobian(y[:3]) @ Y).ravel()])

    n = int(round(T / dt))
    for _ in range(n):
        sol = solve_ivp(rhs, (0.0, dt), np.concatenate([x, Q.ravel()]), method="DOP853", rtol=tol, atol=tol * 1e-3)
        x = sol.y[:3, -1]
        Q, R = np.linalg.qr(sol.y[3:, -1].reshape(3, 3))
        signs = np.sign(np.diag(R))
        Q = Q * signs
        sums += np.log(np.abs(np.diag(R)))
    return sums / (n * dt)
