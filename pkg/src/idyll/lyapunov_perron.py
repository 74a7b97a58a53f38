"""Local unstable manifolds of ``z' = A z + F(t, z)`` by the Lyapunov-Perron method.

For a splitting ``X = X_u + X_cs`` with rates ``lambda_cs < lambda_u`` and a
nonlinearity vanishing to second order, a backward-decaying solution with
``P_u z(0) = z_u0`` is the fixed point of

    z_u(t)  = T_u(t, 0) z_u0 + int_0^t       T_u(t, s)  F_u(s, z(s)) ds
    z_cs(t) =                  int_{-inf}^t  T_cs(t, s) F_cs(s, z(s)) ds

on paths ``t <= 0`` measured in ``|z|_lam = sup_t exp(-lam t) |z(t)|``. The
map is a contraction with constant 1/2 once ``lam`` sits in the gap and the
ball radius ``delta1`` satisfies

    C0 C1 delta1 (1/(lam - lambda_cs) + 1/(lambda_u - K mu - lam)) < 1/2.

The graph ``h(z_u0) = z_cs(0)`` of the fixed points is the local unstable
manifold.

Paths live on the uniform grid ``0, -dt, ..., -T_max``. Integrals use
composite Simpson with midpoint states from cubic interpolation; the part of
the center-stable integral below ``-T_max`` is bounded analytically and
reported, not added.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .spectra2d import DichotomySplit, dichotomy_split

__all__ = [
    "LPError",
    "LPSystem",
    "WeightedPath",
    "FixedPoint",
    "UnstableGraph",
    "apply_lp_map",
    "solve_fixed_point",
    "unstable_graph",
    "verify_local_invariance",
    "forward_escape",
    "manifold_point",
    "backward_rate",
    "make_grid",
    "linear_system",
    "autonomous_system",
    "toy_system",
    "measure_C1",
]

log = logging.getLogger(__name__)

SAFETY = 0.8


class LPError(RuntimeError):
    pass


@dataclass(frozen=True)
class LPSystem:
    """Finite-dimensional system with an exponential dichotomy and quadratic nonlinearity.

    ``nonlinearity(t, Z)`` is vectorized: ``t`` has shape ``(k,)`` and ``Z``
    shape ``(k, dim)``. ``propagator(t, t0)`` returns the linear solution
    operator. The splitting projections are taken constant in time, which is
    exact for autonomous systems.
    """

    dim: int
    split: DichotomySplit
    propagator: Callable[[float, float], np.ndarray]
    nonlinearity: Callable[[np.ndarray, np.ndarray], np.ndarray]
    generator: np.ndarray | Callable[[float], np.ndarray]
    C0: float
    C1: float
    mu: float = 0.0
    K: float = 0.0
    autonomous: bool = True
    name: str = "system"
    energy_norm: Callable[[np.ndarray], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def lambda_u(self) -> float:
        return self.split.lambda_u

    @property
    def lambda_cs(self) -> float:
        return self.split.lambda_cs

    @property
    def rank_u(self) -> int:
        return self.split.rank_u

    def default_lambda(self) -> float:
        return 0.5 * (self.lambda_cs + self.lambda_u)

    def gap_factor(self, lam: float) -> float:
        Kmu = self.K * self.mu
        lo, hi = self.lambda_cs + Kmu, self.lambda_u - Kmu
        if not lo < lam < hi:
            raise LPError(f"lambda = {lam} outside the admissible window ({lo}, {hi})")
        return 1.0 / (lam - self.lambda_cs) + 1.0 / (self.lambda_u - Kmu - lam)

    def delta1(self, lam: float | None = None) -> float:
        """Largest radius allowed by the smallness condition, times a 0.8 safety factor."""
        lam = self.default_lambda() if lam is None else lam
        return SAFETY * 0.5 / (self.C0 * self.C1 * self.gap_factor(lam))

    def vector_field(self, t: float, z: np.ndarray) -> np.ndarray:
        A = self.generator(t) if callable(self.generator) else self.generator
        return A @ z + self.nonlinearity(np.array([t]), z[None, :])[0]

    def u_coordinates(self, z) -> np.ndarray:
        """Coordinates of ``P_u z`` in the orthonormal basis of ``X_u``."""
        return self.split.basis_u.conj().T @ (self.split.proj_u @ np.asarray(z))

    def from_u_coordinates(self, coords) -> np.ndarray:
        return self.split.basis_u @ np.asarray(coords)


@dataclass(frozen=True)
class WeightedPath:
    t_grid: np.ndarray
    z: np.ndarray
    lam: float
    tail_bound: float = 0.0

    @property
    def norm_lambda(self) -> float:
        return weighted_norm(self.t_grid, self.z, self.lam)

    @property
    def dt(self) -> float:
        return float(self.t_grid[0] - self.t_grid[1])


def weighted_norm(t_grid, z, lam) -> float:
    return float(np.max(np.exp(-lam * t_grid) * np.linalg.norm(z, axis=1)))


def _cubic_midpoints(Z: np.ndarray) -> np.ndarray:
    """States halfway between consecutive grid points by 4-point Lagrange interpolation."""
    n = Z.shape[0]
    if n < 4:
        return 0.5 * (Z[:-1] + Z[1:])
    mid = np.empty((n - 1,) + Z.shape[1:], dtype=Z.dtype)
    mid[1:-1] = (-Z[:-3] + 9 * Z[1:-2] + 9 * Z[2:-1] - Z[3:]) / 16.0
    mid[0] = (5 * Z[0] + 15 * Z[1] - 5 * Z[2] + Z[3]) / 16.0
    mid[-1] = (Z[-4] - 5 * Z[-3] + 15 * Z[-2] + 5 * Z[-1]) / 16.0
    return mid


class _Propagators:
    """Short-time propagators on the grid, projected onto the two subspaces."""

    def __init__(self, system: LPSystem, t_grid: np.ndarray):
        Pu, Pcs = system.split.proj_u, system.split.proj_cs
        dt = t_grid[0] - t_grid[1]
        self.t_grid = t_grid
        if system.autonomous:
            A = system.generator
            back_full, back_half = sla.expm(-dt * A), sla.expm(-0.5 * dt * A)
            fwd_full, fwd_half = sla.expm(dt * A), sla.expm(0.5 * dt * A)
            n = t_grid.size - 1
            self.u_step = np.broadcast_to(Pu @ back_full, (n,) + A.shape)
            self.u_half = np.broadcast_to(Pu @ back_half, (n,) + A.shape)
            self.cs_step = np.broadcast_to(Pcs @ fwd_full, (n,) + A.shape)
            self.cs_half = np.broadcast_to(Pcs @ fwd_half, (n,) + A.shape)
            self.from_zero = None
            self._A = A
        else:
            T = system.propagator
            mids = 0.5 * (t_grid[:-1] + t_grid[1:])
            # interval i runs from t_grid[i] (later) down to t_grid[i + 1] (earlier)
            self.u_step = np.array([Pu @ T(t_grid[i + 1], t_grid[i]) for i in range(t_grid.size - 1)])
            self.u_half = np.array([Pu @ T(t_grid[i + 1], mids[i]) for i in range(t_grid.size - 1)])
            self.cs_step = np.array([Pcs @ T(t_grid[i], t_grid[i + 1]) for i in range(t_grid.size - 1)])
            self.cs_half = np.array([Pcs @ T(t_grid[i], mids[i]) for i in range(t_grid.size - 1)])
            self.from_zero = np.array([T(t, 0.0) for t in t_grid])
        self.Pu, self.Pcs = Pu, Pcs

    def orbit_u(self, z_u0: np.ndarray) -> np.ndarray:
        if self.from_zero is not None:
            return np.einsum("ij,kj->ki", self.Pu, self.from_zero @ z_u0)
        out = np.empty((self.t_grid.size, z_u0.size), dtype=np.result_type(self.u_step, z_u0))
        out[0] = self.Pu @ z_u0
        for i in range(self.t_grid.size - 1):
            out[i + 1] = self.u_step[i] @ out[i]
        return out


def apply_lp_map(path: WeightedPath, z_u0, system: LPSystem, delta1: float | None = None, tail_tol: float = 1e-6, _props=None) -> WeightedPath:
    """One application of the Lyapunov-Perron map to a grid path."""
    t_grid, Z = path.t_grid, np.asarray(path.z)
    lam = path.lam
    z_u0 = np.asarray(z_u0)
    if delta1 is not None:
        if np.linalg.norm(Z, axis=1).max() > delta1 * (1 + 1e-12):
            raise LPError("path leaves the delta1 ball")
        if np.linalg.norm(z_u0) > delta1 / (2 * system.C0) * (1 + 1e-12):
            raise LPError("|z_u0| exceeds delta1 / (2 C0)")
    props = _props or _Propagators(system, t_grid)
    dt = t_grid[0] - t_grid[1]
    n = t_grid.size
    F = system.nonlinearity(t_grid, Z)
    mids = 0.5 * (t_grid[:-1] + t_grid[1:])
    Fm = system.nonlinearity(mids, _cubic_midpoints(Z))

    # unstable part, integrated backwards from t = 0
    J = np.zeros_like(F, dtype=np.result_type(F, props.u_step))
    for i in range(n - 1):
        J[i + 1] = props.u_step[i] @ (J[i] + dt / 6.0 * F[i]) + dt / 6.0 * (4.0 * props.u_half[i] @ Fm[i] + props.Pu @ F[i + 1])
    zu = props.orbit_u(z_u0) - J

    # center-stable part, integrated forwards from t = -T_max
    G = np.zeros_like(J)
    for i in range(n - 2, -1, -1):
        G[i] = props.cs_step[i] @ (G[i + 1] + dt / 6.0 * F[i + 1]) + dt / 6.0 * (4.0 * props.cs_half[i] @ Fm[i] + props.Pcs @ F[i])

    out = zu + G
    if np.isrealobj(Z) and np.isrealobj(system.split.proj_u):
        out = out.real
    tail = _tail_bound(system, t_grid, out, lam)
    if tail > tail_tol * max(np.linalg.norm(z_u0), np.finfo(float).tiny):
        raise LPError(f"tail of the center-stable integral ({tail:.3e}) exceeds {tail_tol:.1e} |z_u0|; increase T_max")
    return WeightedPath(t_grid, out, lam, tail)


def _tail_bound(system: LPSystem, t_grid, Z, lam) -> float:
    """Bound at t = 0 on the dropped ``int_{-inf}^{-T_max}`` piece of the center-stable integral.

    Uses ``|F(s, z)| <= C1 exp(-K mu s) |z|_lam^2 exp(2 lam s)`` below the grid.
    """
    T_max = -t_grid[-1]
    rate = 2 * lam - system.K * system.mu - system.lambda_cs
    if rate <= 0:
        return np.inf
    zl = weighted_norm(t_grid, Z, lam)
    return float(system.C0 * system.C1 * zl**2 * np.exp(-rate * T_max) / rate)


@dataclass(frozen=True)
class FixedPoint:
    path: WeightedPath
    contraction_factor: float
    iterations: int
    increments: list
    delta1: float
    bound_ok: bool

    def __iter__(self):
        return iter((self.path, self.contraction_factor))


def make_grid(T_max: float = 30.0, dt: float = 0.05) -> np.ndarray:
    n = int(round(T_max / dt))
    return -dt * np.arange(n + 1)


def solve_fixed_point(
    z_u0,
    system: LPSystem,
    tol: float = 1e-13,
    max_iter: int = 60,
    lam: float | None = None,
    T_max: float = 30.0,
    dt: float = 0.05,
    tail_tol: float = 1e-6,
    check_contraction: bool = True,
    _props=None,
) -> FixedPoint:
    """Picard iteration of the Lyapunov-Perron map from the zero path.

    Stops when the weighted increment drops below ``tol * |z_u0|``. The
    contraction factor is the largest ratio of successive increments above
    the round-off floor.
    """
    lam = system.default_lambda() if lam is None else float(lam)
    delta1 = system.delta1(lam)
    z_u0 = np.asarray(z_u0)
    size = np.linalg.norm(z_u0)
    if size > delta1 / (2 * system.C0) * (1 + 1e-12):
        raise LPError(f"|z_u0| = {size:.3e} exceeds delta1 / (2 C0) = {delta1 / (2 * system.C0):.3e}")
    if np.linalg.norm(system.split.proj_cs @ z_u0) > 1e-10 * max(size, 1e-300):
        raise LPError("z_u0 is not in the unstable subspace")
    t_grid = make_grid(T_max, dt)
    props = _props or _Propagators(system, t_grid)
    path = WeightedPath(t_grid, np.zeros((t_grid.size, system.dim), dtype=np.result_type(z_u0, float)), lam)
    increments = []
    ratios = []
    floor = 1e-13 * max(size, 1e-300)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = apply_lp_map(path, z_u0, system, delta1, tail_tol, props)
        inc = weighted_norm(t_grid, new.z - path.z, lam)
        increments.append(inc)
        if len(increments) > 1 and increments[-2] > floor and inc > floor:
            ratios.append(inc / increments[-2])
            if sum(r > 0.9 for r in ratios) >= 2:
                raise LPError(f"Lyapunov-Perron map is not contracting (increment ratios {ratios})")
        path = new if inc > tol * max(size, 1e-300) or it == 1 else path
        if inc <= tol * max(size, 1e-300):
            converged = True
            it -= 1
            break
    if not converged:
        raise LPError(f"no convergence in {max_iter} iterations (last increment {increments[-1]:.3e})")
    factor = max(ratios) if ratios else 0.0
    if check_contraction and factor > 0.55:
        raise LPError(f"observed contraction factor {factor:.3f} exceeds 0.55 although the smallness condition holds")
    bound_ok = bool(np.all(np.linalg.norm(path.z, axis=1) <= 2 * system.C0 * size * np.exp(lam * t_grid) * (1 + 1e-9) + 1e-300))
    return FixedPoint(path, float(factor), max(it, 1 if size > 0 else 0), increments, delta1, bound_ok)


# ---------------------------------------------------------------------------
# graph of the unstable manifold


@dataclass(frozen=True)
class UnstableGraph:
    coords: np.ndarray  # (n, rank_u) coordinates of z_u0 in the X_u basis
    h: np.ndarray  # (n, dim) values in X_cs
    radius: float
    tangency_norm: float
    fd_step: float
    lam: float
    delta1: float
    contraction_factor: float

    @property
    def h0(self) -> float:
        zero = np.flatnonzero(np.linalg.norm(self.coords, axis=1) == 0)
        return float(np.linalg.norm(self.h[zero[0]])) if zero.size else float("nan")


def _ball_mesh(rank: int, radius: float, n: int) -> np.ndarray:
    if rank == 1:
        return np.linspace(-radius, radius, n)[:, None]
    if rank == 2:
        n_r = max(1, int(round(np.sqrt(n / np.pi))))
        pts = [np.zeros(2)]
        for i in range(1, n_r + 1):
            r = radius * i / n_r
            m = max(6, int(round(2 * np.pi * i)))
            ang = 2 * np.pi * np.arange(m) / m
            pts.extend(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1))
        return np.array(pts)
    from scipy.stats import qmc

    raw = qmc.Halton(d=rank, scramble=False).random(n)
    gauss = np.tan(np.pi * (raw - 0.5))
    dirs = gauss / np.linalg.norm(gauss, axis=1)[:, None]
    r = radius * raw[:, 0] ** (1.0 / rank)
    pts = dirs * r[:, None]
    pts[0] = 0.0
    return pts


def manifold_point(system: LPSystem, coords, **kw) -> np.ndarray:
    """``h`` at the unstable coordinates ``coords``."""
    fp = solve_fixed_point(system.from_u_coordinates(coords), system, **kw)
    return system.split.proj_cs @ fp.path.z[0]


def unstable_graph(system: LPSystem, radius: float | None = None, n_samples: int = 21, fd_step: float | None = None, **kw) -> UnstableGraph:
    """Sample ``h`` on a deterministic mesh of the ``X_u`` ball and estimate ``|Dh(0)|``."""
    lam = kw.get("lam") or system.default_lambda()
    delta1 = system.delta1(lam)
    max_radius = delta1 / (2 * system.C0)
    radius = max_radius if radius is None else radius
    if radius > max_radius * (1 + 1e-12):
        raise LPError(f"radius {radius:.3e} exceeds delta1 / (2 C0) = {max_radius:.3e}")
    t_grid = make_grid(kw.get("T_max", 30.0), kw.get("dt", 0.05))
    props = _Propagators(system, t_grid)
    coords = _ball_mesh(system.rank_u, radius, n_samples)
    hs = []
    factor = 0.0
    for c in coords:
        fp = solve_fixed_point(system.from_u_coordinates(c), system, _props=props, **kw)
        factor = max(factor, fp.contraction_factor)
        hs.append(system.split.proj_cs @ fp.path.z[0])
    step = radius / 100 if fd_step is None else fd_step
    jac = []
    for k in range(system.rank_u):
        e = np.zeros(system.rank_u)
        e[k] = step
        hp = manifold_point(system, e, _props=props, **kw)
        hm = manifold_point(system, -e, _props=props, **kw)
        jac.append((hp - hm) / (2 * step))
    tangency = float(np.linalg.norm(np.array(jac).T, 2))
    return UnstableGraph(np.array(coords), np.array(hs), float(radius), tangency, step, lam, delta1, factor)


def _integrate(system: LPSystem, z0, t_end, t_eval=None, events=None, rtol=1e-11):
    sol = solve_ivp(
        system.vector_field,
        (0.0, t_end),
        np.asarray(z0, dtype=float),
        method="DOP853",
        t_eval=t_eval,
        events=events,
        rtol=rtol,
        atol=1e-16,
    )
    if sol.status == -1:
        raise LPError(f"integration failed: {sol.message}")
    return sol


def verify_local_invariance(graph: UnstableGraph, system: LPSystem, horizon: float = 1.0, n_checks: int = 10, n_starts: int | None = None, backward_time: float = 10.0, **kw) -> dict:
    """Flow graph points forward and measure how far they drift from the graph.

    Distances ``|P_cs z(t) - h(P_u z(t))|`` are evaluated at ``n_checks``
    times while ``|P_u z(t)|`` stays inside the graph radius; ``h`` is
    recomputed by a fresh fixed-point solve at every check. Backward
    integration from the same points gives the decay exponent as ``t -> -inf``.
    """
    if horizon > 5:
        raise ValueError("horizon must be at most 5")
    # start where the linear flow keeps P_u z inside the graph radius for the whole horizon
    growth = np.exp(float(system.split.eig_u.real.max()) * horizon) if system.rank_u else 1.0
    norms = np.linalg.norm(graph.coords, axis=1)
    starts = [i for i in np.argsort(-norms, kind="stable") if 0 < norms[i] <= graph.radius / growth]
    if not starts:
        raise LPError("every graph point leaves the ball within the horizon; use a smaller horizon or a finer mesh")
    if n_starts is not None:
        starts = starts[:n_starts]
    t_checks = horizon * np.arange(1, n_checks + 1) / n_checks
    kw.setdefault("lam", graph.lam)
    kw["_props"] = _Propagators(system, make_grid(kw.get("T_max", 30.0), kw.get("dt", 0.05)))
    max_dist = 0.0
    n_eval = 0
    rates = []
    for i in starts:
        z0 = system.from_u_coordinates(graph.coords[i]) + graph.h[i]
        z0 = z0.real if np.iscomplexobj(z0) else z0
        sol = _integrate(system, z0, horizon, t_eval=t_checks)
        for z in sol.y.T:
            coords = system.u_coordinates(z)
            if np.linalg.norm(coords) > graph.radius:
                break
            h = manifold_point(system, coords, **kw)
            max_dist = max(max_dist, float(np.linalg.norm(system.split.proj_cs @ z - h)))
            n_eval += 1
        if backward_time > 0:
            rates.append(backward_rate(system, z0, backward_time))
    if n_eval == 0:
        raise LPError("every trajectory left the ball before the first check; use a smaller radius")
    return {
        "max_distance": max_dist,
        "n_evaluations": n_eval,
        "horizon": horizon,
        "backward_rate": float(min(rates)) if rates else float("nan"),
        "lambda": graph.lam,
    }


def backward_rate(system: LPSystem, z0, duration: float = 10.0, n: int = 101) -> float:
    """Least-squares slope of ``log |z(t)|`` over ``t`` in ``[-duration, 0]``."""
    t_eval = -np.linspace(0.0, duration, n)
    sol = solve_ivp(system.vector_field, (0.0, -duration), np.asarray(z0, dtype=float), method="DOP853", t_eval=t_eval, rtol=1e-11, atol=1e-18)
    if sol.status != 0:
        raise LPError(f"backward integration failed: {sol.message}")
    logs = np.log(np.linalg.norm(sol.y, axis=0))
    return float(np.polyfit(sol.t, logs, 1)[0])


def forward_escape(system: LPSystem, z0, radius: float, t_max: float = 200.0) -> dict:
    """Integrate forward until ``|z|`` reaches ``radius``; report growth of the energy distance."""

    def leave(t, z):
        return np.linalg.norm(z) - radius

    leave.terminal = True
    leave.direction = 1
    sol = _integrate(system, z0, t_max, events=leave)
    z_end = sol.y[:, -1]
    norm = system.energy_norm or (lambda z: np.linalg.norm(z, axis=-1))
    e0, e1 = float(norm(np.asarray(z0))), float(norm(z_end))
    return {
        "exit_time": float(sol.t[-1]),
        "left_ball": bool(sol.status == 1),
        "growth_factor": e1 / e0 if e0 > 0 else float("inf"),
        "initial_energy_norm": e0,
        "final_energy_norm": e1,
    }


# ---------------------------------------------------------------------------
# constructors


def measure_C1(nonlinearity, dim, n_samples: int = 100, seed: int = 0, t_range=(-20.0, 0.0), scale: float = 1.0) -> float:
    """``max |F(t, z)| / |z|^2`` over random directions (exact for homogeneous quadratics)."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n_samples, dim))
    Z *= (scale * rng.random(n_samples) / np.linalg.norm(Z, axis=1))[:, None]
    t = rng.uniform(*t_range, n_samples)
    F = nonlinearity(t, Z)
    return float(np.max(np.linalg.norm(F, axis=1) / np.linalg.norm(Z, axis=1) ** 2))


def autonomous_system(A, nonlinearity, lambda_cs=None, lambda_u=None, C1=None, name="autonomous", t_max=30.0, **extra) -> LPSystem:
    """Build an :class:`LPSystem` for ``z' = A z + F(z)`` with a measured dichotomy constant."""
    A = np.asarray(A)
    split = dichotomy_split(A, lambda_cs, lambda_u, t_max=t_max)
    if C1 is None:
        C1 = measure_C1(nonlinearity, A.shape[0])

    def propagator(t, t0):
        return sla.expm((t - t0) * A)

    return LPSystem(A.shape[0], split, propagator, nonlinearity, A, split.M, float(C1), name=name, **extra)


def toy_system() -> LPSystem:
    """``x' = x``, ``y' = -y + x^2``; its unstable manifold is ``y = x^2 / 3``."""

    def F(t, Z):
        out = np.zeros_like(Z)
        out[:, 1] = Z[:, 0] ** 2
        return out

    return autonomous_system(np.diag([1.0, -1.0]), F, lambda_cs=-1.0, lambda_u=1.0, C1=1.0, name="toy")


def linear_system(A=None, lambda_cs=-1.0, lambda_u=1.0) -> LPSystem:
    A = np.diag([1.0, -1.0]) if A is None else np.asarray(A)
    return autonomous_system(A, lambda t, Z: np.zeros_like(Z), lambda_cs, lambda_u, C1=1.0, name="linear")
