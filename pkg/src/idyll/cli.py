"""Command-line front end: ``idyll <config.json> [--output DIR] [--threads N]``.

A run is fully described by one JSON file::

    {
      "command": "sturm",
      "profile": {"kind": "sin", "parameters": {}},
      "numeric": {"n": 128},
      "output": "runs/sturm"
    }

``result.json`` holds the numerical payload (deterministic for a given
config), ``manifest.json`` the provenance (config hash, wall time, version).
Exit status: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import fields as F
from .bicharacteristics import estimate_lambda_m, estimate_mu0
from .galerkin import galerkin_reduce
from .io import samples_to_csv, write_csv, write_json
from .lyapunov_perron import solve_fixed_point, toy_system, unstable_graph
from .rayleigh import Shooter, continue_branch
from .spectra2d import DichotomyError, assemble_planar, assemble_shear3d, dichotomy_split, real_form, unstable_spectrum
from .sturm_liouville import build_K, lowest_eigenpair

log = logging.getLogger("idyll")

COMMANDS = ("sturm", "rayleigh-sweep", "spectrum2d", "spectrum3d", "lambda-m", "mu0", "manifold")
TOP_KEYS = {"command", "profile", "numeric", "output"}

PROFILE_PARAMS = {
    "sin": set(),
    "sin-beta": {"beta", "periods"},
    "custom-samples": {"samples", "length", "inflection_value"},
    "shear3d": {"amp_y", "amp_z"},
    "abc": {"A", "B", "C"},
    "constant": {"u"},
    "toy": set(),
}
PLANAR_KINDS = {"sin", "sin-beta", "custom-samples"}
FLOW_KINDS = {"shear3d", "abc", "constant"}

NUMERIC = {
    "n": (int, lambda v: v >= 8 and v % 2 == 0, "an even integer >= 8"),
    "n_modes": (int, lambda v: v >= 16, "an integer >= 16"),
    "n_modes_z": (int, lambda v: v >= 1, "a positive integer"),
    "tol": (float, lambda v: 1e-12 <= v <= 1e-6, "in [1e-12, 1e-6]"),
    "T": (float, lambda v: v >= 10, ">= 10"),
    "n_samples": (int, lambda v: v >= 1, "a positive integer"),
    "seed": (int, lambda v: v >= 0, "a nonnegative integer"),
    "alpha": (float, lambda v: v > 0, "positive"),
    "alpha_grid": (list, lambda v: len(v) > 0 and all(isinstance(a, (int, float)) and a > 0 for a in v), "a nonempty list of positive numbers"),
    "lambda_cs": (float, lambda v: True, "a number"),
    "lambda_u": (float, lambda v: True, "a number"),
    "radius": (float, lambda v: v > 0, "positive"),
    "m": (int, lambda v: 0 <= v <= 4, "an integer in 0..4"),
    "T_max": (float, lambda v: v > 0, "positive"),
    "dt": (float, lambda v: 0 < v <= 1, "in (0, 1]"),
    "horizon": (float, lambda v: 0 < v <= 5, "in (0, 5]"),
}

COMMAND_NUMERIC = {
    "sturm": {"n"},
    "rayleigh-sweep": {"n", "alpha_grid"},
    "spectrum2d": {"n", "n_modes", "alpha", "lambda_cs", "lambda_u"},
    "spectrum3d": {"n", "n_modes", "n_modes_z", "alpha"},
    "lambda-m": {"m", "T", "n_samples", "seed", "tol"},
    "mu0": {"T", "n_samples", "seed", "tol"},
    "manifold": {"n", "n_modes", "alpha", "lambda_cs", "lambda_u", "radius", "n_samples", "seed", "T_max", "dt"},
}
REQUIRED = {
    "rayleigh-sweep": {"alpha_grid"},
    "spectrum2d": {"alpha"},
    "spectrum3d": {"alpha"},
    "lambda-m": {"m", "T", "n_samples"},
    "mu0": {"T", "n_samples"},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    profile_kind: str
    profile_params: dict
    numeric: dict
    output: str | None = None
    raw: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.numeric.get(key, default)


def _check_keys(obj: dict, allowed: set, where: str):
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}' in {where} (allowed: {', '.join(sorted(allowed)) or 'none'})")


def parse_config(raw: dict) -> RunConfig:
    """Strictly validate a decoded config; unknown keys and out-of-range values raise :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(raw, TOP_KEYS, "config")
    command = raw.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"'command' must be one of {', '.join(COMMANDS)}")
    profile = raw.get("profile", "toy" if command == "manifold" else None)
    if profile is None:
        raise ConfigError("missing key 'profile'")
    if isinstance(profile, str):
        profile = {"kind": profile}
    if not isinstance(profile, dict):
        raise ConfigError("'profile' must be a string or an object")
    _check_keys(profile, {"kind", "parameters"}, "profile")
    kind = profile.get("kind")
    if kind not in PROFILE_PARAMS:
        raise ConfigError(f"unknown profile kind '{kind}'")
    params = profile.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("'profile.parameters' must be an object")
    _check_keys(params, PROFILE_PARAMS[kind], f"profile.parameters ({kind})")
    if command in ("lambda-m", "mu0", "spectrum3d"):
        allowed = FLOW_KINDS if command != "spectrum3d" else {"shear3d"}
    elif command == "manifold":
        allowed = PLANAR_KINDS | {"toy"}
    else:
        allowed = PLANAR_KINDS
    if kind not in allowed:
        raise ConfigError(f"profile kind '{kind}' is not valid for command '{command}' (use one of {', '.join(sorted(allowed))})")

    numeric = raw.get("numeric", {})
    if not isinstance(numeric, dict):
        raise ConfigError("'numeric' must be an object")
    _check_keys(numeric, COMMAND_NUMERIC[command], f"numeric ({command})")
    clean = {}
    for key, value in numeric.items():
        typ, ok, desc = NUMERIC[key]
        if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"numeric.{key} must be {desc}")
        if typ is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"numeric.{key} must be {desc}")
            value = float(value)
        if typ is list and not isinstance(value, list):
            raise ConfigError(f"numeric.{key} must be {desc}")
        if not ok(value):
            raise ConfigError(f"numeric.{key} must be {desc}, got {value!r}")
        clean[key] = value
    missing = sorted(REQUIRED.get(command, set()) - set(clean))
    if missing:
        raise ConfigError(f"missing numeric key '{missing[0]}' for command '{command}'")
    if command in ("lambda-m", "mu0") and clean["n_samples"] < 100:
        raise ConfigError("numeric.n_samples must be at least 100")
    if command == "manifold" and kind != "toy" and "alpha" not in clean:
        raise ConfigError("missing numeric key 'alpha' for a Galerkin manifold")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("'output' must be a string")
    return RunConfig(command, kind, dict(params), clean, output, raw)


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)


# ---------------------------------------------------------------------------
# builders


def build_profile(cfg: RunConfig) -> F.ShearProfile:
    n = cfg.get("n", 128)
    p = cfg.profile_params
    if cfg.profile_kind == "sin":
        return F.sin_profile(n)
    if cfg.profile_kind == "sin-beta":
        if "beta" not in p:
            raise ConfigError("profile 'sin-beta' needs parameters.beta")
        return F.sin_beta_profile(float(p["beta"]), n, int(p.get("periods", 1)))
    if "samples" not in p or "length" not in p:
        raise ConfigError("profile 'custom-samples' needs parameters.samples and parameters.length")
    return F.custom_profile(np.asarray(p["samples"], dtype=float), float(p["length"]), p.get("inflection_value"))


def build_flow(cfg: RunConfig) -> F.VectorField3D:
    p = cfg.profile_params
    if cfg.profile_kind == "shear3d":
        return F.sinusoidal_shear(float(p.get("amp_y", 1.0)), float(p.get("amp_z", 0.0)))
    if cfg.profile_kind == "abc":
        return F.abc_flow(float(p.get("A", 1.0)), float(p.get("B", 1.0)), float(p.get("C", 1.0)))
    return F.constant_flow(tuple(p.get("u", (1.0, 0.0, 0.0))))


# ---------------------------------------------------------------------------
# commands; each returns (payload, {file name: writer})


def run_sturm(cfg, out: Path, threads: int):
    profile = build_profile(cfg)
    K = build_K(profile)
    sl = lowest_eigenpair(K, profile.grid)
    samples_to_csv(out / "ground_state.csv", profile.grid, K=K, phi_s=sl.phi_s)
    payload = {
        "alpha_max": sl.alpha_max,
        "lambda_min": sl.lambda_min,
        "gap": sl.gap,
        "y1": sl.y1,
        "residual": sl.residual,
        "U_s": _inflection(profile),
        "grid": {"n": profile.grid.n, "length": profile.grid.length},
        "phi_s": "ground_state.csv",
    }
    return payload


def _inflection(profile):
    from .sturm_liouville import find_inflection_values

    if profile.inflection_value is not None:
        return float(profile.inflection_value)
    _, values = find_inflection_values(profile)
    return float(values[0]) if len(values) else None


def run_rayleigh_sweep(cfg, out: Path, threads: int):
    profile = build_profile(cfg)
    shooter = Shooter(profile)
    alphas = sorted((float(a) for a in cfg.get("alpha_grid")), reverse=True)
    branch = continue_branch(profile, shooter.U_s, alphas, shooter=shooter)
    rows = []
    modes = []
    for mode in branch.modes:
        rows.append([mode.alpha, mode.c.real, mode.c.imag, mode.growth_rate, abs(mode.discriminant_residual)])
        modes.append({"alpha": mode.alpha, "c": mode.c, "growth_rate": mode.growth_rate, "discriminant_residual": abs(mode.discriminant_residual), "iterations": mode.iterations})
    write_csv(out / "branch.csv", ["alpha", "re_c", "im_c", "growth_rate", "residual"], rows)
    return {
        "U_s": shooter.U_s,
        "alpha_max": shooter.alpha_max,
        "modes": modes,
        "diagnostic": branch.diagnostic,
        "files": {"branch": "branch.csv"},
    }


def _dichotomy_report(op, lambda_cs=None, lambda_u=None):
    try:
        split = dichotomy_split(op, lambda_cs, lambda_u)
    except DichotomyError as exc:
        return {"error": str(exc)}
    return {"lambda_cs": split.lambda_cs, "lambda_u": split.lambda_u, "rank_u": split.rank_u, "M": split.M, "t_grid": [float(split.t_grid[0]), float(split.t_grid[-1])]}


def _spectrum_payload(op, out: Path, lambda_cs=None, lambda_u=None):
    eigs, sector_count = unstable_spectrum(op)
    real_op = real_form(op)
    count = unstable_spectrum(real_op)[1]
    write_csv(out / "spectrum.csv", ["index", "re", "im"], [[k, float(z.real), float(z.imag)] for k, z in enumerate(eigs)])
    payload = {
        "alpha": op.alpha,
        "n_modes": op.n_modes,
        "eigenvalues": eigs,
        "unstable_count": count,
        "sector_unstable_count": sector_count,
        "leading": eigs[0],
        "c_leading": 1j * eigs[0] / op.alpha,
        "dichotomy": _dichotomy_report(real_op, lambda_cs, lambda_u) if count else None,
        "files": {"spectrum": "spectrum.csv"},
    }
    return payload


def run_spectrum2d(cfg, out: Path, threads: int):
    profile = build_profile(cfg)
    op = assemble_planar(profile, cfg.get("alpha"), cfg.get("n_modes", 64))
    return _spectrum_payload(op, out, cfg.get("lambda_cs"), cfg.get("lambda_u"))


def run_spectrum3d(cfg, out: Path, threads: int):
    p = cfg.profile_params
    amp_y, amp_z = float(p.get("amp_y", 1.0)), float(p.get("amp_z", 0.0))
    n_modes = cfg.get("n_modes", 16)
    n = cfg.get("n", 4 * n_modes)
    y = np.arange(n) * (2 * np.pi / n)
    U = amp_y * np.sin(y)[:, None] + amp_z * np.sin(y)[None, :]
    op = assemble_shear3d(U, cfg.get("alpha"), n_modes, cfg.get("n_modes_z"))
    payload = _spectrum_payload(op, out)
    payload["n_modes_z"] = op.meta["n_modes_z"]
    return payload


def run_lambda_m(cfg, out: Path, threads: int):
    flow = build_flow(cfg)
    est = estimate_lambda_m(flow, cfg.get("m"), cfg.get("T"), cfg.get("n_samples"), cfg.get("seed", 0), cfg.get("tol", 1e-10), threads=threads)
    counts, edges = np.histogram(est.per_sample, bins=20)
    write_csv(out / "per_sample_histogram.csv", ["bin_lo", "bin_hi", "count"], [[float(a), float(b), int(c)] for a, b, c in zip(edges[:-1], edges[1:], counts)])
    write_csv(out / "per_sample.csv", ["index", "exponent"], [[k, float(v)] for k, v in enumerate(est.per_sample)])
    return {
        "m": est.m,
        "T": est.T,
        "n_samples": est.n_samples,
        "seed": est.seed,
        "value": est.value,
        "bias_bound": est.bias_bound,
        "flow": flow.name,
        "per_sample_histogram": "per_sample_histogram.csv",
        "files": {"per_sample": "per_sample.csv", "per_sample_histogram": "per_sample_histogram.csv"},
    }


def run_mu0(cfg, out: Path, threads: int):
    flow = build_flow(cfg)
    value = estimate_mu0(flow, cfg.get("T"), cfg.get("n_samples"), cfg.get("seed", 0), cfg.get("tol", 1e-10), threads=threads)
    return {"T": cfg.get("T"), "n_samples": cfg.get("n_samples"), "seed": cfg.get("seed", 0), "value": value, "flow": flow.name}


def run_manifold(cfg, out: Path, threads: int):
    if cfg.profile_kind == "toy":
        system = toy_system()
        descriptor = {"kind": "toy", "equations": "x' = x, y' = -y + x^2"}
    else:
        profile = build_profile(cfg)
        system = galerkin_reduce(profile, cfg.get("alpha"), cfg.get("n_modes", 16), cfg.get("lambda_cs"), cfg.get("lambda_u"), seed=cfg.get("seed", 0))
        descriptor = {"kind": "galerkin", "profile": profile.name, "alpha": cfg.get("alpha"), "n_modes": cfg.get("n_modes", 16), "dim": system.dim}
    kw = {"T_max": cfg.get("T_max", 30.0), "dt": cfg.get("dt", 0.05)}
    lam = system.default_lambda()
    delta1 = system.delta1(lam)
    radius = cfg.get("radius", delta1 / (2 * system.C0))
    graph = unstable_graph(system, radius, cfg.get("n_samples", 21), **kw)
    header = [f"zu_{k}" for k in range(system.rank_u)] + [f"h_{k}" for k in range(system.dim)]
    write_csv(out / "graph.csv", header, [list(map(float, c)) + list(map(float, np.real(h))) for c, h in zip(graph.coords, graph.h)])
    # one representative decaying trajectory from the rim of the ball
    rim = np.zeros(system.rank_u)
    rim[0] = radius
    z_u0 = system.from_u_coordinates(rim)
    fp = solve_fixed_point(z_u0, system, **kw)
    t = fp.path.t_grid
    norms = np.linalg.norm(fp.path.z, axis=1)
    bound = 2 * system.C0 * np.linalg.norm(z_u0) * np.exp(lam * t)
    write_csv(out / "trajectory.csv", ["t", "norm_z", "bound"], [[float(a), float(b), float(c)] for a, b, c in zip(t, norms, bound)])
    return {
        "system": descriptor,
        "lambda": lam,
        "lambda_cs": system.lambda_cs,
        "lambda_u": system.lambda_u,
        "delta1": delta1,
        "radius": radius,
        "C0": system.C0,
        "C1": system.C1,
        "rank_u": system.rank_u,
        "contraction_factor": max(graph.contraction_factor, fp.contraction_factor),
        "tangency_norm": graph.tangency_norm,
        "decay_bound_holds": fp.bound_ok,
        "files": {"graph": "graph.csv", "trajectory": "trajectory.csv"},
    }


RUNNERS = {
    "sturm": run_sturm,
    "rayleigh-sweep": run_rayleigh_sweep,
    "spectrum2d": run_spectrum2d,
    "spectrum3d": run_spectrum3d,
    "lambda-m": run_lambda_m,
    "mu0": run_mu0,
    "manifold": run_manifold,
}


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def run(cfg: RunConfig, output: str | Path | None = None, threads: int = 1) -> int:
    """Execute ``cfg``; returns the process exit status."""
    out = Path(output or cfg.output or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return 1
    start = time.perf_counter()
    status = 0
    try:
        payload = RUNNERS[cfg.command](cfg, out, threads)
        payload = {"command": cfg.command, "config": cfg.raw, "result": payload}
        write_json(out / "result.json", payload)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical failure of any kind is reported, not raised
        log.debug("numerical failure", exc_info=True)
        status = 2
        write_json(out / "error.json", {"command": cfg.command, "error": type(exc).__name__, "message": str(exc)})
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
    write_json(
        out / "manifest.json",
        {
            "config_sha256": config_hash(cfg.raw),
            "wall_time_s": time.perf_counter() - start,
            "version": __version__,
            "command": cfg.command,
            "threads": threads,
            "status": status,
            "payload": "result.json" if status == 0 else "error.json",
        },
    )
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="idyll", description="Run one instability computation described by a JSON config.")
    parser.add_argument("config", help="path to the JSON run configuration")
    parser.add_argument("--output", help="output directory (overrides the config's 'output')")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for per-sample computations")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg, args.output, args.threads)


if __name__ == "__main__":
    sys.exit(main())
