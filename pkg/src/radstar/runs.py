"""From a flat config dictionary to a finished run on disk."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import energy_ledger
from .errors import ConfigError, DomainError, ShapeMismatch
from .evolver import EvolveConfig, LagrangianState, build_grid, init_from_steady, run
from .lane_emden import DEFAULT_NODES
from .params import StarParams, entropy_for_kbar
from .selfsimilar import build_selfsimilar, exact_state
from .steady import build_steady_profile, profile_from_central_density, solve_for_mass

EVOLVE_DEFAULTS = {
    "K": 1.0,
    "epsilon": 0.5,
    "c_nu": 1.0,
    "mu": 0.0,
    "lambda": 0.0,
    "iota": 0,
    "cfl": 0.4,
    "theta_floor": 0.0,
    "implicit_solver_tol": 1e-12,
    "dt_max": 0.1,
    "max_steps": 10_000_000,
    "N": 256,
    "initial": "steady",
}


def star_params(cfg: dict) -> StarParams:
    return StarParams(
        K=cfg["K"],
        epsilon=cfg["epsilon"],
        c_nu=cfg["c_nu"],
        mu=cfg["mu"],
        lambda_visc=cfg["lambda"],
        iota=cfg["iota"],
    )


def steady_from_options(params: StarParams, entropy=None, u0=None, mass=None, central_density=None,
                        n_grid: int = DEFAULT_NODES):
    """Steady star selected by total mass, or by entropy with u0 or central density.

    With nothing given the star with K_bar = 1 and u0 = 1 is used.
    """
    if mass is not None and (entropy is not None or central_density is not None or u0 is not None):
        raise ConfigError("mass cannot be combined with entropy, u0 or central_density")
    if central_density is not None and u0 is not None:
        raise ConfigError("give either u0 or central_density, not both")
    if mass is not None:
        return solve_for_mass(params, mass, n_grid)
    S = entropy if entropy is not None else entropy_for_kbar(params, 1.0)
    if central_density is not None:
        return profile_from_central_density(params, central_density, S=S, n_grid=n_grid)
    return build_steady_profile(params, S=S, u0=1.0 if u0 is None else u0, n_grid=n_grid)


def resolve_config(raw: dict) -> dict:
    cfg = dict(EVOLVE_DEFAULTS)
    cfg.update(raw)
    if "t_end" not in cfg:
        raise ConfigError("config needs t_end")
    if cfg["initial"] == "selfsimilar":
        for k in ("a", "b"):
            if k not in cfg:
                raise ConfigError(f"selfsimilar initial data needs {k}")
        if "c_nu" in raw and raw["c_nu"] != 3.0 * cfg["K"]:
            raise ConfigError("selfsimilar runs require c_nu = 3K")
        if cfg["iota"] != 0 or cfg["mu"] != 0 or cfg["lambda"] != 0:
            raise ConfigError("selfsimilar runs are inviscid (iota = 0, mu = lambda = 0)")
        cfg["c_nu"] = 3.0 * cfg["K"]
    if cfg["initial"] == "custom" and "custom_csv" not in cfg:
        raise ConfigError("custom initial data needs custom_csv")
    return cfg


@dataclass
class PreparedRun:
    config: EvolveConfig
    grid: object
    state: LagrangianState
    exact: object = None  # self-similar solution, when there is one


def _custom_initial(cfg, params, base_dir):
    path = Path(cfg["custom_csv"])
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    try:
        cols = io.read_columns(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    for need in ("x", "rho0", "Theta"):
        if need not in cols:
            raise ConfigError(f"{path}: custom data needs columns x, rho0, Theta (and optionally v)")
    x = cols["x"]
    if x[0] != 0.0 or np.any(np.diff(x) <= 0):
        raise ConfigError(f"{path}: x must start at 0 and increase")
    R0 = float(x[-1])
    grid = build_grid(lambda s: np.interp(s, x, cols["rho0"]), cfg["N"], R0=R0)
    Theta = np.interp(grid.x_cell, x, cols["Theta"])
    v = np.interp(grid.x_face, x, cols["v"]) if "v" in cols else np.zeros(grid.N + 1)
    if v[0] != 0.0:
        raise ShapeMismatch("custom velocity must vanish at the centre")
    return grid, LagrangianState(0.0, grid.x_face.copy(), v, Theta)


def prepare_run(cfg: dict, base_dir=None) -> PreparedRun:
    """Build (EvolveConfig, grid, initial state) from a resolved config."""
    params = star_params(cfg)
    econf = EvolveConfig(
        params=params,
        t_end=cfg["t_end"],
        cfl=cfg["cfl"],
        snapshot_every=cfg.get("snapshot_every"),
        theta_floor=cfg["theta_floor"],
        implicit_solver_tol=cfg["implicit_solver_tol"],
        dt_max=cfg["dt_max"],
        max_steps=cfg["max_steps"],
    )
    kind = cfg["initial"]
    if kind == "custom":
        grid, state = _custom_initial(cfg, params, base_dir)
        return PreparedRun(econf, grid, state)
    base = steady_from_options(
        params, cfg.get("entropy"), cfg.get("u0"), cfg.get("mass"), cfg.get("central_density")
    )
    if kind == "steady":
        grid = build_grid(base, cfg["N"])
        return PreparedRun(econf, grid, init_from_steady(base, grid))
    if kind == "selfsimilar":
        sol = build_selfsimilar(base, cfg["a"], cfg["b"])
        grid = build_grid(sol.initial_profile, cfg["N"])
        return PreparedRun(econf, grid, exact_state(sol, grid, 0.0), sol)
    raise DomainError(f"unknown initial data {kind!r}")


def execute(cfg: dict, out_dir, base_dir=None):
    """Run and write snapshots, diagnostics and a summary; returns (result, files, summary)."""
    out_dir = Path(out_dir)
    prep = prepare_run(cfg, base_dir)
    result = run(prep.config, prep.grid, prep.state)
    files = []
    for k, snap in enumerate(result.snapshots):
        files.append(io.write_snapshot(out_dir / f"snapshot_{k:04d}.csv", prep.grid, snap.state))
    files.append(io.write_diagnostics(out_dir / "diagnostics.csv", result.reports))
    ledger = energy_ledger(result.snapshots, prep.grid, prep.config.params)
    final = result.snapshots[-1].state
    summary = {
        "N": prep.grid.N,
        "R0": prep.grid.R0,
        "t_final": final.t,
        "boundary_radius": final.R,
        "steps": result.steps,
        "snapshots": len(result.snapshots),
        "energy_ledger_max_relative": ledger.max_relative,
        "max_m0": max(r.m0 for r in result.reports),
    }
    if prep.exact is not None and result.ok:
        summary["exact_boundary_radius"] = prep.exact.radius(final.t)
    if result.error is not None:
        summary["error"] = f"{type(result.error).__name__}: {result.error}"
    return result, files, summary
