"""CSV / JSON serialization, key=value config files and run manifests.

Floats are written as the shortest decimal that round-trips (``repr``), so
write -> read -> write is byte-identical and files from two identical runs
compare equal.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _parse_cell(s: str):
    return None if s == "" else float(s)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    """Header and rows of floats (empty cells become None)."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = [[_parse_cell(c) for c in row] for row in rd]
    return header, rows


def read_columns(path) -> dict[str, np.ndarray]:
    header, rows = read_csv(path)
    cols = {}
    for i, name in enumerate(header):
        vals = [row[i] for row in rows if i < len(row) and row[i] is not None]
        cols[name] = np.array(vals, dtype=float)
    return cols


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, Path):
        return str(obj)
    return obj


# ---------------------------------------------------------------------------
# domain writers


PROFILE_COLUMNS = ("r", "u", "rho", "theta", "psi")
SNAPSHOT_COLUMNS = ("x_face", "r", "v", "x_cell", "rho0", "Theta")


def write_profile(profile, out_dir, fit=None) -> list[Path]:
    """profile.csv (one row per radial node) and profile.json (summary header)."""
    out_dir = Path(out_dir)
    rows = zip(profile.r_grid, profile.u, profile.rho, profile.theta, profile.psi)
    csv_path = write_csv(out_dir / "profile.csv", PROFILE_COLUMNS, rows)
    p, e = profile.params, profile.exponents
    head = {
        "K": p.K,
        "epsilon": p.epsilon,
        "epsilon_K": p.epsilon_K,
        "S": e.S,
        "K_bar": e.K_bar,
        "gamma_eps": e.gamma_eps,
        "alpha_eps": e.alpha_eps,
        "R": profile.R,
        "mass_tilde": profile.mass_tilde,
        "M": profile.M,
        "rho_c": profile.central[0],
        "theta_c": profile.central[1],
        "n_nodes": len(profile.r_grid),
    }
    if fit is not None:
        head["boundary_fit"] = {
            "rho_exponent": fit.rho_exponent,
            "theta_slope_at_R": fit.theta_slope_at_R,
            "theta_over_sigma_limit": fit.theta_over_sigma_limit,
        }
    json_path = write_json(out_dir / "profile.json", head)
    return [csv_path, json_path]


def snapshot_rows(grid, state):
    for j in range(grid.N + 1):
        if j < grid.N:
            cell = (grid.x_cell[j], grid.rho0_cell[j], state.Theta_cell[j])
        else:
            cell = (None, None, None)
        yield (grid.x_face[j], state.r_face[j], state.v_face[j]) + cell


def write_snapshot(path, grid, state) -> Path:
    return write_csv(path, SNAPSHOT_COLUMNS, snapshot_rows(grid, state))


def read_snapshot(path) -> dict[str, np.ndarray]:
    cols = read_columns(path)
    missing = [c for c in SNAPSHOT_COLUMNS if c not in cols]
    if missing:
        raise ConfigError(f"{path}: missing snapshot columns {missing}")
    return cols


def write_diagnostics(path, reports) -> Path:
    if not reports:
        return write_csv(path, ["t"], [])
    header = list(reports[0].row().keys())
    return write_csv(path, header, ([r.row().get(k) for k in header] for r in reports))


# ---------------------------------------------------------------------------
# config files

CONFIG_KEYS = {
    # physics
    "K": float,
    "epsilon": float,
    "c_nu": float,
    "mu": float,
    "lambda": float,
    "iota": int,
    # stepping
    "t_end": float,
    "cfl": float,
    "snapshot_every": float,
    "theta_floor": float,
    "implicit_solver_tol": float,
    "dt_max": float,
    "max_steps": int,
    # grid and initial data
    "N": int,
    "initial": str,
    "a": float,
    "b": float,
    "entropy": float,
    "u0": float,
    "mass": float,
    "central_density": float,
    "custom_csv": str,
}
CONFIG_ALIASES = {"lambda_visc": "lambda", "S": "entropy"}


def parse_config(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; unknown keys are errors.

    ``initial = selfsimilar 1 0.5`` and ``initial = custom file.csv`` are
    shorthands for the a, b and custom_csv keys.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = CONFIG_ALIASES.get(key, key)
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if key == "initial":
            parts = value.split()
            if not parts or parts[0] not in ("steady", "selfsimilar", "custom"):
                raise ConfigError(f"{source}:{lineno}: initial must be steady, selfsimilar or custom")
            out["initial"] = parts[0]
            try:
                if parts[0] == "selfsimilar" and len(parts) > 1:
                    if len(parts) != 3:
                        raise ValueError("selfsimilar takes a and b")
                    out["a"], out["b"] = float(parts[1]), float(parts[2])
                elif parts[0] == "custom" and len(parts) > 1:
                    out["custom_csv"] = " ".join(parts[1:])
                elif parts[0] == "steady" and len(parts) > 1:
                    raise ValueError("steady takes no arguments")
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: {exc}") from None
            continue
        try:
            kind = CONFIG_KEYS[key]
            if kind is int:
                fv = float(value)
                if fv != int(fv):
                    raise ValueError
                out[key] = int(fv)
            else:
                out[key] = kind(value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value {value!r} for {key!r}") from None
    return out


def format_config(cfg: dict) -> str:
    return "".join(f"{k} = {fmt(v) if not isinstance(v, str) else v}\n" for k, v in sorted(cfg.items()))


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


# ---------------------------------------------------------------------------
# manifests


def timestamp() -> str:
    """UTC wall time, or SOURCE_DATE_EPOCH when set (reproducible builds)."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        when = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        when = _dt.datetime.now(tz=_dt.timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str = __version__
    started: str = ""
    finished: str = ""
    summary: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    status: str = "ok"

    def to_dict(self, root) -> dict:
        root = Path(root)
        outs = []
        for p in self.outputs:
            rel = Path(os.path.relpath(p, root)).as_posix()
            outs.append({"file": rel, "sha256": sha256_of(p)})
        return {
            "command": self.command,
            "config": self.config,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "summary": self.summary,
            "outputs": outs,
            "status": self.status,
        }

    def write(self, root) -> Path:
        return write_json(Path(root) / "manifest.json", self.to_dict(root))


def read_manifest(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
