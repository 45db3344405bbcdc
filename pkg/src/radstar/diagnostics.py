"""Run diagnostics: the strong-solution energy, stretch monitors, vacuum and
centre checks, and the total-energy ledger.

All functions are pure functions of (state, grid); ``DiagnosticsTracker``
adds the running time maxima and time integrals needed for the energy
functional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InversionError
from .evolver import (
    LagrangianGrid,
    LagrangianState,
    gravitational_energy,
    rates,
)
from .params import StarParams

M0_LIMIT = 2.0


@dataclass(frozen=True)
class CutoffChi:
    """Interior cut-off: 1 on [0, R0/4], 0 on [R0/2, R0], quintic smoothstep between."""

    R0: float

    def __call__(self, x):
        s = np.clip((np.asarray(x, dtype=float) - 0.25 * self.R0) / (0.25 * self.R0), 0.0, 1.0)
        return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)

    def derivative(self, x):
        s = np.clip((np.asarray(x, dtype=float) - 0.25 * self.R0) / (0.25 * self.R0), 0.0, 1.0)
        return -30.0 * s * s * (1.0 - s) ** 2 / (0.25 * self.R0)

    @property
    def max_slope(self) -> float:
        return 7.5 / self.R0

    @property
    def integral(self) -> float:
        # R0/4 on the plateau plus half of the transition
        return 0.375 * self.R0


# ---------------------------------------------------------------------------
# discrete derivatives


def _trapezoid_faces(values: np.ndarray, dx: float) -> float:
    return float(dx * (np.sum(values) - 0.5 * (values[0] + values[-1])))


def _midpoint_cells(values: np.ndarray, dx: float) -> float:
    return float(dx * np.sum(values))


def _face_over_x(f_face: np.ndarray, grid: LagrangianGrid) -> np.ndarray:
    """f/x on faces, with the centre value f_x(0+) from the first cell."""
    out = np.empty_like(f_face)
    out[1:] = f_face[1:] / grid.x_face[1:]
    out[0] = (f_face[1] - f_face[0]) / grid.dx
    return out


def theta_gradient(Theta: np.ndarray, grid: LagrangianGrid) -> np.ndarray:
    """Theta_x on faces: zero at the centre, one-sided quadratic (Theta = 0) at the surface."""
    g = np.empty(grid.N + 1)
    g[0] = 0.0
    g[1:-1] = np.diff(Theta) / grid.dx
    g[-1] = -(9.0 * Theta[-1] - Theta[-2]) / (3.0 * grid.dx)
    return g


# ---------------------------------------------------------------------------
# energy functional


INSTANT_KEYS = (
    "x_sqrt_rho0_v",
    "x_sqrt_rho0_v_t",
    "x_sqrt_rho0_theta",
    "x_sqrt_rho0_theta_t",
    "sqrt_chi_rho0_v",
    "sqrt_chi_rho0_v_t",
    "x_v_x",
    "v",
    "x_theta_x",
    "sqrt_chi_v_x",
    "sqrt_chi_v_over_x",
)
DISSIPATION_KEYS = (
    "x_v_x",
    "x_v_xt",
    "v",
    "v_t",
    "x_theta_x",
    "x_theta_xt",
    "sqrt_chi_v_x",
    "sqrt_chi_v_xt",
    "sqrt_chi_v_over_x",
    "sqrt_chi_v_t_over_x",
    "x_sqrt_rho0_v_t",
    "x_sqrt_rho0_theta_t",
    "sqrt_chi_rho0_v_t",
)


def e1_energy(
    state: LagrangianState,
    v_t: np.ndarray,
    theta_t: np.ndarray,
    grid: LagrangianGrid,
    chi: CutoffChi | None = None,
) -> dict[str, float]:
    """Squared weighted L2 norms (in x) entering the strong-solution energy.

    ``v_t`` (faces) and ``theta_t`` (cells) should be the right-hand sides of
    the equations on ``state``.  Keys are the weighted quantities; every
    value is a squared norm.  The dissipation integrands (time derivatives
    of the gradients included) come back with a ``dt:`` prefix.
    """
    if chi is None:
        chi = CutoffChi(grid.R0)
    dx = grid.dx
    xf, xc = grid.x_face, grid.x_cell
    rho_f, rho_c = grid.rho0_face, grid.rho0_cell
    chi_f, chi_c = chi(xf), chi(xc)
    v = state.v_face
    Th = state.Theta_cell

    def face(w):
        return _trapezoid_faces(w, dx)

    def cell(w):
        return _midpoint_cells(w, dx)

    v_x = np.diff(v) / dx
    v_xt = np.diff(v_t) / dx
    th_x = theta_gradient(Th, grid)
    th_xt = theta_gradient(theta_t, grid)
    v_over_x = _face_over_x(v, grid)
    vt_over_x = _face_over_x(v_t, grid)

    out = {
        "x_sqrt_rho0_v": face(xf**2 * rho_f * v**2),
        "x_sqrt_rho0_v_t": face(xf**2 * rho_f * v_t**2),
        "x_sqrt_rho0_theta": cell(xc**2 * rho_c * Th**2),
        "x_sqrt_rho0_theta_t": cell(xc**2 * rho_c * theta_t**2),
        "sqrt_chi_rho0_v": face(chi_f * rho_f * v**2),
        "sqrt_chi_rho0_v_t": face(chi_f * rho_f * v_t**2),
        "x_v_x": cell(xc**2 * v_x**2),
        "v": face(v**2),
        "x_theta_x": face(xf**2 * th_x**2),
        "sqrt_chi_v_x": cell(chi_c * v_x**2),
        "sqrt_chi_v_over_x": face(chi_f * v_over_x**2),
    }
    extra = {
        "x_v_xt": cell(xc**2 * v_xt**2),
        "v_t": face(v_t**2),
        "x_theta_xt": face(xf**2 * th_xt**2),
        "sqrt_chi_v_xt": cell(chi_c * v_xt**2),
        "sqrt_chi_v_t_over_x": face(chi_f * vt_over_x**2),
    }
    merged = {**out, **extra}
    for k in DISSIPATION_KEYS:
        out["dt:" + k] = merged[k]
    return out


# ---------------------------------------------------------------------------
# point-wise monitors


def _stretches(state: LagrangianState, grid: LagrangianGrid):
    r_x = np.diff(state.r_face) / grid.dx
    if np.any(r_x <= 0):
        raise InversionError("r_x <= 0: the Lagrangian map is not monotone")
    r_over_x = _face_over_x(state.r_face, grid)
    return r_x, r_over_x


def monitors(state: LagrangianState, grid: LagrangianGrid) -> tuple[float, float]:
    """(Lambda0, M0): grid suprema of the stretch ratios (plus Theta/sigma for Lambda0)."""
    r_x, r_over_x = _stretches(state, grid)
    m0 = max(np.max(r_x), np.max(r_over_x), np.max(1.0 / r_x), np.max(1.0 / r_over_x))
    v_x = np.diff(state.v_face) / grid.dx
    v_over_x = _face_over_x(state.v_face, grid)
    lam = max(
        np.max(1.0 / r_x),
        np.max(1.0 / r_over_x),
        np.max(np.abs(r_x) + np.abs(v_x)),
        np.max(np.abs(r_over_x) + np.abs(v_over_x)),
        np.max(state.Theta_cell / grid.sigma_cell),
    )
    return float(lam), float(m0)


class VacuumCheck(NamedTuple):
    min_neg_slope: float
    min_theta_over_sigma: float

    @property
    def ok(self) -> bool:
        return self.min_neg_slope > 0 and self.min_theta_over_sigma > 0


def vacuum_check(state: LagrangianState, grid: LagrangianGrid) -> VacuumCheck:
    """Minima of -Theta_x (faces) and Theta/sigma (cells) on (R0/2, R0]."""
    th_x = theta_gradient(state.Theta_cell, grid)
    outer_f = grid.x_face > 0.5 * grid.R0
    outer_c = grid.x_cell > 0.5 * grid.R0
    return VacuumCheck(
        float(np.min(-th_x[outer_f])),
        float(np.min(state.Theta_cell[outer_c] / grid.sigma_cell[outer_c])),
    )


def center_slope(state: LagrangianState, grid: LagrangianGrid) -> float:
    """One-sided estimate (Theta_{3/2} - Theta_{1/2}) / dx of Theta_x(0+)."""
    return float((state.Theta_cell[1] - state.Theta_cell[0]) / grid.dx)


# ---------------------------------------------------------------------------
# energy ledger


@dataclass(frozen=True)
class EnergyParts:
    kinetic: float
    internal: float
    gravitational: float

    @property
    def total(self) -> float:
        return self.kinetic + self.internal + self.gravitational

    @property
    def scale(self) -> float:
        return abs(self.kinetic) + abs(self.internal) + abs(self.gravitational)


def energy_parts(state: LagrangianState, grid: LagrangianGrid, params: StarParams) -> EnergyParts:
    return EnergyParts(
        0.5 * float(np.sum(grid.face_mass * state.v_face**2)),
        params.c_nu * float(np.sum(grid.thermal_mass * state.Theta_cell)),
        gravitational_energy(grid, state.r_face),
    )


@dataclass(frozen=True)
class LedgerResult:
    times: np.ndarray
    residuals: np.ndarray  # E(t) - E(0) - heat_in(t)
    E_scale: float

    @property
    def relative(self) -> np.ndarray:
        return np.abs(self.residuals) / self.E_scale

    @property
    def max_relative(self) -> float:
        return float(np.max(self.relative))


def energy_ledger(snapshots, grid: LagrangianGrid, params: StarParams) -> LedgerResult:
    """Residual of total energy against the accumulated heat input.

    Heat input is heating plus the (negative) surface flux, summed by the
    evolver with the same step sizes it used.  E_scale is the sum of the
    magnitudes of the initial energy parts.
    """
    first = energy_parts(snapshots[0].state, grid, params)
    E0 = first.total
    times, res = [], []
    for snap in snapshots:
        e = energy_parts(snap.state, grid, params).total
        times.append(snap.state.t)
        res.append(e - E0 - (snap.heat_in - snapshots[0].heat_in))
    return LedgerResult(np.array(times), np.array(res), first.scale or 1.0)


# ---------------------------------------------------------------------------
# per-snapshot report


@dataclass(frozen=True)
class DiagnosticsReport:
    t: float
    e1_components: dict
    e1_total: float
    lambda0: float
    m0: float
    vacuum_min_negslope: float
    vacuum_min_theta_over_sigma: float
    center_theta_slope: float
    energy_ledger_residual: float  # relative to E_scale

    @property
    def m0_alert(self) -> bool:
        return self.m0 > M0_LIMIT

    def row(self) -> dict:
        out = {
            "t": self.t,
            "e1_total": self.e1_total,
            "lambda0": self.lambda0,
            "m0": self.m0,
            "vacuum_min_negslope": self.vacuum_min_negslope,
            "vacuum_min_theta_over_sigma": self.vacuum_min_theta_over_sigma,
            "center_theta_slope": self.center_theta_slope,
            "energy_ledger_residual": self.energy_ledger_residual,
        }
        for k, v in self.e1_components.items():
            out["e1:" + k] = v
        return out


@dataclass(eq=False)
class DiagnosticsTracker:
    """Feeds snapshots in time order; keeps sup-in-time and L2-in-time parts of E1."""

    grid: LagrangianGrid
    params: StarParams
    chi: CutoffChi = None
    _sup: dict = field(default_factory=dict)
    _int: dict = field(default_factory=dict)
    _prev: tuple | None = None
    _E0: EnergyParts | None = None
    _heat0: float = 0.0

    def __post_init__(self):
        if self.chi is None:
            self.chi = CutoffChi(self.grid.R0)

    def observe(self, snap) -> DiagnosticsReport:
        state = snap.state
        v_t, th_t = rates(state, self.grid, self.params)
        comps = e1_energy(state, v_t, th_t, self.grid, self.chi)
        inst = {k: v for k, v in comps.items() if not k.startswith("dt:")}
        dens = {k[3:]: v for k, v in comps.items() if k.startswith("dt:")}
        for k, v in inst.items():
            self._sup[k] = max(self._sup.get(k, 0.0), v)
        if self._prev is None:
            self._int = {k: 0.0 for k in dens}
        else:
            t_prev, d_prev = self._prev
            h = state.t - t_prev
            for k, v in dens.items():
                self._int[k] += 0.5 * h * (v + d_prev[k])
        self._prev = (state.t, dens)

        parts = energy_parts(state, self.grid, self.params)
        if self._E0 is None:
            self._E0 = parts
            self._heat0 = snap.heat_in
        resid = parts.total - self._E0.total - (snap.heat_in - self._heat0)
        components = {("sup:" + k): v for k, v in self._sup.items()}
        components.update({("int:" + k): v for k, v in self._int.items()})
        lam, m0 = monitors(state, self.grid)
        vac = vacuum_check(state, self.grid)
        return DiagnosticsReport(
            t=float(state.t),
            e1_components=components,
            e1_total=float(sum(components.values())),
            lambda0=lam,
            m0=m0,
            vacuum_min_negslope=vac.min_neg_slope,
            vacuum_min_theta_over_sigma=vac.min_theta_over_sigma,
            center_theta_slope=center_slope(state, self.grid),
            energy_ledger_residual=abs(resid) / (self._E0.scale or 1.0),
        )


def max_theta_gradient(state: LagrangianState, grid: LagrangianGrid) -> float:
    return float(np.max(np.abs(theta_gradient(state.Theta_cell, grid))))


def finite_report(report: DiagnosticsReport) -> bool:
    vals = [v for k, v in report.row().items()]
    return all(math.isfinite(v) for v in vals)
