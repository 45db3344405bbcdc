"""Lagrangian free-boundary evolution of the spherically symmetric star.

Mass coordinate x in [0, R0] with reduced mass element x^2 rho0 dx.  The
grid is staggered: radii r and velocities v live on the faces x_j = j dx,
the temperature Theta on the cells x_{j+1/2}.  A step is split into

1. momentum on the faces: pressure and gravity explicit, viscosity implicit
   (tridiagonal, only when iota = 1);
2. geometry: r <- r + dt v;
3. energy on the cells: adiabatic compression integrated along the new
   volume ratio, then conduction implicit (backward Euler), heating and
   viscous dissipation as sources.

The discrete forces are the exact variations of the discrete internal,
gravitational and dissipation energies, so that kinetic + internal +
gravitational energy changes only by heating and the surface heat flux (up
to the time-splitting error).  Viscous terms follow from the dissipation
rate V [(lambda + 2mu/3) D^2 + (4mu/3) S^2] per cell, with D = dV/dt / V the
divergence and S = dv/dr - v/r the shear; the free surface then carries the
natural zero-traction condition (2mu+lambda) v_x/r_x + 2 lambda v/r = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import (
    DomainError,
    InversionError,
    NegativeTemperature,
    RadStarError,
    ShapeMismatch,
    SolverDiverged,
)
from .params import StarParams
from .steady import SteadyProfile

log = logging.getLogger(__name__)

MIN_CELLS = 8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True, eq=False)
class LagrangianGrid:
    """Fixed Lagrangian data: coordinates, rho0 and the mass bookkeeping.

    ``cell_mass`` and ``face_mass`` are exact integrals of x^2 rho0 over
    the cells and over the dual cells [x_j - dx/2, x_j + dx/2] (half cells
    at both ends).  ``thermal_mass`` = rho0(x_c) (x_{j+1}^3 - x_j^3)/3 is the
    heat capacity weight of a cell and also sets its pressure.
    """

    R0: float
    N: int
    x_face: np.ndarray
    x_cell: np.ndarray
    rho0_cell: np.ndarray
    rho0_face: np.ndarray
    m_face: np.ndarray
    m_cell: np.ndarray
    cell_mass: np.ndarray
    face_mass: np.ndarray
    thermal_mass: np.ndarray
    Phi_cell: np.ndarray

    @property
    def dx(self) -> float:
        return self.R0 / self.N

    @property
    def sigma_cell(self) -> np.ndarray:
        return self.R0 - self.x_cell

    @property
    def volume0(self) -> np.ndarray:
        return np.diff(self.x_face**3) / 3.0


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _half_cell_integrals(rho0: Callable, edges: np.ndarray) -> np.ndarray:
    """int x^2 rho0 dx over consecutive intervals of ``edges`` (8-point Gauss)."""
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = pts**2 * np.asarray(rho0(pts.ravel()), dtype=float).reshape(pts.shape)
    return half * (vals @ _GL_WEIGHTS)


def build_grid(
    source, N: int, R0: float | None = None, require_vacuum: bool = True, rho_tol: float = 1e-8
) -> LagrangianGrid:
    """Sample rho0 on an N-cell Lagrangian grid.

    ``source`` is a SteadyProfile (R0 = its radius) or a callable rho0(x)
    together with ``R0``.  rho0(R0) must vanish (relative to max rho0)
    unless ``require_vacuum`` is off, which is meant for test densities.  Enclosed masses come from Gauss-Legendre
    quadrature on every half cell, so that the face (dual cell) masses and
    the cell masses are consistent to round-off.
    """
    if N < MIN_CELLS:
        raise DomainError(f"need at least {MIN_CELLS} cells, got {N}")
    if isinstance(source, SteadyProfile):
        R0 = source.R
        rho0 = source.rho_at
    else:
        if R0 is None or not R0 > 0:
            raise DomainError("a callable rho0 needs a positive R0")
        rho0 = source
    R0 = float(R0)
    x_face = np.linspace(0.0, R0, N + 1)
    x_cell = 0.5 * (x_face[:-1] + x_face[1:])

    probe = np.linspace(0.0, R0, 8 * N + 1)
    rho_probe = np.asarray(rho0(probe), dtype=float)
    if np.any(rho_probe < 0) or not np.all(np.isfinite(rho_probe)):
        raise DomainError("rho0 must be finite and non-negative")
    scale = float(np.max(rho_probe))
    if not scale > 0:
        raise DomainError("rho0 vanishes identically")
    if require_vacuum and abs(rho_probe[-1]) > rho_tol * scale:
        raise DomainError(f"rho0(R0) = {rho_probe[-1]!r} does not vanish")
    rho0_cell = np.asarray(rho0(x_cell), dtype=float)
    if np.any(rho0_cell <= 0):
        raise DomainError("rho0 must be positive at every cell centre")
    rho0_face = np.asarray(rho0(x_face), dtype=float)

    halves = np.empty(2 * N + 1)
    halves[0::2] = x_face
    halves[1::2] = x_cell
    pieces = _half_cell_integrals(rho0, halves)
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    m_face = cum[0::2]
    m_cell = cum[1::2]
    cell_mass = pieces[0::2] + pieces[1::2]
    face_mass = np.empty(N + 1)
    face_mass[0] = pieces[0]
    face_mass[1:-1] = pieces[1:-1:2] + pieces[2:-1:2]
    face_mass[-1] = pieces[-1]
    thermal_mass = rho0_cell * np.diff(x_face**3) / 3.0
    Phi_cell = m_cell / x_cell**3
    _readonly(x_face, x_cell, rho0_cell, rho0_face, m_face, m_cell, cell_mass, face_mass, thermal_mass, Phi_cell)
    return LagrangianGrid(
        R0, N, x_face, x_cell, rho0_cell, rho0_face, m_face, m_cell, cell_mass, face_mass, thermal_mass, Phi_cell
    )


def phi_limit(grid: LagrangianGrid, x: np.ndarray) -> np.ndarray:
    """Phi = m(x)/x^3 with the limit rho0(0)/3 at the centre (linear in m)."""
    x = np.asarray(x, dtype=float)
    knots = np.empty(2 * grid.N + 1)
    knots[0::2], knots[1::2] = grid.x_face, grid.x_cell
    masses = np.empty(2 * grid.N + 1)
    masses[0::2], masses[1::2] = grid.m_face, grid.m_cell
    m = np.interp(x, knots, masses)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = m / x**3
    return np.where(x == 0, grid.rho0_face[0] / 3.0, out)


# ---------------------------------------------------------------------------
# state


@dataclass(frozen=True, eq=False)
class LagrangianState:
    t: float
    r_face: np.ndarray
    v_face: np.ndarray
    Theta_cell: np.ndarray

    def __post_init__(self):
        for name in ("r_face", "v_face", "Theta_cell"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def r_x(self, grid: LagrangianGrid) -> np.ndarray:
        return np.diff(self.r_face) / grid.dx

    @property
    def R(self) -> float:
        """Position of the vacuum boundary (outermost face)."""
        return float(self.r_face[-1])


def _check_state(state: LagrangianState, grid: LagrangianGrid):
    if state.r_face.shape != (grid.N + 1,) or state.v_face.shape != (grid.N + 1,):
        raise ShapeMismatch("face arrays must have N+1 entries")
    if state.Theta_cell.shape != (grid.N,):
        raise ShapeMismatch("Theta must have N entries")


def init_from_steady(
    profile: SteadyProfile,
    grid: LagrangianGrid,
    velocity_law: Callable | None = None,
    t: float = 0.0,
) -> LagrangianState:
    """r = x, Theta = theta(x_cell), v = velocity_law(x_face) with v(0) = 0."""
    if abs(profile.R - grid.R0) > 1e-10 * grid.R0:
        raise ShapeMismatch(f"profile radius {profile.R!r} differs from grid R0 {grid.R0!r}")
    if velocity_law is None:
        v = np.zeros(grid.N + 1)
    else:
        v = np.asarray(velocity_law(grid.x_face), dtype=float) * np.ones(grid.N + 1)
        if abs(v[0]) > 0:
            raise ShapeMismatch("velocity law must vanish at the centre (v(0,t) = 0)")
    return LagrangianState(t, grid.x_face.copy(), v, profile.theta_at(grid.x_cell))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class EvolveConfig:
    params: StarParams
    t_end: float
    cfl: float = 0.4
    snapshot_every: float | None = None
    theta_floor: float = 0.0
    implicit_solver_tol: float = 1e-12
    dt_max: float = 0.1
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise DomainError(f"cfl must lie in (0, 1), got {self.cfl!r}")
        if not self.t_end >= 0:
            raise DomainError("t_end must be non-negative")
        if self.snapshot_every is not None and not self.snapshot_every > 0:
            raise DomainError("snapshot_every must be positive")
        if not self.dt_max > 0:
            raise DomainError("dt_max must be positive")

    @property
    def gamma(self) -> float:
        p = self.params
        if p.epsilon_K < 1.0:
            return p.gamma_eps
        return 1.0 + p.K / p.c_nu


# ---------------------------------------------------------------------------
# discrete operators


def cell_volumes(r_face: np.ndarray) -> np.ndarray:
    return np.diff(r_face**3) / 3.0


def pressure(state: LagrangianState, grid: LagrangianGrid, params: StarParams, V=None) -> np.ndarray:
    """P = K rho Theta with rho = rho0(x_c) V0/V at the cell centres."""
    if V is None:
        V = cell_volumes(state.r_face)
    return params.K * grid.thermal_mass * state.Theta_cell / V


def pressure_force(P: np.ndarray, r_face: np.ndarray) -> np.ndarray:
    """-sum_c P_c dV_c/dr_j: r_j^2 (P_{j-1/2} - P_{j+1/2}); zero pressure outside."""
    F = np.zeros_like(r_face)
    Pext = np.append(P, 0.0)
    F[1:] = r_face[1:] ** 2 * (Pext[:-1] - Pext[1:])
    return F


def _gravity_force(grid: LagrangianGrid, r_face: np.ndarray) -> np.ndarray:
    G = np.zeros_like(r_face)
    G[1:] = -grid.face_mass[1:] * grid.m_face[1:] / r_face[1:] ** 2
    return G


def gravity_force(grid: LagrangianGrid, r_face: np.ndarray) -> np.ndarray:
    """-dW/dr_j for W = -sum_j face_mass_j m(x_j) / r_j."""
    return _gravity_force(grid, r_face)


def gravitational_energy(grid: LagrangianGrid, r_face: np.ndarray) -> float:
    return float(-np.sum(grid.face_mass[1:] * grid.m_face[1:] / r_face[1:]))


def _strain_rows(r_face: np.ndarray, V: np.ndarray):
    """Coefficients of D_c and S_c in the two face velocities of each cell."""
    rl, rr = r_face[:-1], r_face[1:]
    dr, sr = rr - rl, rr + rl
    d_left, d_right = -(rl**2) / V, rr**2 / V
    s_left, s_right = -1.0 / dr - 1.0 / sr, 1.0 / dr - 1.0 / sr
    return d_left, d_right, s_left, s_right


def strain_rates(r_face: np.ndarray, v_face: np.ndarray, V=None):
    """(D, S) per cell: divergence and shear dv/dr - v/r."""
    if V is None:
        V = cell_volumes(r_face)
    dl, dr_, sl, sr_ = _strain_rows(r_face, V)
    vl, vr = v_face[:-1], v_face[1:]
    return dl * vl + dr_ * vr, sl * vl + sr_ * vr


def viscous_dissipation(params: StarParams, r_face, v_face, V=None) -> np.ndarray:
    """Per-cell dissipation V [(lambda + 2mu/3) D^2 + (4mu/3) S^2] (zero if iota = 0)."""
    if V is None:
        V = cell_volumes(r_face)
    if not params.viscous:
        return np.zeros_like(V)
    D, S = strain_rates(r_face, v_face, V)
    kappa = params.lambda_visc + 2.0 * params.mu / 3.0
    return V * (kappa * D**2 + (4.0 * params.mu / 3.0) * S**2)


def viscous_matrix(params: StarParams, r_face: np.ndarray, V=None):
    """Banded (upper, diag, lower) form of the SPD dissipation matrix Q.

    Q is returned on all N+1 faces; the power absorbed is v^T Q v.
    """
    if V is None:
        V = cell_volumes(r_face)
    n = len(r_face)
    ab = np.zeros((3, n))
    if not params.viscous:
        return ab
    kappa = params.lambda_visc + 2.0 * params.mu / 3.0
    shear = 4.0 * params.mu / 3.0
    dl, dr_, sl, sr_ = _strain_rows(r_face, V)
    q_ll = V * (kappa * dl * dl + shear * sl * sl)
    q_rr = V * (kappa * dr_ * dr_ + shear * sr_ * sr_)
    q_lr = V * (kappa * dl * dr_ + shear * sl * sr_)
    ab[1, :-1] += q_ll
    ab[1, 1:] += q_rr
    ab[0, 1:] = q_lr  # super-diagonal: (j, j+1)
    ab[2, :-1] = q_lr  # sub-diagonal: (j+1, j)
    return ab


def _banded_matvec(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def conductances(r_face: np.ndarray) -> np.ndarray:
    """Face conductances r^2 / dr between neighbouring cell centres.

    Entry j couples cells j-1/2 and j+1/2.  Entry 0 is zero (no flux
    through the centre); entry N is unused, see ``surface_coefficients``.
    """
    rc = 0.5 * (r_face[:-1] + r_face[1:])
    g = np.zeros_like(r_face)
    g[1:-1] = r_face[1:-1] ** 2 / (rc[1:] - rc[:-1])
    return g


def surface_coefficients(r_face: np.ndarray) -> tuple[float, float]:
    """Surface flux F_N = -c1 Theta_{N-1/2} + c2 Theta_{N-3/2}.

    r^2 dTheta/dr at the surface from the quadratic through Theta = 0 at
    the surface and the last two cell centres (second order, unlike the
    mirror ghost value whose flux error is first order).
    """
    R = r_face[-1]
    d1 = R - 0.5 * (r_face[-2] + r_face[-1])
    d2 = R - 0.5 * (r_face[-3] + r_face[-2])
    c1 = R * R * d2 / (d1 * (d2 - d1))
    c2 = R * R * d1 / (d2 * (d2 - d1))
    return float(c1), float(c2)


def heat_flux(Theta: np.ndarray, r_face: np.ndarray) -> np.ndarray:
    """(r^2/r_x) Theta_x on the faces; the last entry is the surface flux."""
    g = conductances(r_face)
    c1, c2 = surface_coefficients(r_face)
    F = np.zeros_like(r_face)
    F[1:-1] = g[1:-1] * (Theta[1:] - Theta[:-1])
    F[-1] = -c1 * Theta[-1] + c2 * Theta[-2]
    return F


# ---------------------------------------------------------------------------
# time stepping


def sound_speed(state: LagrangianState, config: EvolveConfig) -> np.ndarray:
    Th = state.Theta_cell
    tmax = float(np.max(Th)) if Th.size else 0.0
    floor = 1e-12 * tmax
    return np.sqrt(config.gamma * config.params.K * np.maximum(Th, floor))


def stable_dt(state: LagrangianState, grid: LagrangianGrid, config: EvolveConfig) -> float:
    """Acoustic CFL limit cfl * min(dx r_x / c_s), capped by dt_max."""
    cs = sound_speed(state, config)
    if not np.any(cs > 0):
        return config.dt_max
    dr = np.diff(state.r_face)
    with np.errstate(divide="ignore"):
        lim = np.where(cs > 0, dr / cs, np.inf)
    return float(min(config.dt_max, config.cfl * np.min(lim)))


@dataclass(frozen=True)
class StepInfo:
    """Energy exchanged with the outside during one step (for the ledger)."""

    heating: float
    surface_flux: float


def _check_solve(ab, x, b, tol, what):
    res = _banded_matvec(ab, x) - b
    scale = np.max(np.abs(ab)) * np.max(np.abs(x)) + np.max(np.abs(b))
    if scale > 0 and not np.max(np.abs(res)) <= tol * scale:
        raise SolverDiverged(f"{what} solve residual {np.max(np.abs(res)) / scale:.3e} exceeds {tol:.1e}")
    if not np.all(np.isfinite(x)):
        raise SolverDiverged(f"{what} solve produced non-finite values")


def step(state: LagrangianState, grid: LagrangianGrid, config: EvolveConfig, dt: float, info: list | None = None):
    """Advance one operator-split step of length dt."""
    _check_state(state, grid)
    p = config.params
    r, v, Th = state.r_face, state.v_face, state.Theta_cell
    V = cell_volumes(r)
    if np.any(V <= 0):
        raise InversionError(f"cell inversion at t = {state.t!r}")

    # (1) momentum
    P = pressure(state, grid, p, V)
    force = pressure_force(P, r) + _gravity_force(grid, r)
    mass = grid.face_mass
    if p.viscous:
        ab = viscous_matrix(p, r, V)[:, 1:].copy()
        ab[0, 0] = 0.0
        ab[1] += mass[1:] / dt
        b = mass[1:] * v[1:] / dt + force[1:]
        v_in = solve_banded((1, 1), ab, b)
        _check_solve(ab, v_in, b, config.implicit_solver_tol, "momentum")
        v_new = np.concatenate([[0.0], v_in])
    else:
        v_new = v + dt * force / mass
        v_new[0] = 0.0

    # (2) geometry
    r_new = r + dt * v_new
    r_new[0] = 0.0
    V_new = cell_volumes(r_new)
    if np.any(V_new <= 0) or np.any(np.diff(r_new) <= 0):
        raise InversionError(f"cell inversion during step at t = {state.t!r}")

    # (3) energy
    Th_adiabatic = Th * (V / V_new) ** (p.K / p.c_nu)
    cap = p.c_nu * grid.thermal_mass / dt
    heat_src = p.epsilon * grid.thermal_mass
    diss = viscous_dissipation(p, r_new, v_new, V_new)
    g = conductances(r_new)
    c1, c2 = surface_coefficients(r_new)
    n = grid.N
    ab = np.zeros((3, n))
    ab[1] = cap + g[:-1] + g[1:]
    ab[1, -1] += c1
    ab[0, 1:] = -g[1:-1]
    ab[2, :-1] = -g[1:-1]
    ab[2, -2] -= c2
    b = cap * Th_adiabatic + heat_src + diss
    Th_new = solve_banded((1, 1), ab, b)
    _check_solve(ab, Th_new, b, config.implicit_solver_tol, "energy")
    tmax = float(np.max(Th_new))
    if np.min(Th_new) < -1e-12 * max(tmax, 0.0):
        raise NegativeTemperature(f"Theta = {np.min(Th_new)!r} at t = {state.t + dt!r}")
    if np.any(Th_new < config.theta_floor):
        if np.min(Th_new) < 0 or config.theta_floor > 0:
            log.warning("clipping %d cell temperatures to %g", int(np.sum(Th_new < config.theta_floor)), config.theta_floor)
        Th_new = np.maximum(Th_new, config.theta_floor)

    if info is not None:
        info.append(StepInfo(float(np.sum(heat_src)) * dt, float(-c1 * Th_new[-1] + c2 * Th_new[-2]) * dt))
    return LagrangianState(state.t + dt, r_new, v_new, Th_new)


def rates(state: LagrangianState, grid: LagrangianGrid, params: StarParams):
    """Semi-discrete right-hand sides (v_t on faces, Theta_t on cells)."""
    r, v, Th = state.r_face, state.v_face, state.Theta_cell
    V = cell_volumes(r)
    P = pressure(state, grid, params, V)
    force = pressure_force(P, r) + _gravity_force(grid, r)
    if params.viscous:
        force = force - _banded_matvec(viscous_matrix(params, r, V), v)
    v_t = force / grid.face_mass
    v_t[0] = 0.0
    dV = np.diff(r**2 * v)
    F = heat_flux(Th, r)
    rhs = (
        -P * dV
        + (F[1:] - F[:-1])
        + params.epsilon * grid.thermal_mass
        + viscous_dissipation(params, r, v, V)
    )
    return v_t, rhs / (params.c_nu * grid.thermal_mass)


# ---------------------------------------------------------------------------
# driver


@dataclass(frozen=True, eq=False)
class Snapshot:
    state: LagrangianState
    heat_in: float  # cumulative heating + surface heat flux since t = 0
    steps: int


@dataclass(eq=False)
class RunResult:
    snapshots: list
    reports: list
    error: RadStarError | None = None
    steps: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def final(self) -> LagrangianState:
        return self.snapshots[-1].state


def snapshot_times(config: EvolveConfig) -> list[float]:
    if config.t_end == 0:
        return [0.0]
    if config.snapshot_every is None:
        return [0.0, config.t_end]
    n = int(math.floor(config.t_end / config.snapshot_every + 1e-9))
    times = [k * config.snapshot_every for k in range(n + 1)]
    if config.t_end - times[-1] > 1e-12 * config.t_end:
        times.append(config.t_end)
    else:
        times[-1] = config.t_end
    return times


def run(config: EvolveConfig, grid: LagrangianGrid, state0: LagrangianState, diagnose: bool = True) -> RunResult:
    """Advance to t_end; snapshots at the configured times.

    Fatal step errors end the run early; the partial trajectory is kept and
    the error is stored on the result.
    """
    _check_state(state0, grid)
    tracker = None
    if diagnose:
        from .diagnostics import DiagnosticsTracker

        tracker = DiagnosticsTracker(grid, config.params)
    times = snapshot_times(config)
    state = state0
    heat_in = 0.0
    steps = 0
    result = RunResult([], [])

    def emit(s):
        snap = Snapshot(s, heat_in, steps)
        result.snapshots.append(snap)
        if tracker is not None:
            result.reports.append(tracker.observe(snap))

    emit(state)
    try:
        for target in times[1:]:
            while state.t < target:
                dt = stable_dt(state, grid, config)
                remaining = target - state.t
                last = dt >= remaining * (1 - 1e-12)
                dt = remaining if last else min(dt, remaining)
                info: list = []
                state = step(state, grid, config, dt, info)
                heat_in += info[0].heating + info[0].surface_flux
                steps += 1
                if last:
                    state = LagrangianState(target, state.r_face, state.v_face, state.Theta_cell)
                if steps >= config.max_steps:
                    raise SolverDiverged(f"exceeded max_steps = {config.max_steps}")
            emit(state)
    except RadStarError as exc:
        log.error("run stopped at t = %g: %s", state.t, exc)
        result.error = exc
        if result.snapshots[-1].state is not state:
            emit(state)
    result.steps = steps
    return result
