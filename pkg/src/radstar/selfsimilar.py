"""Exact expanding and collapsing solutions of the inviscid system.

When the heat capacity equals three times the gas constant, every steady
star generates a family of exact motions

    rho(t, r) = s^3 rho_bar(s r),  theta(t, r) = s theta_bar(s r),  u = (b/(a+bt)) r,

with s(t) = 1/(a + b t).  Particles move on straight rays: the acceleration
vanishes, pressure and gravity balance at every instant, and the
temperature decays along each particle exactly as the compression work
requires.  These are the oracles for the evolver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, LifetimeExceeded, ShapeMismatch
from .evolver import LagrangianGrid, LagrangianState, build_grid
from .params import StarParams
from .steady import SteadyProfile, build_steady_profile, homology_rescale, with_params


def default_base() -> SteadyProfile:
    """The epsilon K = 1/2 star with K_bar = 1: u = sin(r)/r on [0, pi]."""
    params = StarParams(K=1.0, epsilon=0.5, c_nu=3.0)
    return build_steady_profile(params, S=math.sqrt(0.5))


@dataclass(frozen=True, eq=False)
class SelfSimilarSolution:
    """Self-similar motion started from ``base`` rescaled to radius a * R_bar."""

    base: SteadyProfile
    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"a must be positive, got {self.a!r}")
        if not math.isfinite(self.b):
            raise DomainError("b must be finite")
        p = self.base.params
        if p.c_nu != 3.0 * p.K or p.iota != 0:
            object.__setattr__(self, "base", with_params(self.base, c_nu=3.0 * p.K, iota=0, mu=0.0, lambda_visc=0.0))

    @property
    def params(self) -> StarParams:
        return self.base.params

    @property
    def lifetime(self) -> float:
        return math.inf if self.b >= 0 else abs(self.a / self.b)

    @property
    def initial_profile(self) -> SteadyProfile:
        """rho0(x) = rho_bar(x/a)/a^3 on [0, a R_bar]."""
        cached = self.__dict__.get("_initial")
        if cached is None:
            cached = self.base if self.a == 1.0 else homology_rescale(self.base, 1.0 / self.a)
            object.__setattr__(self, "_initial", cached)
        return cached

    @property
    def R0(self) -> float:
        return self.initial_profile.R

    def radius(self, t: float) -> float:
        return (self.a + self.b * t) / self.a * self.R0


def build_selfsimilar(base: SteadyProfile | None = None, a: float = 1.0, b: float = 1.0) -> SelfSimilarSolution:
    return SelfSimilarSolution(default_base() if base is None else base, float(a), float(b))


def alpha_of_t(sol: SelfSimilarSolution, t: float) -> float:
    """Scale factor 1/(a + b t); raises LifetimeExceeded at or past collapse."""
    if t < 0:
        raise DomainError("t must be non-negative")
    denom = sol.a + sol.b * t
    if not denom > 0:
        raise LifetimeExceeded(f"t = {t!r} is past the collapse time {sol.lifetime!r}")
    return 1.0 / denom


def build_selfsimilar_grid(sol: SelfSimilarSolution, N: int) -> LagrangianGrid:
    return build_grid(sol.initial_profile, N)


def velocity_law(sol: SelfSimilarSolution):
    return lambda x: (sol.b / sol.a) * np.asarray(x, dtype=float)


def exact_state(sol: SelfSimilarSolution, grid: LagrangianGrid, t: float) -> LagrangianState:
    """Lagrangian pullback of the exact solution on ``grid`` at time t."""
    if abs(grid.R0 - sol.R0) > 1e-10 * sol.R0:
        raise ShapeMismatch(f"grid R0 {grid.R0!r} does not match the solution's {sol.R0!r}")
    s = alpha_of_t(sol, t)
    stretch = (sol.a + sol.b * t) / sol.a
    theta0 = sol.initial_profile.theta_at(grid.x_cell)
    return LagrangianState(
        t,
        stretch * grid.x_face,
        (sol.b / sol.a) * grid.x_face,
        theta0 * (sol.a * s),
    )


@dataclass(frozen=True)
class TrajectoryError:
    t: float
    r_err: float  # relative to the exact radius R(t)
    v_err: float  # relative to max |v| (absolute if the flow is static)
    theta_err: float  # relative to max Theta
    boundary_err: float  # |r_N - R(t)| / R0

    @property
    def worst(self) -> float:
        return max(self.r_err, self.v_err, self.theta_err)


def compare_state(sol: SelfSimilarSolution, grid: LagrangianGrid, state: LagrangianState) -> TrajectoryError:
    if state.r_face.shape != grid.x_face.shape or state.Theta_cell.shape != grid.x_cell.shape:
        raise ShapeMismatch("state does not live on the given grid")
    ex = exact_state(sol, grid, state.t)
    v_scale = float(np.max(np.abs(ex.v_face))) or 1.0
    return TrajectoryError(
        float(state.t),
        float(np.max(np.abs(state.r_face - ex.r_face)) / ex.r_face[-1]),
        float(np.max(np.abs(state.v_face - ex.v_face)) / v_scale),
        float(np.max(np.abs(state.Theta_cell - ex.Theta_cell)) / np.max(ex.Theta_cell)),
        float(abs(state.r_face[-1] - ex.r_face[-1]) / grid.R0),
    )


def compare_trajectory(sol: SelfSimilarSolution, grid: LagrangianGrid, snapshots) -> list[TrajectoryError]:
    """Sup-norm errors of each snapshot (or state) against the exact motion."""
    out = []
    for snap in snapshots:
        state = getattr(snap, "state", snap)
        out.append(compare_state(sol, grid, state))
    return out
