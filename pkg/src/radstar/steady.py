"""Steady radiational stars assembled from Lane-Emden solutions.

With S = rho**(-eps K) theta**(1 - eps K) constant, the steady problem
reduces to K_bar (u'' + 2u'/r) + u**alpha = 0 and

    rho = u**alpha,  theta = eps K_bar u,  psi = -m/R - theta/eps,

where m = int_0^R rho r^2 dr is the reduced mass (Delta psi = rho, no 4 pi)
and M = 4 pi m is the physical total mass.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from . import lane_emden as le
from .errors import DomainError, InsufficientResolution, RegimeError
from .params import (
    DerivedExponents,
    Regime,
    StarParams,
    derived_exponents,
    entropy_for_kbar,
    require_steady_regime,
)

BOUNDARY_WINDOW = 0.05
MIN_FIT_NODES = 16


@dataclass(frozen=True, eq=False)
class SteadyProfile:
    params: StarParams
    exponents: DerivedExponents
    r_grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    R: float
    mass_tilde: float
    dU_at_R: float

    @property
    def central(self) -> tuple[float, float]:
        return float(self.rho[0]), float(self.theta[0])

    @property
    def M(self) -> float:
        return 4.0 * math.pi * self.mass_tilde

    @property
    def lane_emden(self) -> le.LaneEmdenProfile:
        """The Lane-Emden profile behind this star (rebuilt lazily after rescaling)."""
        cached = self.__dict__.get("_le")
        if cached is None:
            prob = le.LaneEmdenProblem(self.exponents.alpha_eps, self.exponents.K_bar, float(self.u[0]))
            cached = le.LaneEmdenProfile(prob, self.r_grid, self.u, self.du, self.R, self.dU_at_R)
            object.__setattr__(self, "_le", cached)
        return cached

    def rho_at(self, r):
        """Density at arbitrary radii in [0, R] (Hermite interpolation of u)."""
        u, _ = le.evaluate_profile(self.lane_emden, r)
        return np.maximum(u, 0.0) ** self.exponents.alpha_eps

    def theta_at(self, r):
        u, _ = le.evaluate_profile(self.lane_emden, r)
        return self.params.epsilon * self.exponents.K_bar * np.maximum(u, 0.0)

    def enclosed_mass_at(self, r):
        """m(r) = int_0^r s^2 rho ds = -K_bar r^2 u'(r), exact for the ODE."""
        _, du = le.evaluate_profile(self.lane_emden, r)
        return -self.exponents.K_bar * np.asarray(r, float) ** 2 * du


def potential_profile(theta: np.ndarray, R: float, mass_tilde: float, epsilon: float) -> np.ndarray:
    """psi with theta + eps psi constant inside and psi(R) = -m/R."""
    return -mass_tilde / R - np.asarray(theta) / epsilon


def _simpson_mass(r, rho) -> float:
    if not np.any(rho):
        return 0.0
    return float(simpson(rho * r**2, x=r))


def build_steady_profile(
    params: StarParams, S: float, u0: float = 1.0, n_grid: int = le.DEFAULT_NODES
) -> SteadyProfile:
    """Steady star with entropy constant ``S`` and central Lane-Emden value ``u0``."""
    exps = derived_exponents(params, S)
    prob = le.LaneEmdenProblem(exps.alpha_eps, exps.K_bar, u0)
    lep = le.integrate_to_first_zero(prob, n_grid)
    return _assemble(params, exps, lep)


def _assemble(params, exps, lep: le.LaneEmdenProfile) -> SteadyProfile:
    u = np.maximum(lep.u, 0.0)
    rho = u**exps.alpha_eps
    theta = params.epsilon * exps.K_bar * u
    mass = _simpson_mass(lep.r_grid, rho)
    psi = potential_profile(theta, lep.R, mass, params.epsilon)
    prof = SteadyProfile(
        params=params,
        exponents=exps,
        r_grid=lep.r_grid,
        u=lep.u,
        du=lep.du,
        rho=rho,
        theta=theta,
        psi=psi,
        R=lep.R,
        mass_tilde=mass,
        dU_at_R=lep.dU_at_R,
    )
    object.__setattr__(prof, "_le", lep)
    return prof


def total_mass(profile: SteadyProfile) -> tuple[float, float]:
    m = _simpson_mass(profile.r_grid, profile.rho)
    return m, 4.0 * math.pi * m


@functools.lru_cache(maxsize=None)
def reference_mass_m1(n_grid: int = le.DEFAULT_NODES) -> float:
    """M_1 = 4 pi int u1^3 r^2 dr for 4(u1'' + 2u1'/r) + u1^3 = 0, u1(0) = 1."""
    lep = le.integrate_to_first_zero(le.LaneEmdenProblem(3.0, 4.0, 1.0), n_grid)
    return 4.0 * math.pi * _simpson_mass(lep.r_grid, np.maximum(lep.u, 0.0) ** 3)


def critical_mass(K_tilde: float) -> float:
    """M_c(K_tilde) = K_tilde**1.5 M_1 for gamma = 4/3."""
    if not K_tilde > 0:
        raise DomainError(f"K_tilde must be positive, got {K_tilde!r}")
    return K_tilde**1.5 * reference_mass_m1()


def homology_rescale(profile: SteadyProfile, s: float) -> SteadyProfile:
    """rho_s(r) = s^3 rho(s r), theta_s(r) = s theta(s r); same total mass."""
    if not s > 0:
        raise DomainError(f"scale must be positive, got {s!r}")
    params = profile.params
    eK = params.epsilon_K
    S_s = s ** (1.0 - 4.0 * eK) * profile.exponents.S
    exps = derived_exponents(params, S_s)
    ratio = s * profile.exponents.K_bar / exps.K_bar  # u_s(r) = ratio * u(s r)
    r_grid = profile.r_grid / s
    rho = s**3 * profile.rho
    theta = s * profile.theta
    u = ratio * profile.u
    du = ratio * s * profile.du
    R = profile.R / s
    mass = _simpson_mass(r_grid, rho)
    return SteadyProfile(
        params=params,
        exponents=exps,
        r_grid=r_grid,
        u=u,
        du=du,
        rho=rho,
        theta=theta,
        psi=s * profile.psi,
        R=R,
        mass_tilde=mass,
        dU_at_R=ratio * s * profile.dU_at_R,
    )


def solve_for_mass(params: StarParams, M_target: float, n_grid: int = le.DEFAULT_NODES) -> SteadyProfile:
    """Steady star of total mass M_target (= 4 pi m).

    Away from eps K = 1/4 the entropy constant is fixed at S = 1 and the
    central value follows from m(u0) = m(1) u0**((3 - alpha)/2).  At
    eps K = 1/4 the mass fixes S = (M / (K**1.5 M_1))**0.5 and every central
    value gives the same mass; the u0 = 1 member is returned.
    """
    regime = require_steady_regime(params)
    if not M_target > 0:
        raise DomainError(f"target mass must be positive, got {M_target!r}")
    if regime is Regime.CRITICAL:
        S = math.sqrt(M_target / (params.K**1.5 * reference_mass_m1()))
        return build_steady_profile(params, S, 1.0, n_grid)
    unit = build_steady_profile(params, 1.0, 1.0, n_grid)
    alpha = unit.exponents.alpha_eps
    u0 = (M_target / unit.M) ** (2.0 / (3.0 - alpha))
    return build_steady_profile(params, 1.0, u0, n_grid)


def profile_from_central_density(params: StarParams, rho_c: float, S: float = 1.0, n_grid: int = le.DEFAULT_NODES):
    if not rho_c > 0:
        raise DomainError("central density must be positive")
    exps = derived_exponents(params, S)
    return build_steady_profile(params, S, rho_c ** (1.0 / exps.alpha_eps), n_grid)


def unit_kbar_profile(params: StarParams, u0: float = 1.0, n_grid: int = le.DEFAULT_NODES) -> SteadyProfile:
    """Profile whose Lane-Emden coefficient K_bar equals one."""
    require_steady_regime(params)
    return build_steady_profile(params, entropy_for_kbar(params, 1.0), u0, n_grid)


@dataclass(frozen=True)
class BoundaryFit:
    rho_exponent: float
    theta_slope_at_R: float
    theta_over_sigma_limit: float
    n_nodes: int


def fit_boundary_exponents(profile: SteadyProfile, window: float = BOUNDARY_WINDOW) -> BoundaryFit:
    """Vacuum-boundary behaviour: rho ~ sigma**alpha, theta ~ sigma.

    sigma = R - r.  The density exponent is the least-squares slope of
    log rho against log sigma over the outer ``window`` fraction of the
    radius (the zero node itself excluded).
    """
    sigma = profile.R - profile.r_grid
    sel = (sigma > 0) & (sigma <= window * profile.R) & (profile.rho > 0)
    n = int(np.count_nonzero(sel))
    if n < MIN_FIT_NODES:
        raise InsufficientResolution(f"only {n} nodes in the boundary window (need {MIN_FIT_NODES})")
    slope, _ = np.polyfit(np.log(sigma[sel]), np.log(profile.rho[sel]), 1)
    theta_slope = profile.params.epsilon * profile.exponents.K_bar * profile.dU_at_R
    # theta/sigma is smooth in sigma: extrapolate its linear fit to sigma = 0
    _, limit = np.polyfit(sigma[sel], profile.theta[sel] / sigma[sel], 1)
    return BoundaryFit(float(slope), float(theta_slope), float(limit), n)


# ---------------------------------------------------------------------------
# residual checks of the steady equations on the stored grid


def entropy_deviation(profile: SteadyProfile) -> float:
    """max relative deviation of rho**(-eps K) theta**(1-eps K) from S inside."""
    eK = profile.params.epsilon_K
    inner = (profile.rho > 0) & (profile.theta > 0)
    s_vals = profile.rho[inner] ** (-eK) * profile.theta[inner] ** (1.0 - eK)
    return float(np.max(np.abs(s_vals - profile.exponents.S)) / profile.exponents.S)


def potential_deviation(profile: SteadyProfile) -> float:
    """max |(theta + eps psi) - (theta + eps psi)(0)| / |psi(0)|."""
    c = profile.theta + profile.params.epsilon * profile.psi
    return float(np.max(np.abs(c - c[0])) / abs(profile.psi[0]))


def _uniform_part(profile):
    r = profile.r_grid
    h = r[1] - r[0]
    # the final node sits at R, possibly off the uniform lattice
    n = len(r) - 1 if abs((r[-1] - r[-2]) - h) > 1e-9 * h else len(r)
    return r[:n], h, n


def hydrostatic_residual(profile: SteadyProfile) -> float:
    """Centred-difference residual of grad(K rho theta) + rho m(r)/r^2.

    Normalised by max |grad P|; interior nodes of the uniform lattice only.
    """
    r, h, n = _uniform_part(profile)
    P = profile.params.K * profile.rho[:n] * profile.theta[:n]
    m = cumulative_simpson(profile.rho[:n] * r**2, x=r, initial=0.0)
    dP = (P[2:] - P[:-2]) / (2 * h)
    ri = r[1:-1]
    res = dP + profile.rho[1:n - 1] * m[1:-1] / ri**2
    return float(np.max(np.abs(res[1:])) / np.max(np.abs(dP)))


def heat_balance_residual(profile: SteadyProfile) -> float:
    """Centred residual of Laplacian(theta) + eps rho, relative to max eps rho."""
    r, h, n = _uniform_part(profile)
    th = profile.theta[:n]
    ri = r[1:-1]
    lap = (th[2:] - 2 * th[1:-1] + th[:-2]) / h**2 + (th[2:] - th[:-2]) / (h * ri)
    src = profile.params.epsilon * profile.rho[1:n - 1]
    return float(np.max(np.abs(lap + src)) / np.max(np.abs(src)))


def with_params(profile: SteadyProfile, **changes) -> SteadyProfile:
    """Same star, different transport constants (K and epsilon must not change)."""
    new = replace(profile.params, **changes)
    if new.K != profile.params.K or new.epsilon != profile.params.epsilon:
        raise RegimeError("K and epsilon define the steady star and cannot change")
    out = replace(profile, params=new)
    if "_le" in profile.__dict__:
        object.__setattr__(out, "_le", profile.__dict__["_le"])
    return out
