"""Regular solutions of K_bar (u'' + 2u'/r) + u**alpha = 0 up to the first zero.

The equation has a coordinate singularity at r = 0.  The first step leaves
the centre on the even Taylor series

    u = u0 - c u0**a r**2 / 6 + a c**2 u0**(2a-1) r**4 / 120 + O(r**6),

with c = 1/K_bar, after which a fixed-step classical RK4 takes over.  The
first zero is bracketed by a sign change and refined by root finding on a
partial RK4 step from the last positive node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import DomainError, NoFirstZero, RangeError, StepFailure, UnsupportedIndex

DEFAULT_NODES = 4096
ZERO_RTOL = 1e-12
SWITCH_FACTOR = 1e-3
RMAX_FACTOR = 100.0
# pass-one steps per natural length sqrt(K_bar) u0**(-(alpha-1)/2)
_PROBE_STEPS_PER_LENGTH = 256


@dataclass(frozen=True)
class LaneEmdenProblem:
    alpha: float
    K_bar: float = 1.0
    u0: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise DomainError(f"alpha must be non-negative, got {self.alpha!r}")
        if not self.K_bar > 0:
            raise DomainError(f"K_bar must be positive, got {self.K_bar!r}")
        if not self.u0 > 0:
            raise DomainError(f"u0 must be positive, got {self.u0!r}")

    @property
    def length_scale(self) -> float:
        """Radius unit of the homologous family: sqrt(K_bar) u0**(-(alpha-1)/2)."""
        return math.sqrt(self.K_bar) * self.u0 ** (-(self.alpha - 1.0) / 2.0)

    @property
    def r_switch(self) -> float:
        return SWITCH_FACTOR * math.sqrt(self.K_bar)

    @property
    def r_max(self) -> float:
        return RMAX_FACTOR * math.sqrt(self.K_bar) * max(1.0, self.u0 ** (-(self.alpha - 1.0) / 2.0))


@dataclass(frozen=True, eq=False)
class LaneEmdenProfile:
    problem: LaneEmdenProblem
    r_grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    R: float
    dU_at_R: float

    @property
    def step(self) -> float:
        return float(self.r_grid[1] - self.r_grid[0])

    def ddu(self, r=None) -> np.ndarray:
        """Second derivative from the ODE itself (u'' = -u**a/K_bar - 2u'/r)."""
        if r is None:
            r, u, du = self.r_grid, self.u, self.du
        else:
            u, du = evaluate_profile(self, r)
        return _second_derivative(self.problem, np.asarray(r, float), np.asarray(u), np.asarray(du))


def _power(u: float, alpha: float) -> float:
    # odd extension so RK4 stages may overshoot the zero
    if u >= 0.0:
        return u**alpha
    return -((-u) ** alpha)


def _second_derivative(problem, r, u, du):
    c = 1.0 / problem.K_bar
    up = np.sign(u) * np.abs(u) ** problem.alpha
    out = np.empty_like(np.asarray(r, dtype=float))
    centre = r == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out[...] = -c * up - 2.0 * du / np.where(centre, 1.0, r)
    # u''(0) = -c u0**alpha / 3
    out[centre] = -c * problem.u0**problem.alpha / 3.0
    return out


def series_start(problem: LaneEmdenProblem, r: float) -> tuple[float, float]:
    """Fourth-order Taylor value (u, u') near the centre."""
    a, u0 = problem.alpha, problem.u0
    c = 1.0 / problem.K_bar
    b2 = c * u0**a / 6.0
    b4 = a * c * c * u0 ** (2.0 * a - 1.0) / 120.0
    r2 = r * r
    return u0 - b2 * r2 + b4 * r2 * r2, -2.0 * b2 * r + 4.0 * b4 * r2 * r


def _rk4(problem: LaneEmdenProblem, r: float, u: float, w: float, h: float):
    a = problem.alpha
    c = 1.0 / problem.K_bar

    def f(rr, uu, ww):
        return ww, -c * _power(uu, a) - 2.0 * ww / rr

    k1u, k1w = f(r, u, w)
    k2u, k2w = f(r + 0.5 * h, u + 0.5 * h * k1u, w + 0.5 * h * k1w)
    k3u, k3w = f(r + 0.5 * h, u + 0.5 * h * k2u, w + 0.5 * h * k2w)
    k4u, k4w = f(r + h, u + h * k3u, w + h * k3w)
    return (
        u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
    )


def _leave_centre(problem: LaneEmdenProblem, h: float) -> tuple[float, float]:
    """(u, u') at r = h: series up to r_switch, RK4 sub-steps beyond."""
    rs = problem.r_switch
    if h <= rs:
        return series_start(problem, h)
    u, w = series_start(problem, rs)
    n_sub = max(1, math.ceil((h - rs) / rs))
    hs = (h - rs) / n_sub
    r = rs
    for _ in range(n_sub):
        u, w = _rk4(problem, r, u, w, hs)
        r += hs
    return u, w


def _march(problem: LaneEmdenProblem, h: float, r_stop: float, keep: bool):
    """Fixed-step march until u changes sign or r exceeds r_stop.

    Returns (nodes, k) where nodes holds (r, u, w) up to the last positive
    node (all nodes if keep else only the last) and k is its index.
    """
    u, w = _leave_centre(problem, h)
    rs, us, ws = [0.0], [problem.u0], [0.0]
    k = 1
    r = h
    if u <= 0.0:
        return (rs, us, ws), 0
    while True:
        if keep:
            rs.append(r)
            us.append(u)
            ws.append(w)
        else:
            rs, us, ws = [r], [u], [w]
        un, wn = _rk4(problem, r, u, w, h)
        if not (math.isfinite(un) and math.isfinite(wn)):
            raise StepFailure(f"non-finite Lane-Emden state at r = {r!r}")
        if un <= 0.0:
            return (rs, us, ws), k
        k += 1
        r = k * h
        u, w = un, wn
        if r > r_stop:
            raise NoFirstZero(
                f"u stays positive up to r_max = {r_stop:.6g} (alpha = {problem.alpha!r})"
            )


def _locate_zero(problem, r, u, w, h, zero_tol):
    g = lambda s: _rk4(problem, r, u, w, s)[0]  # noqa: E731
    s = brentq(g, 0.0, h, xtol=1e-15 * max(h, r), rtol=4 * np.finfo(float).eps, maxiter=200)
    uR, wR = _rk4(problem, r, u, w, s)
    if abs(uR) > zero_tol:
        # final bisection polish on the residual
        lo, hi = 0.0, h
        for _ in range(200):
            s = 0.5 * (lo + hi)
            uR, wR = _rk4(problem, r, u, w, s)
            if abs(uR) <= zero_tol:
                break
            if uR > 0:
                lo = s
            else:
                hi = s
    return r + s, uR, wR


def integrate_to_first_zero(problem: LaneEmdenProblem, n_nodes: int = DEFAULT_NODES) -> LaneEmdenProfile:
    """Integrate from the centre to the first zero R of u.

    A coarse probe estimates R; the production pass then uses the fixed
    step R_estimate / n_nodes so that the stored grid is (nearly) uniform and
    reproducible.  Raises NoFirstZero past ``problem.r_max``.
    """
    if n_nodes < 8:
        raise DomainError("need at least 8 nodes")
    zero_tol = ZERO_RTOL * problem.u0
    ell = problem.length_scale
    h_probe = min(ell, problem.r_max) / _PROBE_STEPS_PER_LENGTH
    (rp, up, wp), _ = _march(problem, h_probe, problem.r_max, keep=False)
    R_est, _, _ = _locate_zero(problem, rp[-1], up[-1], wp[-1], h_probe, zero_tol)

    h = R_est / n_nodes
    (rs, us, ws), _ = _march(problem, h, 2.0 * problem.r_max, keep=True)
    R, uR, wR = _locate_zero(problem, rs[-1], us[-1], ws[-1], h, zero_tol)
    if R - rs[-1] < 1e-6 * h and len(rs) > 2:
        rs, us, ws = rs[:-1], us[:-1], ws[:-1]
    r_grid = np.array(rs + [R])
    u = np.array(us + [uR])
    du = np.array(ws + [wR])
    if not (wR < 0 and math.isfinite(wR)):
        raise StepFailure(f"non-negative slope {wR!r} at the first zero")
    return LaneEmdenProfile(problem, r_grid, u, du, float(R), float(wR))


def _hermite(profile: LaneEmdenProfile):
    # cached per profile object
    cache = profile.__dict__.get("_splines")
    if cache is None:
        ddu = profile.ddu()
        cache = (
            CubicHermiteSpline(profile.r_grid, profile.u, profile.du),
            CubicHermiteSpline(profile.r_grid, profile.du, ddu),
        )
        object.__setattr__(profile, "_splines", cache)
    return cache


def evaluate_profile(profile: LaneEmdenProfile, r):
    """Cubic Hermite interpolation of (u, u') using the stored derivatives."""
    r_arr = np.asarray(r, dtype=float)
    tol = 1e-12 * profile.R
    if np.any(r_arr < -tol) or np.any(r_arr > profile.R + tol):
        raise RangeError(f"r outside [0, R={profile.R!r}]")
    r_arr = np.clip(r_arr, 0.0, profile.R)
    su, sdu = _hermite(profile)
    u, du = su(r_arr), sdu(r_arr)
    if np.ndim(r) == 0:
        return float(u), float(du)
    return u, du


def analytic_solution(alpha: float, K_bar: float, u0: float, r):
    """Closed-form solutions for alpha in {0, 1, 5}."""
    r = np.asarray(r, dtype=float)
    if alpha == 0:
        u = u0 - r**2 / (6.0 * K_bar)
        du = -r / (3.0 * K_bar)
    elif alpha == 1:
        k = 1.0 / math.sqrt(K_bar)
        kr = k * r
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(kr == 0, u0, u0 * np.sin(kr) / np.where(kr == 0, 1, kr))
            du = np.where(
                kr == 0, 0.0, u0 * k * (kr * np.cos(kr) - np.sin(kr)) / np.where(kr == 0, 1, kr) ** 2
            )
    elif alpha == 5:
        q = 1.0 + u0**4 * r**2 / (3.0 * K_bar)
        u = u0 / np.sqrt(q)
        du = -u0**5 * r / (3.0 * K_bar) * q**-1.5
    else:
        raise UnsupportedIndex(f"no closed form for alpha = {alpha!r}")
    if u.ndim == 0:
        return float(u), float(du)
    return u, du
