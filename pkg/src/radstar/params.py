"""Physical constants, existence regimes and Lane-Emden exponents."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import DomainError, RegimeError

#: relative tolerance used when comparing epsilon*K against 1/6, 1/4 and 1
REGIME_RTOL = 1e-12


@dataclass(frozen=True)
class StarParams:
    """Constants of the gas: P = K rho theta, e = c_nu theta.

    ``iota`` switches the viscous stress on (1) or off (0).
    """

    K: float
    epsilon: float
    c_nu: float = 1.0
    mu: float = 0.0
    lambda_visc: float = 0.0
    iota: int = 0

    def __post_init__(self):
        for name in ("K", "epsilon", "c_nu"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.mu < 0 or self.lambda_visc < 0:
            raise DomainError("viscosities must be non-negative")
        if self.iota not in (0, 1):
            raise DomainError(f"iota must be 0 or 1, got {self.iota!r}")
        if self.iota == 1 and not self.mu > 0:
            raise DomainError("the viscous case (iota=1) needs mu > 0")

    @property
    def epsilon_K(self) -> float:
        return self.epsilon * self.K

    @property
    def gamma_eps(self) -> float:
        """Adiabatic exponent 1/(1 - eps K) of the reduced isentropic star."""
        eK = self.epsilon_K
        if eK >= 1.0:
            raise RegimeError(f"gamma_eps undefined for epsilon*K = {eK!r}")
        return 1.0 / (1.0 - eK)

    @property
    def viscous(self) -> bool:
        return self.iota == 1 and (self.mu > 0 or self.lambda_visc > 0)


class Regime(enum.Enum):
    NO_SOLUTION_LOW = "NoSolutionLow"
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"
    NO_SOLUTION_HIGH = "NoSolutionHigh"

    @property
    def has_steady_state(self) -> bool:
        return self in (Regime.SUBCRITICAL, Regime.CRITICAL, Regime.SUPERCRITICAL)


def classify_eps_k(eps_k: float, rtol: float = REGIME_RTOL) -> Regime:
    tol = rtol * max(1.0, abs(eps_k))
    if eps_k <= 1.0 / 6.0 + tol:
        return Regime.NO_SOLUTION_LOW
    if eps_k >= 1.0 - tol:
        return Regime.NO_SOLUTION_HIGH
    if abs(eps_k - 0.25) <= tol:
        return Regime.CRITICAL
    return Regime.SUBCRITICAL if eps_k < 0.25 else Regime.SUPERCRITICAL


def classify_regime(params: StarParams, rtol: float = REGIME_RTOL) -> Regime:
    """Bucket epsilon*K into the existence regimes of the steady problem.

    Regular steady stars exist iff 1/6 < eps K < 1; eps K = 1/4 is the
    gamma = 4/3 critical-mass case.
    """
    return classify_eps_k(params.epsilon_K, rtol)


def require_steady_regime(params: StarParams) -> Regime:
    regime = classify_regime(params)
    if not regime.has_steady_state:
        raise RegimeError(f"no steady state exists for epsilon*K = {params.epsilon_K!r}")
    return regime


@dataclass(frozen=True)
class DerivedExponents:
    gamma_eps: float
    alpha_eps: float
    S: float
    K_bar: float


def derived_exponents(params: StarParams, S: float) -> DerivedExponents:
    """Exponents and Lane-Emden coefficient for entropy constant ``S``.

    K_bar = S**(1/(1-eps K)) / eps multiplies the Laplacian in
    K_bar (u'' + 2u'/r) + u**alpha = 0.
    """
    require_steady_regime(params)
    if not S > 0:
        raise DomainError(f"S must be positive, got {S!r}")
    eK = params.epsilon_K
    return DerivedExponents(
        gamma_eps=1.0 / (1.0 - eK),
        alpha_eps=(1.0 - eK) / eK,
        S=float(S),
        K_bar=S ** (1.0 / (1.0 - eK)) / params.epsilon,
    )


def entropy_from_central(params: StarParams, rho_c: float, theta_c: float) -> float:
    """S = rho**(-eps K) * theta**(1 - eps K), constant across a steady star."""
    if not (rho_c > 0 and theta_c > 0):
        raise DomainError("central density and temperature must be positive")
    eK = params.epsilon_K
    return rho_c ** (-eK) * theta_c ** (1.0 - eK)


def entropy_for_kbar(params: StarParams, K_bar: float) -> float:
    """Inverse of K_bar = S**(1/(1-eps K))/eps."""
    if not K_bar > 0:
        raise DomainError("K_bar must be positive")
    return (params.epsilon * K_bar) ** (1.0 - params.epsilon_K)
