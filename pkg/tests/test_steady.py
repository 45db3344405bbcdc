import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radstar.errors import DomainError, InsufficientResolution, RegimeError
from radstar.params import StarParams
from radstar.steady import (
    build_steady_profile,
    critical_mass,
    entropy_deviation,
    fit_boundary_exponents,
    heat_balance_residual,
    homology_rescale,
    hydrostatic_residual,
    potential_deviation,
    profile_from_central_density,
    reference_mass_m1,
    solve_for_mass,
    total_mass,
    unit_kbar_profile,
    with_params,
)

# 4 pi * 8 * (-xi^2 theta'(xi)) of the n = 3 polytrope, from the fine-step oracle
M1_ORACLE = 4 * math.pi * 8 * 2.0182359515544595


def test_half_profile_is_sine(n1_profile):
    r = n1_profile.r_grid
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = np.where(r == 0, 1.0, np.sin(r) / np.where(r == 0, 1, r))
    assert abs(n1_profile.R - math.pi) <= 1e-10
    assert np.max(np.abs(n1_profile.rho - np.maximum(exact, 0))) <= 1e-10
    assert np.max(np.abs(n1_profile.theta - 0.5 * np.maximum(exact, 0))) <= 1e-10
    # m = int_0^pi r sin r dr = pi
    assert abs(n1_profile.mass_tilde - math.pi) <= 1e-8


def test_entropy_one_gives_kbar_two(n1_params):
    prof = build_steady_profile(n1_params, S=1.0)
    assert prof.exponents.K_bar == 2.0
    assert abs(prof.R - math.pi * math.sqrt(2)) <= 1e-9


def test_identities(n1_profile):
    assert entropy_deviation(n1_profile) <= 1e-10
    assert potential_deviation(n1_profile) <= 1e-8


def test_potential_matches_outer_field(n1_profile):
    # psi(R) = -m/R since theta(R) = 0
    assert abs(n1_profile.psi[-1] + n1_profile.mass_tilde / n1_profile.R) <= 1e-12


def test_residuals_second_order(n1_params):
    res = [
        (hydrostatic_residual(p), heat_balance_residual(p))
        for p in (build_steady_profile(n1_params, math.sqrt(0.5), n_grid=n) for n in (1024, 2048, 4096))
    ]
    for k in range(2):
        for a, b in zip(res, res[1:]):
            assert math.log2(a[k] / b[k]) >= 1.9


def test_hydrostatic_residual_detects_wrong_profile(n1_params):
    prof = build_steady_profile(n1_params, math.sqrt(0.5), n_grid=1024)
    wrong = replace(prof, theta=prof.theta * 1.1)
    assert hydrostatic_residual(wrong) > 1e-2


@pytest.mark.parametrize("s", [0.5, 2.0, 10.0])
def test_homology_keeps_mass_and_entropy_law(n1_profile, s):
    scaled = homology_rescale(n1_profile, s)
    assert abs(scaled.mass_tilde / n1_profile.mass_tilde - 1) <= 1e-10
    assert abs(scaled.R - n1_profile.R / s) <= 1e-12
    assert entropy_deviation(scaled) <= 1e-10
    assert np.allclose(scaled.rho_at(n1_profile.R / (2 * s)), s**3 * n1_profile.rho_at(n1_profile.R / 2))


def test_homology_rejects_bad_scale(n1_profile):
    with pytest.raises(DomainError):
        homology_rescale(n1_profile, 0.0)


def test_boundary_fit_n1(n1_profile):
    fit = fit_boundary_exponents(n1_profile)
    assert abs(fit.rho_exponent - 1.0) <= 0.02
    assert abs(fit.theta_slope_at_R + 0.5 / math.pi) <= 1e-9
    assert abs(fit.theta_over_sigma_limit - 0.5 / math.pi) <= 1e-3


def test_boundary_fit_n3():
    prof = build_steady_profile(StarParams(K=1.0, epsilon=0.25), S=1.0)
    assert abs(fit_boundary_exponents(prof).rho_exponent - 3.0) <= 0.05


def test_boundary_fit_needs_nodes(n1_params):
    prof = build_steady_profile(n1_params, math.sqrt(0.5), n_grid=64)
    with pytest.raises(InsufficientResolution):
        fit_boundary_exponents(prof)


def test_reference_mass():
    assert abs(reference_mass_m1() / M1_ORACLE - 1) <= 1e-8


def test_critical_mass_law():
    assert critical_mass(1.0) == reference_mass_m1()
    assert abs(critical_mass(4.0) / critical_mass(1.0) - 8.0) <= 1e-12
    with pytest.raises(DomainError):
        critical_mass(0.0)


def test_critical_mass_independent_of_centre():
    crit = StarParams(K=1.0, epsilon=0.25)
    masses = [build_steady_profile(crit, 1.0, u0).mass_tilde for u0 in (0.5, 1.0, 2.0)]
    assert (max(masses) - min(masses)) / masses[1] <= 1e-8


def test_solve_for_mass_critical_gives_unit_entropy():
    prof = solve_for_mass(StarParams(K=1.0, epsilon=0.25), reference_mass_m1())
    assert abs(prof.exponents.S - 1.0) <= 1e-12


@settings(max_examples=10, deadline=None)
@given(st.floats(min_value=0.2, max_value=0.9), st.floats(min_value=0.5, max_value=50.0))
def test_solve_for_mass_hits_target(eps_k, M):
    params = StarParams(K=1.0, epsilon=eps_k)
    if abs(eps_k - 0.25) < 0.02:
        return
    prof = solve_for_mass(params, M, n_grid=1024)
    assert math.isclose(prof.M, M, rel_tol=1e-6)


def test_central_density_selector(n1_params):
    prof = profile_from_central_density(n1_params, 2.0, S=1.0)
    assert math.isclose(prof.central[0], 2.0, rel_tol=1e-14)


def test_unit_kbar(n1_params):
    assert math.isclose(unit_kbar_profile(n1_params).exponents.K_bar, 1.0, rel_tol=1e-14)


def test_no_profile_outside_window():
    with pytest.raises(RegimeError):
        build_steady_profile(StarParams(K=1.0, epsilon=1.0), 1.0)
    with pytest.raises(RegimeError):
        build_steady_profile(StarParams(K=1.0, epsilon=1 / 6), 1.0)


def test_total_mass_matches_enclosed(n1_profile):
    m, M = total_mass(n1_profile)
    assert math.isclose(m, n1_profile.mass_tilde)
    assert math.isclose(M, 4 * math.pi * m)
    assert abs(n1_profile.enclosed_mass_at(n1_profile.R) - m) <= 1e-8


def test_with_params_keeps_star(n1_profile):
    p = with_params(n1_profile, c_nu=3.0)
    assert p.params.c_nu == 3.0 and p.R == n1_profile.R
    with pytest.raises(RegimeError):
        with_params(n1_profile, K=2.0)
