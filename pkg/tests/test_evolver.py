import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radstar.errors import DomainError, InversionError, NegativeTemperature, ShapeMismatch, SolverDiverged
from radstar.evolver import (
    EvolveConfig,
    LagrangianState,
    build_grid,
    cell_volumes,
    init_from_steady,
    rates,
    run,
    stable_dt,
    step,
    strain_rates,
    surface_coefficients,
    viscous_dissipation,
    viscous_matrix,
)
from radstar.params import StarParams
from radstar.steady import homology_rescale

VISCOUS = StarParams(K=1.0, epsilon=0.5, c_nu=1.0, mu=0.1, lambda_visc=0.1, iota=1)


@pytest.fixture(scope="module")
def eq_setup(n1_profile):
    grid = build_grid(n1_profile, 128)
    return grid, init_from_steady(n1_profile, grid)


def test_constant_density_grid():
    grid = build_grid(lambda x: np.ones_like(x), 16, R0=2.0, require_vacuum=False)
    assert np.allclose(grid.m_face, grid.x_face**3 / 3, rtol=1e-14, atol=1e-15)
    assert np.allclose(grid.Phi_cell, 1 / 3, rtol=1e-13)
    assert math.isclose(grid.face_mass.sum(), 8 / 3, rel_tol=1e-14)
    assert math.isclose(grid.cell_mass.sum(), 8 / 3, rel_tol=1e-14)


def test_grid_from_steady(n1_profile):
    grid = build_grid(n1_profile, 256)
    assert abs(grid.m_face[-1] - n1_profile.mass_tilde) <= 1e-8
    assert grid.m_face[0] == 0.0
    assert np.all(np.diff(grid.m_face) >= 0)
    assert np.all(grid.rho0_cell > 0)
    assert abs(grid.Phi_cell[0] - grid.rho0_face[0] / 3) <= 1e-4


def test_grid_guards():
    with pytest.raises(DomainError):
        build_grid(lambda x: np.ones_like(x), 4, R0=1.0, require_vacuum=False)
    with pytest.raises(DomainError):
        build_grid(lambda x: np.ones_like(x), 16, R0=1.0)  # rho0(R0) = 1
    with pytest.raises(DomainError):
        build_grid(lambda x: 0.5 - x, 16, R0=1.0, require_vacuum=False)
    with pytest.raises(DomainError):
        build_grid(lambda x: 1 - x, 16)


def test_grid_is_immutable(eq_setup):
    grid, _ = eq_setup
    with pytest.raises(ValueError):
        grid.m_face[3] = 0.0


def test_init_from_steady(n1_profile, eq_setup):
    grid, state = eq_setup
    assert np.array_equal(state.r_face, grid.x_face)
    assert not state.v_face.any()
    assert np.allclose(state.Theta_cell, 0.5 * np.sin(grid.x_cell) / grid.x_cell, atol=1e-10)


def test_init_with_velocity_law(n1_profile, eq_setup):
    grid, _ = eq_setup
    state = init_from_steady(n1_profile, grid, lambda x: 0.5 * x)
    assert np.allclose(state.v_face, 0.5 * grid.x_face)
    with pytest.raises(ShapeMismatch):
        init_from_steady(n1_profile, grid, lambda x: 1.0 + x)


def test_init_radius_mismatch(n1_profile, eq_setup):
    grid, _ = eq_setup
    with pytest.raises(ShapeMismatch):
        init_from_steady(homology_rescale(n1_profile, 2.0), grid)


def test_config_validation():
    with pytest.raises(DomainError):
        EvolveConfig(VISCOUS, t_end=1.0, cfl=1.5)
    with pytest.raises(DomainError):
        EvolveConfig(VISCOUS, t_end=-1.0)


def test_stable_dt_cold_gas(eq_setup):
    grid, state = eq_setup
    cold = LagrangianState(0.0, state.r_face, state.v_face, np.zeros(grid.N))
    assert stable_dt(cold, grid, EvolveConfig(VISCOUS, t_end=1.0, dt_max=0.3)) == 0.3


def test_stable_dt_linear_in_dx():
    rho = lambda x: 1 - x  # noqa: E731
    cfg = EvolveConfig(VISCOUS, t_end=1.0, dt_max=10.0)
    dts = []
    for n in (64, 128):
        g = build_grid(rho, n, R0=1.0)
        dts.append(stable_dt(LagrangianState(0.0, g.x_face, np.zeros(n + 1), np.ones(n)), g, cfg))
    assert math.isclose(dts[0] / dts[1], 2.0, rel_tol=1e-12)


def test_stable_dt_equilibrium(eq_setup):
    grid, state = eq_setup
    dt = stable_dt(state, grid, EvolveConfig(VISCOUS, t_end=1.0))
    assert 0 < dt < 0.1 and math.isfinite(dt)


def test_one_step_keeps_equilibrium(n1_profile):
    vmax = []
    for n in (64, 128):
        grid = build_grid(n1_profile, n)
        state = init_from_steady(n1_profile, grid)
        cfg = EvolveConfig(VISCOUS, t_end=1.0)
        out = step(state, grid, cfg, stable_dt(state, grid, cfg))
        vmax.append(np.max(np.abs(out.v_face)))
    assert vmax[0] <= 1e-5
    assert vmax[0] / vmax[1] >= 3.0  # second order in dx (dt ~ dx)


def test_centre_stays_pinned(eq_setup):
    grid, state = eq_setup
    cfg = EvolveConfig(VISCOUS, t_end=0.2)
    res = run(cfg, grid, state, diagnose=False)
    for snap in res.snapshots:
        assert snap.state.r_face[0] == 0.0 and snap.state.v_face[0] == 0.0


def test_inversion_is_reported(eq_setup):
    grid, state = eq_setup
    crushing = LagrangianState(0.0, state.r_face, -10.0 * grid.x_face, state.Theta_cell)
    with pytest.raises(InversionError):
        step(crushing, grid, EvolveConfig(VISCOUS, t_end=1.0), 0.2)


def test_run_keeps_partial_trajectory(eq_setup):
    grid, state = eq_setup
    res = run(EvolveConfig(VISCOUS, t_end=1.0, snapshot_every=0.01, max_steps=40), grid, state, diagnose=False)
    assert isinstance(res.error, SolverDiverged)
    assert len(res.snapshots) >= 2
    assert not res.ok


def test_negative_temperature(eq_setup):
    grid, state = eq_setup
    Th = state.Theta_cell.copy()
    Th[10] = -0.1
    with pytest.raises(NegativeTemperature):
        step(LagrangianState(0.0, state.r_face, state.v_face, Th), grid, EvolveConfig(VISCOUS, t_end=1), 1e-6)


def test_roundoff_negative_is_clipped(eq_setup, caplog):
    grid, state = eq_setup
    Th = state.Theta_cell.copy()
    Th[-1] = -1e-15
    cfg = EvolveConfig(StarParams(K=1.0, epsilon=1e-9, c_nu=1e6), t_end=1)
    with caplog.at_level(logging.WARNING):
        out = step(LagrangianState(0.0, state.r_face, state.v_face, Th), grid, cfg, 1e-12)
    assert np.all(out.Theta_cell >= 0)


def test_t_end_zero(eq_setup):
    grid, state = eq_setup
    res = run(EvolveConfig(VISCOUS, t_end=0.0), grid, state)
    assert len(res.snapshots) == 1
    assert res.snapshots[0].state is state


def test_snapshot_times(eq_setup):
    grid, state = eq_setup
    m_before = grid.m_face.copy()
    res = run(EvolveConfig(VISCOUS, t_end=0.3, snapshot_every=0.1), grid, state, diagnose=False)
    assert np.allclose([s.state.t for s in res.snapshots], [0.0, 0.1, 0.2, 0.3], rtol=0, atol=1e-15)
    assert res.snapshots[-1].state.t == 0.3
    assert np.array_equal(grid.m_face, m_before)


def test_temperature_stays_positive(eq_setup):
    grid, state = eq_setup
    res = run(EvolveConfig(VISCOUS, t_end=0.5, snapshot_every=0.1), grid, state, diagnose=False)
    assert all(np.all(s.state.Theta_cell >= 0) for s in res.snapshots)


def test_viscous_matrix_is_dissipation(eq_setup):
    grid, state = eq_setup
    rng = np.random.default_rng(1)
    v = rng.normal(size=grid.N + 1)
    ab = viscous_matrix(VISCOUS, state.r_face)
    Q = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)
    assert np.allclose(Q, Q.T)
    assert math.isclose(v @ Q @ v, viscous_dissipation(VISCOUS, state.r_face, v).sum(), rel_tol=1e-12)
    assert np.min(np.linalg.eigvalsh(Q)) > -1e-10 * np.max(np.abs(Q))


def test_rigid_expansion_has_no_shear(eq_setup):
    grid, state = eq_setup
    D, S = strain_rates(state.r_face, 0.7 * state.r_face)
    assert np.allclose(D, 2.1, rtol=1e-12)
    assert np.max(np.abs(S)) <= 1e-12


def test_surface_flux_exact_for_quadratic():
    r = np.linspace(0.0, 2.0, 11)
    rc = 0.5 * (r[1:] + r[:-1])
    theta = (2.0 - rc) + 0.3 * (2.0 - rc) ** 2  # vanishes at the surface
    c1, c2 = surface_coefficients(r)
    assert math.isclose(-c1 * theta[-1] + c2 * theta[-2], -4.0 * 1.0, rel_tol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.sampled_from([0, 1]))
def test_semidiscrete_energy_balance(eq_setup, seed, iota):
    # d/dt (kinetic + internal + gravitational) = heating + surface flux, exactly
    grid, base = eq_setup
    rng = np.random.default_rng(seed)
    params = VISCOUS if iota else StarParams(K=1.0, epsilon=0.5, c_nu=2.0)
    r = grid.x_face * (1 + 0.05 * rng.uniform(-1, 1)) + 0.002 * np.sin(grid.x_face) * rng.normal()
    r[0] = 0.0
    v = rng.normal(size=grid.N + 1) * grid.x_face / grid.R0
    Th = base.Theta_cell * (1 + 0.1 * rng.uniform(size=grid.N))
    state = LagrangianState(0.0, r, v, Th)
    v_t, th_t = rates(state, grid, params)
    dKE = np.sum(grid.face_mass * v * v_t)
    dU = params.c_nu * np.sum(grid.thermal_mass * th_t)
    dW = np.sum(grid.face_mass[1:] * grid.m_face[1:] * v[1:] / r[1:] ** 2)
    c1, c2 = surface_coefficients(r)
    source = params.epsilon * grid.thermal_mass.sum() + (-c1 * Th[-1] + c2 * Th[-2])
    scale = abs(dKE) + abs(dU) + abs(dW) + abs(source)
    assert abs(dKE + dU + dW - source) <= 1e-11 * scale


def test_volumes_positive(eq_setup):
    grid, state = eq_setup
    assert np.allclose(cell_volumes(state.r_face).sum(), grid.R0**3 / 3)
