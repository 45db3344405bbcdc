import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radstar.diagnostics import (
    INSTANT_KEYS,
    CutoffChi,
    DiagnosticsTracker,
    center_slope,
    e1_energy,
    energy_ledger,
    energy_parts,
    finite_report,
    monitors,
    theta_gradient,
    vacuum_check,
)
from radstar.errors import InversionError
from radstar.evolver import EvolveConfig, LagrangianState, Snapshot, build_grid, init_from_steady, rates, run
from radstar.params import StarParams
from radstar.selfsimilar import build_selfsimilar, build_selfsimilar_grid, exact_state

PARAMS = StarParams(K=1.0, epsilon=0.5, c_nu=1.0, mu=0.1, lambda_visc=0.1, iota=1)


@pytest.fixture(scope="module")
def eq(n1_profile):
    grid = build_grid(n1_profile, 128)
    return grid, init_from_steady(n1_profile, grid)


@pytest.fixture(scope="module")
def ss():
    sol = build_selfsimilar(a=1.0, b=1.0)
    return sol, build_selfsimilar_grid(sol, 128)


def test_chi_shape():
    chi = CutoffChi(4.0)
    x = np.linspace(0, 4.0, 10_001)
    y = chi(x)
    assert np.all(y[x <= 1.0] == 1.0) and np.all(y[x >= 2.0] == 0.0)
    assert np.all(np.diff(y) <= 0)
    assert np.max(np.abs(np.gradient(y, x))) <= chi.max_slope * (1 + 1e-6)
    assert math.isclose(np.trapezoid(y, x), chi.integral, rel_tol=1e-7)
    assert np.allclose(chi.derivative(x), np.gradient(y, x), atol=1e-3)


def test_zero_state_has_zero_energy(eq):
    grid, _ = eq
    z = LagrangianState(0.0, grid.x_face, np.zeros(grid.N + 1), np.zeros(grid.N))
    comps = e1_energy(z, np.zeros(grid.N + 1), np.zeros(grid.N), grid)
    assert all(v == 0.0 for v in comps.values())


@given(st.integers(0, 2**31 - 1))
def test_components_non_negative(seed):
    grid = _small_grid()
    rng = np.random.default_rng(seed)
    s = LagrangianState(0.0, grid.x_face, rng.normal(size=grid.N + 1), rng.uniform(size=grid.N))
    comps = e1_energy(s, rng.normal(size=grid.N + 1), rng.normal(size=grid.N), grid)
    assert set(INSTANT_KEYS) <= set(comps)
    assert all(v >= 0 for v in comps.values())


_GRID = {}


def _small_grid():
    if "g" not in _GRID:
        _GRID["g"] = build_grid(lambda x: 1 - x * x, 32, R0=1.0)
    return _GRID["g"]


def test_equilibrium_has_no_velocity_terms(eq):
    grid, state = eq
    v_t, th_t = rates(state, grid, PARAMS)
    comps = e1_energy(state, v_t, th_t, grid)
    for k in ("x_sqrt_rho0_v", "sqrt_chi_rho0_v", "x_v_x", "v", "sqrt_chi_v_x", "sqrt_chi_v_over_x"):
        assert comps[k] == 0.0
    assert comps["x_theta_x"] > 0


def test_state_components_converge(n1_profile):
    vals = []
    for n in (64, 128, 256):
        grid = build_grid(n1_profile, n)
        state = init_from_steady(n1_profile, grid)
        vals.append(e1_energy(state, np.zeros(n + 1), np.zeros(n), grid))
    for k in ("x_sqrt_rho0_theta", "x_theta_x"):
        a, b, c = (v[k] for v in vals)
        assert abs(b - c) < 0.6 * abs(a - b) + 1e-12


def test_homologous_velocity_norm(ss):
    sol, grid = ss
    state = exact_state(sol, grid, 0.0)  # v = x
    comps = e1_energy(state, np.zeros(grid.N + 1), np.zeros(grid.N), grid)
    assert math.isclose(comps["sqrt_chi_v_over_x"], CutoffChi(grid.R0).integral, rel_tol=1e-3)


def test_monitors_identity(eq):
    grid, state = eq
    lam, m0 = monitors(state, grid)
    assert m0 == pytest.approx(1.0, abs=1e-12)
    assert lam >= 1.0


def test_monitors_expanding(ss):
    sol, grid = ss
    for t in (0.0, 0.5, 2.0):
        lam, m0 = monitors(exact_state(sol, grid, t), grid)
        assert m0 == pytest.approx(1 + t, rel=1e-12)
        assert lam >= 1 + t  # r_x + v_x


def test_monitors_reject_folded_map(eq):
    grid, state = eq
    r = state.r_face.copy()
    r[5], r[6] = r[6], r[5]
    with pytest.raises(InversionError):
        monitors(LagrangianState(0.0, r, state.v_face, state.Theta_cell), grid)


def test_vacuum_check_equilibrium(eq):
    grid, state = eq
    vac = vacuum_check(state, grid)
    assert vac.ok
    # theta = sin(x)/(2x) has -theta_x(pi) = 1/(2 pi)
    assert vac.min_neg_slope == pytest.approx(0.5 / math.pi, rel=0.05)


def test_vacuum_check_flags_flat_temperature(eq):
    grid, state = eq
    flat = LagrangianState(0.0, state.r_face, state.v_face, np.full(grid.N, 0.3))
    assert not vacuum_check(flat, grid).ok


def test_vacuum_minima_scale_with_expansion(ss):
    sol, grid = ss
    v0 = vacuum_check(exact_state(sol, grid, 0.0), grid)
    v1 = vacuum_check(exact_state(sol, grid, 1.0), grid)
    assert v1.min_neg_slope == pytest.approx(0.5 * v0.min_neg_slope, rel=1e-12)
    assert v1.min_theta_over_sigma == pytest.approx(0.5 * v0.min_theta_over_sigma, rel=1e-12)


def test_center_slope_calibration(eq):
    grid, state = eq
    lin = LagrangianState(0.0, state.r_face, state.v_face, 1.0 + 2.0 * grid.x_cell)
    assert center_slope(lin, grid) == pytest.approx(2.0, rel=1e-12)
    assert abs(center_slope(state, grid)) <= 2 * grid.dx * np.max(np.abs(theta_gradient(state.Theta_cell, grid)))


def test_theta_gradient_surface_is_second_order():
    errs = []
    for n in (32, 64):
        grid = build_grid(lambda x: 1 - x, n, R0=1.0)
        errs.append(abs(theta_gradient(np.sin(1 - grid.x_cell), grid)[-1] + 1.0))
    assert errs[0] / errs[1] > 3.5


def test_ledger_tracks_heat_input(eq):
    grid, state = eq
    e0 = energy_parts(state, grid, PARAMS)
    hotter = LagrangianState(1.0, state.r_face, state.v_face, state.Theta_cell + 0.01)
    heat = PARAMS.c_nu * 0.01 * grid.thermal_mass.sum()
    snaps = [Snapshot(state, 0.0, 0), Snapshot(hotter, heat, 1)]
    led = energy_ledger(snaps, grid, PARAMS)
    assert led.E_scale == pytest.approx(e0.scale)
    assert led.max_relative <= 1e-14
    led_bad = energy_ledger([snaps[0], replace(snaps[1], heat_in=0.0)], grid, PARAMS)
    assert led_bad.residuals[-1] == pytest.approx(heat, rel=1e-12)


def test_ledger_on_run(eq):
    grid, state = eq
    res = run(EvolveConfig(PARAMS, t_end=0.3, snapshot_every=0.1), grid, state)
    assert energy_ledger(res.snapshots, grid, PARAMS).max_relative <= 1e-10
    assert all(r.energy_ledger_residual <= 1e-10 for r in res.reports)


def test_tracker_reports(ss):
    sol, grid = ss
    tracker = DiagnosticsTracker(grid, sol.params)
    reports = [tracker.observe(Snapshot(exact_state(sol, grid, t), 0.0, 0)) for t in (0.0, 0.5, 1.0)]
    assert all(finite_report(r) for r in reports)
    assert [r.m0 for r in reports] == pytest.approx([1.0, 1.5, 2.0])
    assert not reports[1].m0_alert
    sups = [r.e1_components["sup:x_sqrt_rho0_v"] for r in reports]
    assert sups == sorted(sups)
    assert reports[0].e1_components["int:v_t"] == 0.0
    assert "e1:sup:v" in reports[0].row()
