"""Compressible scheme: equation of state, time-step bound, implicit density
solve, explicit momentum update, and the per-step energy/entropy monotonicity."""

import math

import numpy as np
import pytest

from apeuler.cases import comp_initial_data
from apeuler.compressible import (
    CompConfig,
    CompState,
    comp_dt,
    comp_step,
    default_output_times,
    density_picard,
    eos,
    eta_rule,
    init_comp,
    pi_gamma,
    psi,
    run_comp,
    stabilization,
    total_energy,
    total_entropy,
    velocity_update,
)
from apeuler.compressible import eos_values
from apeuler.fields import CellScalar, CellVector, cell_scalar, cell_vector
from apeuler.mesh import Mesh, MeshSpec
from apeuler.operators import (
    div_upwind_values,
    grad_values,
    split_advective_velocity,
)


def _well_prepared_state(mesh, eps):
    rho0, u0 = comp_initial_data(eps)
    return init_comp(rho0, u0, mesh, eps)


# ---------------------------------------------------------------------------
# equation of state and energies
# ---------------------------------------------------------------------------

def test_eos_psi_pi_gamma_at_gamma_two(mesh2):
    rho = CellScalar(mesh2, [1.0, 2.0, 0.5, 3.0])
    np.testing.assert_allclose(eos(rho, 2.0).values, [1.0, 4.0, 0.25, 9.0])
    np.testing.assert_allclose(psi(rho, 2.0).values, [1.0, 4.0, 0.25, 9.0])
    # for gamma = 2: pi(rho) = (rho - 1)^2
    np.testing.assert_allclose(pi_gamma(rho, 2.0).values,
                               [0.0, 1.0, 0.25, 4.0], atol=1e-15)


def test_pi_gamma_nonnegative_general_gamma(mesh2, rng):
    rho = CellScalar(mesh2, rng.uniform(0.1, 5.0, mesh2.ncells))
    assert np.all(pi_gamma(rho, 1.4).values >= 0.0)
    assert pi_gamma(CellScalar(mesh2, np.ones(4)), 1.4).values == pytest.approx(0.0)


def test_eos_rejects_nonpositive(mesh2):
    with pytest.raises(ValueError):
        eos_values(np.array([1.0, 0.0]), 2.0)
    with pytest.raises(ValueError):
        eos(CellScalar(mesh2, [-1.0, 1.0, 1.0, 1.0]), 2.0)


def test_total_energy_constant_state(mesh4):
    # rho = 1, u = 0: E = |Omega| psi(1)/eps^2 = 1/((gamma-1) eps^2)
    rho = cell_scalar(mesh4, 1.0)
    u = cell_vector(mesh4, (0.0, 0.0))
    assert total_energy(rho, u, 0.5, 2.0) == pytest.approx(4.0, rel=1e-14)
    assert total_energy(rho, u, 1.0, 1.5) == pytest.approx(2.0, rel=1e-14)
    # the entropy variant vanishes at the reference state
    assert total_entropy(rho, u, 0.5, 2.0) == pytest.approx(0.0, abs=1e-14)


def test_total_energy_kinetic_part(mesh4):
    rho = cell_scalar(mesh4, 2.0)
    u = cell_vector(mesh4, (3.0, 4.0))
    # KE = |Omega| * (1/2) * 2 * 25 = 25; internal = 4/eps^2
    assert total_energy(rho, u, 1.0, 2.0) == pytest.approx(29.0, rel=1e-14)


# ---------------------------------------------------------------------------
# configuration and initial data
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        CompConfig(gamma=1.0)
    with pytest.raises(ValueError):
        CompConfig(eps=0.0)
    with pytest.raises(ValueError):
        CompConfig(cfl_fraction=0.0)
    with pytest.raises(ValueError):
        CompConfig(eta_margin=0.99)
    with pytest.raises(ValueError):
        CompConfig(rho_lo=2.0, rho_hi=1.0)
    with pytest.raises(ValueError):
        CompConfig(picard_max_iter=0)


def test_config_default_dt_max():
    assert CompConfig(t_final=1.0).dt_max == pytest.approx(0.02)
    assert CompConfig(t_final=1.0, dt_max=0.5).dt_max == 0.5


def test_init_comp_rejects_nonpositive_density(mesh4):
    with pytest.raises(ValueError):
        init_comp(lambda x, y: 0.0 * x - 1.0,
                  (lambda x, y: 0.0 * x, lambda x, y: 0.0 * x), mesh4, 1.0)


def test_init_comp_well_prepared(mesh16):
    state = _well_prepared_state(mesh16, 1e-3)
    assert state.t == 0.0 and state.step == 0
    np.testing.assert_allclose(state.rho.values, 1.0, atol=2e-6)
    assert float(np.abs(state.rho.values - 1.0).max()) > 0.0


def test_state_rejects_nonpositive_density(mesh4):
    with pytest.raises(ValueError):
        CompState(t=0.0, rho=cell_scalar(mesh4, 0.0),
                  u=cell_vector(mesh4, (0.0, 0.0)))


def test_eta_rule_values(mesh4):
    assert eta_rule(cell_scalar(mesh4, 1.0)) == pytest.approx(1.515)
    assert eta_rule(cell_scalar(mesh4, 2.0)) == pytest.approx(0.7575)
    assert eta_rule(cell_scalar(mesh4, 1.0), eta_margin=1.0) == pytest.approx(1.5)
    # eta * rho_min > 3/2 strictly with the default margin
    assert eta_rule(cell_scalar(mesh4, 1.0)) * 1.0 > 1.5


def test_stabilization_scaling(mesh16):
    # du = (eta dt/eps^2) grad(rho^gamma); doubling dt doubles du
    rho = CellScalar(mesh16, 1.0 + 0.1 * np.sin(
        2.0 * np.pi * mesh16.cell_x[:, 0]))
    a = stabilization(rho, 0.01, 1.5, 0.1).values
    b = stabilization(rho, 0.02, 1.5, 0.1).values
    np.testing.assert_allclose(b, 2.0 * a, rtol=1e-14)
    assert float(np.abs(a).max()) > 0.0
    np.testing.assert_allclose(
        a, (1.5 * 0.01 / 0.01) * grad_values(mesh16, rho.values ** 2),
        rtol=1e-14)


# ---------------------------------------------------------------------------
# time-step bound
# ---------------------------------------------------------------------------

def test_comp_dt_uniform_flow_oracle(mesh4):
    # rho = 1, u = (1,0), grad p = 0 on the 4x4 unit mesh:
    # |bd K|/|K| = 1/0.0625 = 16, speed = 1, rhs = 1/3
    # => bound = 1/48, scaled by cfl_fraction 0.9
    cfg = CompConfig(t_final=1.0, dt_max=1.0)
    state = CompState(0.0, cell_scalar(mesh4, 1.0), cell_vector(mesh4, (1.0, 0.0)))
    dt = comp_dt(state, cell_vector(mesh4, (0.0, 0.0)), cfg)
    assert dt == pytest.approx(0.9 / 48.0, rel=1e-14)


def test_comp_dt_rest_state_returns_cap(mesh4):
    cfg = CompConfig(t_final=1.0, dt_max=0.125)
    state = CompState(0.0, cell_scalar(mesh4, 1.0), cell_vector(mesh4, (0.0, 0.0)))
    assert comp_dt(state, cell_vector(mesh4, (0.0, 0.0)), cfg) == 0.125


def test_comp_dt_stiff_pressure_scales_like_eps(mesh16):
    # with u = 0 the bound is ~ eps/sqrt(eta |grad p|), so a 10x smaller eps
    # shrinks dt by 10 -- the explicit-at-t^n evaluation, not the AP step
    rho = CellScalar(mesh16, 1.0 + 0.1 * np.sin(
        2.0 * np.pi * mesh16.cell_x[:, 0]))
    u = cell_vector(mesh16, (0.0, 0.0))
    gp = CellVector(mesh16, grad_values(mesh16, eos_values(rho.values, 2.0)))
    dts = [comp_dt(CompState(0.0, rho, u), gp,
                   CompConfig(eps=e, t_final=1e3, dt_max=1e3))
           for e in (1e-1, 1e-2)]
    assert dts[0] / dts[1] == pytest.approx(10.0, rel=1e-12)


# ---------------------------------------------------------------------------
# implicit density solve
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-4])
def test_density_picard_solves_original_scheme(mesh16, eps):
    # the converged iterate satisfies the *nonlinear* balance
    # rho' - rho + dt div_up(rho', w(rho')) = 0 with the split recomputed
    # from rho' itself, i.e. the linearized sweeps share its fixed point
    cfg = CompConfig(eps=eps, t_final=1.0, dt_max=1.0)
    state = _well_prepared_state(mesh16, eps)
    gp = CellVector(mesh16, grad_values(mesh16,
                                        eos_values(state.rho.values, cfg.gamma)))
    dt = comp_dt(state, gp, cfg)
    rho_new, split, eta, report = density_picard(state.rho, state.u, dt, cfg)

    assert report.converged
    assert report.sweeps <= 5
    du = stabilization(rho_new, dt, eta, eps, cfg.gamma)
    recomputed = split_advective_velocity(state.u, du)
    resid = (rho_new.values - state.rho.values
             + dt * div_upwind_values(mesh16, rho_new.values,
                                      recomputed.wplus, recomputed.wminus))
    rel = np.linalg.norm(resid) / np.linalg.norm(state.rho.values)
    assert rel <= 1e-10
    # the returned split is the converged one
    assert float(np.abs(recomputed.wplus - split.wplus).max()) <= 1e-8
    # positivity survives the solve
    assert float(rho_new.values.min()) > 0.0


@pytest.mark.parametrize("eps", [1.0, 1e-4])
def test_density_picard_conserves_mass(mesh16, eps):
    cfg = CompConfig(eps=eps, t_final=1.0, dt_max=1.0)
    state = _well_prepared_state(mesh16, eps)
    gp = CellVector(mesh16, grad_values(mesh16,
                                        eos_values(state.rho.values, cfg.gamma)))
    dt = comp_dt(state, gp, cfg)
    rho_new, _, _, _ = density_picard(state.rho, state.u, dt, cfg)
    m0 = float(np.dot(mesh16.cell_vol, state.rho.values))
    m1 = float(np.dot(mesh16.cell_vol, rho_new.values))
    assert abs(m1 - m0) <= 1e-13 * m0


def test_density_picard_constant_state_is_fixed_point(mesh4):
    cfg = CompConfig(eps=1e-2, t_final=1.0, dt_max=1.0)
    rho = cell_scalar(mesh4, 1.3)
    u = cell_vector(mesh4, (0.7, -0.2))
    rho_new, _, _, report = density_picard(rho, u, 0.01, cfg)
    np.testing.assert_allclose(rho_new.values, 1.3, rtol=1e-14)
    assert report.sweeps <= 2


def test_density_picard_window_violation_raises(mesh16):
    cfg = CompConfig(eps=1.0, t_final=1.0, dt_max=1.0, rho_hi=1.0 + 1e-6)
    state = _well_prepared_state(mesh16, 1.0)  # max rho ~ 2
    with pytest.raises(RuntimeError, match="window"):
        density_picard(state.rho, state.u, 1e-3, cfg)


def test_density_picard_sweep_budget_raises(mesh16):
    cfg = CompConfig(eps=1e-2, t_final=1.0, dt_max=1.0,
                     picard_max_iter=1, picard_tol=1e-15)
    state = _well_prepared_state(mesh16, 1e-2)
    with pytest.raises(RuntimeError, match="Picard"):
        density_picard(state.rho, state.u, 8e-4, cfg)


# ---------------------------------------------------------------------------
# momentum update and full step
# ---------------------------------------------------------------------------

def test_velocity_update_constant_state_exact(mesh4):
    rho = cell_scalar(mesh4, 1.5)
    u = cell_vector(mesh4, (0.8, -0.3))
    split = split_advective_velocity(u, cell_vector(mesh4, (0.0, 0.0)))
    u_new = velocity_update(rho, u, rho, split, 0.01, 1.0)
    # zero flux sum and zero pressure gradient; only the rho*u/rho round trip
    # is allowed to produce an ulp
    np.testing.assert_allclose(u_new.values, u.values, rtol=1e-15)


def test_velocity_update_pressure_gradient_only(mesh16):
    # u = 0 and frozen zero split: du/dt = -(1/(eps^2 rho)) grad p exactly
    rho = CellScalar(mesh16, 1.0 + 0.1 * np.sin(
        2.0 * np.pi * mesh16.cell_x[:, 0]))
    u = cell_vector(mesh16, (0.0, 0.0))
    split = split_advective_velocity(u, u)
    dt, eps = 1e-3, 0.5
    u_new = velocity_update(rho, u, rho, split, dt, eps)
    gp = grad_values(mesh16, eos_values(rho.values, 2.0))
    expect = -(dt / eps**2) * gp / rho.values[:, None]
    np.testing.assert_allclose(u_new.values, expect, rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("eps", [1.0, 1e-2])
def test_comp_step_energy_and_entropy_monotone(mesh16, eps):
    cfg = CompConfig(eps=eps, t_final=0.02)
    state = _well_prepared_state(mesh16, eps)
    e_prev = total_energy(state.rho, state.u, eps, cfg.gamma)
    s_prev = total_entropy(state.rho, state.u, eps, cfg.gamma)
    mass0 = float(np.dot(mesh16.cell_vol, state.rho.values))
    for _ in range(5):
        state, diag = comp_step(state, cfg)
        assert diag.energy_ok
        assert diag.energy <= e_prev * (1.0 + 1e-10)
        assert diag.entropy_pi <= s_prev * (1.0 + 1e-10)
        assert diag.mass == pytest.approx(mass0, rel=1e-12)
        assert diag.rho_min > 0.0
        assert diag.dt <= diag.dt_bound
        assert diag.picard_iters >= 1
        e_prev, s_prev = diag.energy, diag.entropy_pi
    assert state.step == 5


def test_comp_step_honours_dt_cap(mesh16):
    cfg = CompConfig(eps=1.0, t_final=0.02)
    state = _well_prepared_state(mesh16, 1.0)
    new_state, diag = comp_step(state, cfg, dt_cap=1e-5)
    assert diag.dt == 1e-5
    assert diag.dt_bound > 1e-5
    assert new_state.t == pytest.approx(1e-5)


def test_default_output_times():
    np.testing.assert_allclose(default_output_times(1.0, 5),
                               [0.0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(default_output_times(0.0), [0.0])


def test_run_comp_lands_on_output_times(mesh16):
    cfg = CompConfig(eps=1.0, t_final=0.004)
    state = _well_prepared_state(mesh16, 1.0)
    times = np.array([0.0, 0.002, 0.004])
    traj = run_comp(cfg, mesh16, state, output_times=times)
    np.testing.assert_array_equal(traj.times, times)
    assert [s.t for s in traj.states] == list(times)
    assert len(traj.diagnostics) >= 2
    steps = [d.step for d in traj.diagnostics]
    assert steps == list(range(1, len(steps) + 1))
    assert traj.diagnostics[-1].t == pytest.approx(0.004, abs=1e-12)
