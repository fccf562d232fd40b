import math

import mpmath
import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import lambertw

from shallowlake.control import ControlSignal
from shallowlake.dynamics import ModelParams, make_lake_dynamics, make_linear_dynamics
from shallowlake.harness import generators
from shallowlake.localization import (DOMINATION_TOL, MaximizingBounds, asymptotic_N_check, beta_residual,
                                      bound_eta, bound_N, compute_K1, compute_K2, compute_L, corridor_violation,
                                      improve, k1_objective, l_condition, localize_above, localize_below,
                                      log_beta, log_bound_eta, log_bound_N, maximizing_bounds, solve_beta)
from shallowlake.objective import lower_bound_unit_control, value_upper_bound

CERT_TOL = 1e-7


def unit_bounds(L=1.0):
    return MaximizingBounds(K1=1.0, K2=1.0, K=1.0, L=L, V_lb=0.0)


@pytest.mark.parametrize("T,b0", [(0.0, 1.0), (1.0, 1.0), (3.0, 0.6), (40.0, 2.0), (400.0, 1.0)])
def test_beta_matches_lambert_w(T, b0):
    ref = float(np.real(lambertw(b0 * math.exp(-T * b0)))) / b0
    beta = solve_beta(T, b0)
    assert beta == pytest.approx(ref, rel=1e-12)
    assert 0.0 < beta < 1.0
    assert abs(beta_residual(beta, T, b0)) <= 1e-12


def test_beta_examples_and_monotone():
    assert solve_beta(0.0, 1.0) == pytest.approx(0.567143290409784, abs=1e-12)
    assert solve_beta(1.0, 1.0) == pytest.approx(0.27846454276107, abs=1e-12)
    assert solve_beta(2.0, 1.0) < solve_beta(1.0, 1.0) < solve_beta(0.0, 1.0)
    with pytest.raises(ValueError):
        solve_beta(-1.0, 1.0)


@given(st.floats(0.0, 500.0), st.floats(0.05, 5.0))
def test_beta_residual_property(T, b0):
    y = log_beta(T, b0)
    assert y < 0.0
    assert abs(y + b0 * math.exp(y) + T * b0) <= 1e-12 * max(1.0, T * b0)
    if T * b0 < 700.0:
        assert abs(beta_residual(solve_beta(T, b0), T, b0)) <= 1e-12 * max(1.0, T * b0)


def test_N_example_and_monotone():
    bounds = unit_bounds()
    assert bound_N(bounds, 1.0, 1.0, 0.03) == pytest.approx(13.93, abs=0.01)
    # rho -> 0 limit
    beta = solve_beta(3.0, 1.0)
    assert bound_N(bounds, 3.0, 1.0, 1e-14) == pytest.approx(beta ** -2, rel=1e-12)
    logs = [log_bound_N(bounds, T, 1.0, 0.03) for T in range(1, 51)]
    assert all(b > a for a, b in zip(logs, logs[1:]))
    assert logs[0] > 0.0


def test_log_space_survives_overflow(lake_bounds):
    T = 2000.0
    assert math.isfinite(log_bound_N(lake_bounds, T, 1.0, 0.03))
    assert math.isfinite(log_bound_eta(lake_bounds, T))
    assert bound_eta(lake_bounds, T) == 0.0
    assert log_bound_eta(lake_bounds, 2.0) < log_bound_eta(lake_bounds, 1.0) < 0.0


def test_K1_peak_and_grid_scan():
    params = ModelParams(make_linear_dynamics(0.6), 0.03, 1.0, 1.0)
    z_star = (0.03 + 0.6) / math.sqrt(2.0)
    assert float(k1_objective(params, z_star)) == pytest.approx(value_upper_bound(params), rel=1e-14)
    V_lb = lower_bound_unit_control(params)
    K1 = compute_K1(params, V_lb)
    z = np.exp(np.linspace(math.log(z_star), math.log(1e3), 2_000_001))
    above = z[k1_objective(params, z) >= V_lb - 1.0]
    assert K1 * 0.03 > z_star
    assert K1 * 0.03 == pytest.approx(above[-1], rel=1e-5)
    # mpmath root as a second oracle
    mpmath.mp.dps = 30
    phi = lambda s: mpmath.log(s) / mpmath.mpf("0.03") - s ** 2 / (mpmath.mpf("0.03") * mpmath.mpf("0.63") ** 2)  # noqa: E731
    root = mpmath.findroot(lambda s: phi(s) - (V_lb - 1.0), K1 * 0.03)
    assert K1 * 0.03 == pytest.approx(float(root), rel=1e-10)


def test_K1_rejects_infeasible_lower_bound(lake):
    with pytest.raises(ValueError):
        compute_K1(lake, value_upper_bound(lake) + 2.0)
    with pytest.raises(ValueError):
        maximizing_bounds(lake, value_upper_bound(lake) + 1.0)


def test_K2_formula_and_symbolic_envelope(lake):
    zero = lake.with_x0(0.0)
    assert compute_K2(zero, 0.0) == pytest.approx(1.0 / (0.03 * 1.03))
    slope = compute_K2(lake.with_x0(2.0), 5.0) - compute_K2(lake.with_x0(1.0), 5.0)
    assert slope == pytest.approx(1.0 / 1.03)
    # ∫ e^{-rho t} x_up dt for u ≡ u0, where ∫ e^{-rho t} u = u0 / rho plays the role of K1
    t, s = sp.symbols("t s", nonnegative=True)
    rho, b, M, x0, u0 = sp.Rational(3, 100), sp.Integer(1), sp.Integer(1), sp.Integer(1), sp.Rational(7, 3)
    upper = sp.exp(-b * t) * x0 + sp.integrate(sp.exp(-b * (t - s)) * (M + u0), (s, 0, t))
    ref = float(sp.integrate(sp.exp(-rho * t) * upper, (t, 0, sp.oo)))
    assert compute_K2(lake, float(u0 / rho)) == pytest.approx(ref, rel=1e-12)


def test_L_conditions(lake, lake_bounds):
    L = lake_bounds.L
    assert L > lake.rho + 2 * lake.c / lake.rho
    assert l_condition(lake, lake_bounds.K2, L) >= 0.0
    # with rho = 1 the floor rho + 2c/rho = 3 stops binding once K2 is large
    fast = ModelParams(make_lake_dynamics(1.0), 1.0, 1.0, 1.0)
    Ls = [compute_L(fast, K2) for K2 in (1.0, 10.0, 1e3, 1e6, 1e9)]
    assert all(b >= a for a, b in zip(Ls, Ls[1:]))
    assert Ls[-1] > Ls[2] > 3.0
    assert 0.0 <= l_condition(fast, 1e9, Ls[-1]) <= 1e-9 * 2e9


def test_bounds_invariants(lake_bounds):
    assert lake_bounds.K >= 1.0 and lake_bounds.K >= lake_bounds.K1
    assert set(lake_bounds.to_dict()) == {"K1", "K2", "K", "L", "V_lb"}


def test_clamp_is_identity_below_N(lake, lake_bounds):
    u = ControlSignal.constant(1.0)
    new, rep = localize_above(lake, lake_bounds, u, 5.0)
    assert new is u and rep.I_tilde == 0.0 and not rep.applied


def test_clamp_single_spike_mass():
    params = ModelParams(make_lake_dynamics(1.0), 0.03, 1.0, 1.0)
    bounds = unit_bounds()
    T = 1.0
    N = bound_N(bounds, T, 1.0, 0.03)
    w = 0.2
    u = ControlSignal([0.0, 0.3, 0.3 + w, 4.0], [1.0, 2 * N, 1.0], 1.0)
    new, rep = localize_above(params, bounds, u, T, certify=False)
    assert rep.I_tilde == pytest.approx(N * w, rel=1e-13)
    end = T + rep.beta_T
    # the clipped mass comes back as a rate on an interval of length beta_T
    assert new.integral(0.0, end) == pytest.approx(u.integral(0.0, end) - (1 - rep.beta_T) * rep.I_tilde,
                                                   rel=1e-12)
    assert new(0.4) == pytest.approx(N) and new(T + 0.5 * rep.beta_T) == pytest.approx(1.0 + rep.I_tilde)
    assert new(T + rep.beta_T + 0.1) == 1.0


@pytest.mark.parametrize("seed", range(8))
def test_clamp_certificate_on_spiky_controls(lake, lake_bounds, seed):
    rng = np.random.default_rng(seed)
    T = (1.0, 5.0, 10.0)[seed % 3]
    u = generators.spiky_control(rng, lake, lake_bounds, T)
    new, rep = localize_above(lake, lake_bounds, u, T)
    assert rep.applied and rep.I_tilde > 0
    assert rep.hypothesis_slack >= 0.0
    assert rep.certificate_slack >= -CERT_TOL
    assert rep.delta.lo >= -CERT_TOL
    assert rep.trajectory_dominated
    assert 0.0 < rep.beta_T < 1.0 and rep.eta < rep.N


def test_lift_identity_and_T_guard(lake, lake_bounds):
    u = ControlSignal.constant(1.0)
    new, rep = localize_below(lake, lake_bounds, u, 2.0)
    assert new is u and rep.I == 0.0
    with pytest.raises(ValueError):
        localize_below(lake, lake_bounds, u, 0.5)
    with pytest.raises(ValueError):
        improve(lake, lake_bounds, u, 0.5)


@pytest.mark.parametrize("seed", range(8))
def test_lift_certificate_on_plateau_controls(lake, lake_bounds, seed):
    rng = np.random.default_rng(100 + seed)
    T = (1.0, 5.0, 10.0)[seed % 3]
    u = generators.plateau_control(rng, lake, lake_bounds, T)
    new, rep = localize_below(lake, lake_bounds, u, T)
    assert rep.applied
    assert 0.0 < rep.I <= T * rep.eta
    assert rep.hypothesis_slack >= 0.0
    assert rep.certificate_slack >= -CERT_TOL
    assert rep.domination_gap <= rep.I + DOMINATION_TOL


@pytest.mark.parametrize("seed", range(6))
def test_improve_lands_in_corridor_and_is_idempotent(lake, lake_bounds, seed):
    rng = np.random.default_rng(200 + seed)
    T = 5.0
    u = generators.random_control(rng, horizon=12.0)
    u_T, reps = improve(lake, lake_bounds, u, T, certify=False)
    log_N, log_eta = reps[0].log_N, reps[0].log_eta
    assert corridor_violation(u_T, T, log_eta, log_N) == 0.0
    knots, rates = u_T.cells(T)
    assert np.max(np.abs(np.log(rates))) <= max(abs(log_eta), log_N)
    again, reps2 = improve(lake, lake_bounds, u_T, T, certify=False)
    assert reps2[0].I_tilde == 0.0 and reps2[1].I == 0.0
    probe = np.linspace(0.0, T, 501)
    np.testing.assert_array_equal(again(probe), u_T(probe))


def test_corridor_violation_measures_log_distance():
    u = ControlSignal([0.0, 1.0, 2.0], [math.e ** 3, math.e ** -5], 1.0)
    assert corridor_violation(u, 3.0, -2.0, 1.0) == pytest.approx(3.0)
    assert corridor_violation(u, 3.0, -6.0, 4.0) == 0.0


def test_asymptotic_rows(lake_bounds):
    rows = asymptotic_N_check(lake_bounds, 0.03, 1.0, [200.0, 400.0, 800.0])
    mids = [r[1] for r in rows]
    assert mids[0] > mids[1] > mids[2] > 0.0
    assert rows[0][2] == pytest.approx(2 * 200.0 ** 2 * math.exp(-6.0))
