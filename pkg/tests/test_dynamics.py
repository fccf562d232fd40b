import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from shallowlake.control import ControlSignal
from shallowlake.dynamics import (LAKE_THRESHOLD, IntegrationError, ModelParams, envelope_bounds, h_factor,
                                  integrate_state, make_lake_dynamics, make_linear_dynamics, sample_grid,
                                  variation_identity_residual)


@st.composite
def controls(draw, max_cells=6, log_lo=-6.0, log_hi=3.0):
    n = draw(st.integers(1, max_cells))
    widths = draw(st.lists(st.floats(0.05, 4.0), min_size=n, max_size=n))
    logs = draw(st.lists(st.floats(log_lo, log_hi), min_size=n + 1, max_size=n + 1))
    grid = np.concatenate(([0.0], np.cumsum(widths)))
    return ControlSignal(grid, np.exp(logs[:-1]), math.exp(logs[-1]))


def _lake_reference(params, u, t_end):
    """Cell-by-cell DOP853 at tight tolerance."""
    knots, rates = u.cells(t_end)
    b = params.dynamics.b0
    x = params.x0
    for a, c, r in zip(knots[:-1], knots[1:], rates):
        sol = solve_ivp(lambda t, y: -b * y + y * y / (1 + y * y) + r, (a, c), [x], method="DOP853",
                        rtol=1e-13, atol=1e-13)
        x = sol.y[0, -1]
    return x


def test_lake_threshold_matches_grid_search():
    xs = np.linspace(0.0, 5.0, 2_000_001)
    assert LAKE_THRESHOLD == pytest.approx(np.max(2 * xs / (1 + xs ** 2) ** 2), abs=1e-10)
    assert LAKE_THRESHOLD == pytest.approx(0.649519, abs=1e-6)


def test_lake_spec_values():
    spec = make_lake_dynamics(1.0)
    assert spec.F(0.0) == 0.0
    assert spec.F(1.0) == pytest.approx(-0.5)
    assert spec.F_prime(1.0) == pytest.approx(-0.5)
    assert (spec.b0, spec.b_up, spec.M) == (1.0, 1.0, 1.0)
    # F'' changes sign at x_bar
    f2 = lambda x: 2 * (1 - 3 * x * x) / (1 + x * x) ** 3  # noqa: E731
    assert f2(spec.x_bar - 1e-6) > 0 > f2(spec.x_bar + 1e-6)
    spec.validate(x_max=50.0)


def test_lake_below_threshold_rejected():
    with pytest.raises(ValueError, match="non-monotone"):
        make_lake_dynamics(0.6)
    make_lake_dynamics(LAKE_THRESHOLD)


def test_validate_catches_bad_envelope():
    spec = make_linear_dynamics(1.0)
    bad = type(spec)(b0=0.5, b_up=1.0, M=0.0, x_bar=1.0, F=spec.F, F_prime=spec.F_prime)
    with pytest.raises(ValueError, match="b0"):
        bad.validate(x_max=10.0)


@pytest.mark.parametrize("x0,u0,b0", [(0.0, 1.0, 1.0), (2.0, 0.3, 0.6), (5.0, 7.0, 2.0)])
def test_linear_closed_form(x0, u0, b0):
    params = ModelParams(make_linear_dynamics(b0), 0.03, 1.0, x0)
    tr = integrate_state(params, ControlSignal.constant(u0), 20.0, 0.01)
    exact = np.exp(-b0 * tr.times) * x0 + u0 * -np.expm1(-b0 * tr.times) / b0
    np.testing.assert_allclose(tr.states, exact, rtol=1e-9, atol=1e-12)
    disc = 0.03 + np.array([0.0, b0, 2 * b0])
    A, B = u0 / b0, x0 - u0 / b0
    q_exact = np.sum(np.array([A * A, 2 * A * B, B * B]) * -np.expm1(-disc * 20.0) / disc)
    assert tr.disc_sq[-1] == pytest.approx(q_exact, rel=1e-9)


def test_zero_state_stays_zero_for_tiny_control(lake):
    tr = integrate_state(lake.with_x0(0.0), ControlSignal.constant(1e-300), 10.0, 0.01)
    assert np.all(tr.states >= 0.0)
    assert np.max(tr.states) < 1e-290


def test_lake_matches_reference_and_self_convergence(lake):
    u = ControlSignal.constant(1.0)
    coarse = integrate_state(lake, u, 10.0, 0.01).x_end
    fine = integrate_state(lake, u, 10.0, 1e-4).x_end
    assert coarse == pytest.approx(fine, abs=1e-10)
    assert coarse == pytest.approx(_lake_reference(lake, u, 10.0), abs=1e-10)


def test_integrator_order(lake):
    u = ControlSignal([0.0, 1.0, 2.5, 4.0], [3.0, 0.2, 8.0], 0.5)
    ref = _lake_reference(lake, u, 6.0)
    errs = [abs(integrate_state(lake, u, 6.0, h).x_end - ref) for h in (0.2, 0.1, 0.05)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 3.8


def test_times_cover_horizon_and_restart_at_knots(lake):
    u = ControlSignal([0.0, 0.33, 1.7], [2.0, 0.1], 1.0)
    tr = integrate_state(lake, u, 5.0, 0.1)
    assert tr.times[0] == 0.0 and tr.t_end == 5.0
    assert np.all(np.diff(tr.times) > 0)
    assert 0.33 in tr.times and 1.7 in tr.times


def test_step_guards(lake):
    u = ControlSignal.constant(1.0)
    with pytest.raises(IntegrationError):
        integrate_state(lake, u, 1.0, 1e-12)
    with pytest.raises(IntegrationError):
        integrate_state(lake, u, 10.0, 3.0)
    with pytest.raises(ValueError):
        integrate_state(lake, u, -1.0, 0.1)


def test_fast_cells_get_refined_head(lake):
    u = ControlSignal([0.0, 2.0, 4.0], [1e-3, 900.0], 1.0)
    knots, nsub = sample_grid(lake, [u], 10.0, 5e-3)
    head = np.flatnonzero(knots == 2.0)[0]
    assert knots[head + 1] == pytest.approx(2.0 + 20.0 / 901.0)
    assert (knots[head + 1] - knots[head]) / nsub[head] <= 5e-3 * 10.0 / 901.0 + 1e-15
    # the refined head removes the pre-asymptotic error of the jump
    ref = _lake_reference(lake, u, 2.5)
    assert integrate_state(lake, u, 2.5, 5e-3).x_end == pytest.approx(ref, rel=1e-11)


def test_companions_share_samples(lake):
    u1 = ControlSignal([0.0, 1.0], [500.0], 1.0)
    u2 = ControlSignal([0.0, 0.5, 2.0], [0.1, 3.0], 2.0)
    t1 = integrate_state(lake, u1, 5.0, 0.01, companions=[u2]).times
    t2 = integrate_state(lake, u2, 5.0, 0.01, companions=[u1]).times
    np.testing.assert_array_equal(t1, t2)


@given(controls(), st.sampled_from([0.0, 1.0, 5.0]))
def test_envelope_containment(u, x0):
    params = ModelParams(make_lake_dynamics(1.0), 0.03, 1.0, x0)
    tr = integrate_state(params, u, 25.0, 0.01)
    lower, upper = envelope_bounds(params, u, tr.times)
    assert np.all(lower <= upper)
    assert np.all(tr.states >= lower - 1e-6)
    assert np.all(tr.states <= upper + 1e-6)


def test_envelope_edges(lake):
    u = ControlSignal.constant(2.0)
    assert envelope_bounds(lake, u, 0.0) == (pytest.approx(1.0), pytest.approx(1.0))
    lo, up = envelope_bounds(lake, u, 200.0)
    assert up == pytest.approx((1.0 + 2.0) / 1.0)
    assert lo == pytest.approx(2.0)
    with pytest.raises(ValueError):
        envelope_bounds(lake, u, -1.0)


@given(controls(), controls(max_cells=3, log_hi=1.0))
def test_comparison_monotonicity(u, bump):
    params = ModelParams(make_lake_dynamics(1.0), 0.03, 1.0, 0.5)
    big = u.with_knots(bump.grid)
    mids = 0.5 * (big.grid[:-1] + big.grid[1:])
    big = ControlSignal(big.grid, big.values + bump(mids), big.tail + bump.tail)
    x_small = integrate_state(params, u, 20.0, 0.01, companions=[big]).states
    x_big = integrate_state(params, big, 20.0, 0.01, companions=[u]).states
    assert np.all(x_big >= x_small - 1e-9)


def test_h_factor_values():
    spec = make_lake_dynamics(1.0)
    assert h_factor(spec, 1.0, 1.0) == pytest.approx(-0.5)
    assert h_factor(spec, 0.0, 1.0) == pytest.approx(-0.5)
    # continuity across the diagonal switch
    assert h_factor(spec, 1.0, 1.0 + 1e-9) == pytest.approx(h_factor(spec, 1.0, 1.0), abs=1e-8)


@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0), st.floats(LAKE_THRESHOLD, 3.0))
def test_h_factor_range(x1, x2, b):
    spec = make_lake_dynamics(b)
    h = h_factor(spec, x1, x2)
    assert -b - 1e-12 <= h <= 1e-12


def test_identity_trivial_and_linear_cases(lake):
    u = ControlSignal([0.0, 1.0, 3.0], [2.0, 0.5], 1.0)
    assert variation_identity_residual(lake, u, u, 5.0, 0.01) == 0.0
    lin = ModelParams(make_linear_dynamics(1.0), 0.03, 1.0, 1.0)
    res = variation_identity_residual(lin, ControlSignal.constant(2.0), ControlSignal.constant(1.0), 5.0, 0.01)
    # both sides reduce to 1 - e^{-5}
    assert res < 1e-10


@given(controls(), controls())
def test_identity_residual_small(u1, u2):
    params = ModelParams(make_lake_dynamics(1.0), 0.03, 1.0, 1.0)
    assert variation_identity_residual(params, u1, u2, 8.0, 1e-3) <= 1e-6
