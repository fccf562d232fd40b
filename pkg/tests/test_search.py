import math

import numpy as np
import pytest

from shallowlake.control import ControlSignal
from shallowlake.dynamics import ModelParams, make_linear_dynamics
from shallowlake.localization import maximizing_bounds
from shallowlake.objective import value_upper_bound
from shallowlake.search import SearchConfig, ascend, maximizing_sequence

B0, RHO, C = 1.0, 0.03, 1.0


def single_cell_objective(v):
    """Exact B for u ≡ v, F = -b0 x, x0 = 0."""
    J = (1.0 / RHO - 2.0 / (RHO + B0) + 1.0 / (RHO + 2.0 * B0)) / B0 ** 2
    return np.log(v) / RHO - C * J * np.square(v)


@pytest.fixture(scope="module")
def single_cell():
    params = ModelParams(make_linear_dynamics(B0), RHO, C, 0.0)
    bounds = maximizing_bounds(params)
    cfg = SearchConfig(horizon_T=10.0, cells=1, tail_policy="last", max_iters=200)
    return params, bounds, ascend(params, bounds, cfg)


def grid_scan_optimum():
    v = np.linspace(0.5, 1.0, 5_000_001)
    return float(v[np.argmax(single_cell_objective(v))])


def test_single_cell_matches_grid_scan(single_cell):
    _, _, res = single_cell
    v_grid = grid_scan_optimum()
    J = (1.0 / RHO - 2.0 / (RHO + B0) + 1.0 / (RHO + 2.0 * B0)) / B0 ** 2
    assert v_grid == pytest.approx(math.sqrt(1.0 / (2.0 * RHO * C * J)), abs=1e-6)
    assert res.best_control.values[0] == pytest.approx(v_grid, abs=1e-4)
    assert res.best_control.tail == res.best_control.values[0]
    assert res.best_objective.lo <= float(single_cell_objective(v_grid)) <= res.best_objective.hi + 1e-8


def test_iterates_monotone_and_inside_corridor(single_cell):
    params, _, res = single_cell
    los = [row["lo"] for row in res.iterate_log]
    assert all(b >= a for a, b in zip(los, los[1:]))
    eta, N = res.corridor
    assert np.all(res.best_control.values >= eta) and np.all(res.best_control.values <= N)
    assert all(row["lo"] <= value_upper_bound(params) + 1e-6 for row in res.iterate_log)


def test_restart_from_optimum_is_stable(single_cell):
    params, bounds, res = single_cell
    cfg = SearchConfig(horizon_T=10.0, cells=1, tail_policy="last", max_iters=50)
    again = ascend(params, bounds, cfg, initial=res.best_control)
    assert abs(again.best_objective.mid - res.best_objective.mid) <= 1e-6


def test_maximizing_sequence_non_decreasing(lake):
    bounds = maximizing_bounds(lake)
    cfg = SearchConfig(horizon_T=6.0, cells=3, max_iters=15)
    schedule = [(2.0, cfg), (4.0, cfg), (6.0, cfg)]
    results = maximizing_sequence(lake, bounds, schedule)
    los = [r.best_objective.lo for r in results]
    assert all(b >= a - 1e-7 for a, b in zip(los, los[1:]))
    ub = value_upper_bound(lake)
    for r in results:
        assert all(row["lo"] <= ub + 1e-6 for row in r.iterate_log)
        assert len(r.surgery) == 2


def test_single_step_schedule_is_improve_then_ascend(lake):
    bounds = maximizing_bounds(lake)
    cfg = SearchConfig(horizon_T=4.0, cells=2, max_iters=5)
    start = ControlSignal.uniform(4.0, [1e12, 1.0])
    res = maximizing_sequence(lake, bounds, [(2.0, cfg)], initial=start)[0]
    assert res.surgery[0].applied and res.surgery[0].I_tilde > 0
    assert res.corridor_T == 2.0


def test_free_and_fixed_tail_policies(lake):
    bounds = maximizing_bounds(lake)
    fixed = ascend(lake, bounds, SearchConfig(horizon_T=4.0, cells=2, tail_policy="fixed", tail_value=0.5,
                                              max_iters=5))
    assert fixed.best_control.tail == 0.5
    free = ascend(lake, bounds, SearchConfig(horizon_T=4.0, cells=2, tail_policy="free", max_iters=5))
    assert free.best_objective.lo >= fixed.best_objective.lo - 1.0


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(cells=0)
    with pytest.raises(ValueError):
        SearchConfig(horizon_T=0.5)
    with pytest.raises(ValueError):
        SearchConfig(tail_policy="mirror")
    with pytest.raises(ValueError):
        SearchConfig(grad_eps=0.0)
    with pytest.raises(ValueError):
        SearchConfig(step_shrink=1.5)


def test_schedule_validation(lake):
    bounds = maximizing_bounds(lake)
    cfg = SearchConfig()
    with pytest.raises(ValueError):
        maximizing_sequence(lake, bounds, [(4.0, cfg), (2.0, cfg)])
    with pytest.raises(ValueError):
        maximizing_sequence(lake, bounds, [(0.5, cfg)])
