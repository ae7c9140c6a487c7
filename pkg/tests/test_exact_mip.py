import time

import numpy as np
import pytest

from curbzone.exact_mip import ModelTooLarge, build_model, solve_exact
from curbzone.lp_core import solve_lp
from curbzone.model import Allocation, brute_force_solve, check_feasible, evaluate, make_scenario

from factories import small_scenario


def test_model_sizes_rho_zero():
    s = make_scenario(np.zeros((2, 2, 3)), b=1)
    model = build_model(s)
    assert model.lp.n == 12 + 6
    assert model.row_counts == {"one_hot": 4, "count_bounds": 12, "change": 13, "pair": 0}
    assert model.lp.m == 4 + 12 + 13
    assert model.integer.sum() == 12


def test_model_pair_variables():
    s = make_scenario(np.zeros((2, 3, 3)), rho=0.5)
    model = build_model(s)
    assert len(model.y_index) == 2 * 3 * 3
    with pytest.raises(ModelTooLarge):
        build_model(s, y_cap=10)


def _fixed_point_value(model, scenario, plan):
    """Optimal LP value with u fixed to ``plan`` (d and y left free)."""
    u = Allocation(plan).one_hot(scenario.M).ravel().astype(float)
    lo, hi = model.lp.lo.copy(), model.lp.hi.copy()
    lo[: u.size] = hi[: u.size] = u
    return solve_lp(model.lp.with_bounds(lo, hi))


@pytest.mark.parametrize("seed", range(8))
def test_linearization_matches_evaluate(seed):
    s = small_scenario(seed, N=3, T=2, rho=0.5, b=3, bounds=False)
    model = build_model(s)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        plan = rng.integers(0, 3, (2, 3))
        sol = _fixed_point_value(model, s, plan)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(evaluate(s, Allocation(plan)), abs=1e-6)
        # minimal feasible sum of d equals twice the change count
        d = sol.x[model.d_index].sum()
        assert d >= 2 * np.count_nonzero(plan[1] != plan[0]) - 1e-9


def test_change_linearization_is_tight():
    s = make_scenario(np.zeros((2, 3, 3)), b=1)
    model = build_model(s)
    assert _fixed_point_value(model, s, np.array([[0, 0, 0], [1, 0, 0]])).status == "optimal"
    assert _fixed_point_value(model, s, np.array([[0, 0, 0], [1, 1, 0]])).status == "infeasible"


def test_root_relaxation_bounds_optimum():
    s = small_scenario(11, N=3, T=2, rho=0.5, b=1)
    root = solve_lp(build_model(s).lp)
    _, best = brute_force_solve(s)
    assert root.objective >= best - 1e-9


def test_trivial_instance():
    s = make_scenario([[[0.3, 0.9, 0.5]]])
    res = solve_exact(s)
    assert res.status == "optimal"
    assert res.allocation.tolist() == [[1]] and res.objective == 0.9


@pytest.mark.parametrize("seed", range(50))
def test_matches_brute_force(seed):
    s = small_scenario(seed)
    _, ref = brute_force_solve(s)
    res = solve_exact(s)
    assert res.status == "optimal"
    assert check_feasible(s, res.allocation).feasible
    assert res.objective == pytest.approx(evaluate(s, res.allocation), abs=0)
    assert res.objective == pytest.approx(ref, rel=1e-6, abs=1e-9)
    assert res.bound >= res.objective
    assert res.bound - res.objective <= 1e-6 * (1 + abs(res.objective))


def test_time_limit_returns_promptly():
    rng = np.random.default_rng(0)
    s = make_scenario(rng.uniform(size=(4, 12, 3)), rng.uniform(0, 5, (12, 2)), b=2, rho=0.1,
                      count_bounds=[(2, 6), (2, 6), (2, 6)])
    t0 = time.perf_counter()
    res = solve_exact(s, time_limit=0.5)
    assert time.perf_counter() - t0 < 5
    assert res.status in ("optimal", "time_limit", "no_incumbent")
    if res.allocation is not None:
        assert check_feasible(s, res.allocation).feasible
        assert res.bound >= res.objective - 1e-9


def test_too_large_reports_no_incumbent():
    s = make_scenario(np.ones((10, 289, 3)))
    res = solve_exact(s, time_limit=1)
    assert res.status == "no_incumbent" and res.allocation is None
    assert res.bound == pytest.approx(10 * 289)
