import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curbzone.model import (Allocation, InfeasibleError, ScenarioError, brute_force_solve,
                            build_distance_matrix, change_count, check_feasible, evaluate,
                            make_scenario, regularizer)

from factories import small_scenario
from oracles import evaluate_loops


def test_evaluate_single_cell():
    s = make_scenario([[[0.3, 0.9, 0.5]]])
    assert evaluate(s, Allocation([[1]])) == 0.9


def test_evaluate_regularizer_line():
    s = make_scenario(np.zeros((1, 3, 3)), [(0, 0), (1, 0), (2, 0)], rho=1.0)
    assert evaluate(s, Allocation([[0, 0, 1]])) == 2.0


@pytest.mark.parametrize("seed", range(10))
def test_evaluate_matches_loops(seed):
    s = small_scenario(seed, N=3, T=2, rho=0.7)
    plan = np.random.default_rng(seed).integers(0, 3, (2, 3))
    assert evaluate(s, Allocation(plan)) == pytest.approx(evaluate_loops(s, plan.tolist()), abs=1e-12)


def test_evaluate_dimension_mismatch():
    s = make_scenario(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        evaluate(s, Allocation([[0, 0]]))


def test_change_count_examples():
    assert change_count(Allocation([[0, 1, 2], [0, 1, 2]]), 0) == 0
    assert change_count(Allocation([[0, 0, 0], [1, 1, 1]]), 0) == 3
    a = Allocation([[0, 1], [0, 2]])
    assert change_count(a, 0) == 1
    u = a.one_hot(3)
    assert np.abs(u[1] - u[0]).sum() / 2 == 1
    with pytest.raises(IndexError):
        change_count(a, 1)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(2, 5), st.integers(2, 4), st.data())
def test_change_count_is_half_l1(N, T, M, data):
    plan = np.array(data.draw(st.lists(st.lists(st.integers(0, M - 1), min_size=N, max_size=N),
                                       min_size=T, max_size=T)))
    a = Allocation(plan)
    u = a.one_hot(M)
    assert Allocation.from_one_hot(u) == a
    for k in range(T - 1):
        c = change_count(a, k)
        assert 0 <= c <= N
        assert c == np.abs(u[k + 1] - u[k]).sum() // 2


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_regularizer_pairwise_identity(seed):
    rng = np.random.default_rng(seed)
    N, T = int(rng.integers(1, 6)), int(rng.integers(1, 4))
    s = make_scenario(rng.uniform(size=(T, N, 3)), rng.uniform(0, 5, (N, 2)), rho=1.0)
    plan = rng.integers(0, 3, (T, N))
    pair = sum(2 * s.A[j, jj] for k in range(T) for j in range(N) for jj in range(j + 1, N)
               if plan[k, j] == plan[k, jj])
    reg = regularizer(s, plan)
    assert reg >= 0
    assert reg == pytest.approx(pair, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_evaluate_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    N, T = int(rng.integers(1, 6)), int(rng.integers(1, 4))
    H = rng.uniform(size=(T, N, 3))
    xy = rng.uniform(0, 5, (N, 2))
    plan = rng.integers(0, 3, (T, N))
    perm = rng.permutation(N)
    s1 = make_scenario(H, xy)
    s2 = make_scenario(H[:, perm], xy[perm])
    assert evaluate(s1, Allocation(plan)) == pytest.approx(evaluate(s2, Allocation(plan[:, perm])), abs=1e-12)


def test_feasibility_reports():
    s = make_scenario(np.zeros((2, 2, 3)), b=0)
    rep = check_feasible(s, Allocation([[0, 1], [0, 2]]))
    assert not rep.change_ok and rep.counts_ok and rep.change_counts == [1]
    assert "timestep 0->1" in rep.violations[0]
    s = make_scenario(np.zeros((1, 3, 3)), count_bounds={"pp": (1, 3)})
    rep = check_feasible(s, Allocation([[1, 1, 1]]))
    assert not rep.counts_ok and rep.counts[0, 0] == 0
    assert "pp count 0" in rep.violations[0]


def test_scenario_invariants():
    with pytest.raises(ScenarioError, match="count_bounds.pp"):
        make_scenario(np.zeros((1, 2, 3)), count_bounds={"pp": (2, 1)})
    with pytest.raises(ScenarioError, match="lower bounds sum"):
        make_scenario(np.zeros((1, 2, 3)), count_bounds=[(1, 2), (1, 2), (1, 2)])
    with pytest.raises(ScenarioError, match="upper bounds sum"):
        make_scenario(np.zeros((1, 3, 3)), count_bounds=[(0, 1), (0, 1), (0, 0)])
    with pytest.raises(ScenarioError, match="finite"):
        make_scenario(np.full((1, 1, 3), np.nan))
    with pytest.raises(ScenarioError, match="two zone types"):
        make_scenario(np.zeros((1, 1, 1)))
    s = make_scenario(np.zeros((1, 1, 3)))
    assert not s.H.flags.writeable


def test_distance_matrix():
    assert build_distance_matrix([(0, 0), (3, 4)])[0, 1] == 5
    assert build_distance_matrix([(1, 1)]).shape == (1, 1)
    assert build_distance_matrix([(0, 0), (1, 2)], "manhattan")[0, 1] == 3
    with pytest.raises(ValueError):
        build_distance_matrix([(0, np.inf)])


def test_brute_force_examples():
    s = make_scenario([[[0.3, 0.9, 0.5]]], count_bounds=[(0, 1)] * 3)
    alloc, v = brute_force_solve(s)
    assert alloc.tolist() == [[1]] and v == 0.9

    s = make_scenario([[[1, 0, 0], [1, 0, 0]]], count_bounds={"pp": (0, 1)})
    alloc, v = brute_force_solve(s)
    # ties between cv and bus resolve to the lower index, then the lexicographic plan
    assert alloc.tolist() == [[0, 1]] and v == 1.0


def test_brute_force_fixture():
    s = small_scenario(2024, N=3, T=3, rho=0.1, b=1)
    alloc, v = brute_force_solve(s)
    assert alloc.tolist() == [[0, 1, 2], [0, 1, 2], [0, 1, 2]]
    assert v == pytest.approx(5.248104820634467, abs=1e-12)
    assert v == pytest.approx(evaluate_loops(s, alloc.tolist()), abs=1e-12)


def test_brute_force_dominates_random_feasible():
    for seed in range(10):
        s = small_scenario(seed)
        try:
            _, best = brute_force_solve(s)
        except InfeasibleError:
            continue
        rng = np.random.default_rng(seed)
        for _ in range(200):
            a = Allocation(rng.integers(0, 3, (s.T, s.N)))
            if check_feasible(s, a).feasible:
                assert evaluate(s, a) <= best + 1e-12


def test_brute_force_cap():
    with pytest.raises(ValueError, match="cap"):
        brute_force_solve(make_scenario(np.zeros((4, 4, 3))), cap=1000)


def test_brute_force_zero_budget_is_constant():
    s = small_scenario(5, N=2, T=3, b=0)
    alloc, _ = brute_force_solve(s)
    assert (alloc.plan == alloc.plan[0]).all()
