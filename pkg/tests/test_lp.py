import numpy as np
import pytest

from vr3c.errors import InvalidParameter, NumericalBreakdown
from vr3c.lp import LinearProgram, LpStatus, WarmStart, check_certificate, solve_lp

from conftest import random_program
from oracles import lp_vertex_minimum


def test_simple_knapsack_relaxation():
    # max 3x + 2y s.t. x + y <= 1.5, box [0, 1]
    res = solve_lp(LinearProgram([-3, -2], [[1, 1]], [1.5]))
    assert res.status is LpStatus.OPTIMAL
    assert res.x.tolist() == [1.0, 0.5]
    assert res.objective == pytest.approx(-4.0)
    assert res.y_ub[0] == pytest.approx(-2.0)
    assert res.relative_gap <= 1e-12


def test_equality_rows():
    lp = LinearProgram([1, 2, 3], A_eq=[[1, 1, 1]], b_eq=[2])
    res = solve_lp(lp)
    assert res.x.tolist() == [1.0, 1.0, 0.0]
    assert check_certificate(lp, res)["ok"]


def test_infeasible():
    res = solve_lp(LinearProgram([1, 1], A_eq=[[1, 1]], b_eq=[3]))
    assert res.status is LpStatus.INFEASIBLE
    res = solve_lp(LinearProgram([1], [[-1]], [-2]))
    assert res.status is LpStatus.INFEASIBLE


def test_unbounded_with_infinite_upper():
    res = solve_lp(LinearProgram([-1, 0], [[1, -1]], [0], upper=[np.inf, np.inf]))
    assert res.status is LpStatus.UNBOUNDED


def test_empty_program():
    res = solve_lp(LinearProgram(np.zeros(0)))
    assert res.status is LpStatus.OPTIMAL and res.objective == 0.0


def test_bad_shapes_rejected():
    with pytest.raises(InvalidParameter):
        LinearProgram([1, 2], [[1, 2, 3]], [1])
    with pytest.raises(InvalidParameter):
        LinearProgram([1, 2], upper=[1, -1])
    with pytest.raises(InvalidParameter):
        LinearProgram([np.nan, 1])


def test_iteration_cap():
    lp = LinearProgram(-np.ones(6), [np.ones(6)], [3.5])
    with pytest.raises(NumericalBreakdown):
        solve_lp(lp, max_iter=1)


def test_badly_scaled_rows():
    # budgets in the units the solver really sees: joules around 1e1, bits around 1e8
    c = -np.array([5e7, 5e7, 2e7, 0.0, 3e7, 3e7, 1e7, 0.0])
    A_ub = np.array([[2e7, 1e7, 0, 0, 4e7, 2e7, 0, 0], [0, 12.5, 12.5, 0, 0, 7.0, 7.0, 0]])
    b_ub = np.array([3e7, 10.0])
    A_eq = np.kron(np.eye(2), np.ones(4))
    lp = LinearProgram(c, A_ub, b_ub, A_eq, np.ones(2))
    res = solve_lp(lp)
    val, _ = lp_vertex_minimum(c, A_ub, b_ub, A_eq, np.ones(2), np.ones(8))
    assert res.objective == pytest.approx(val, rel=1e-12)
    assert check_certificate(lp, res)["ok"]


def test_random_programs_match_vertex_enumeration():
    rng = np.random.default_rng(100)
    for _ in range(150):
        c, A_ub, b_ub, A_eq, b_eq, upper = random_program(rng)
        lp = LinearProgram(c, A_ub, b_ub, A_eq, b_eq, upper)
        val, _ = lp_vertex_minimum(c, A_ub, b_ub, A_eq, b_eq, upper)
        res = solve_lp(lp)
        if val is None:
            assert res.status is LpStatus.INFEASIBLE
            continue
        assert res.status is LpStatus.OPTIMAL
        assert abs(res.objective - val) <= 1e-9
        assert check_certificate(lp, res)["ok"]


def test_warm_start_gives_same_optimum():
    rng = np.random.default_rng(7)
    n = 12
    A_ub = np.vstack([rng.uniform(0, 2, 4 * n), rng.uniform(0, 1, 4 * n)])
    b_ub = np.array([n * 0.6, n * 0.4])
    A_eq = np.kron(np.eye(n), np.ones(4))
    start = None
    for _ in range(5):
        c = rng.normal(size=4 * n)
        lp = LinearProgram(c, A_ub, b_ub, A_eq, np.ones(n))
        cold = solve_lp(lp)
        warm = solve_lp(lp, warm_start=start) if start is not None else cold
        assert warm.objective == pytest.approx(cold.objective, rel=1e-12, abs=1e-12)
        assert check_certificate(lp, warm)["ok"]
        start = warm.info["next_start"]
        assert start is not None


def test_unusable_warm_start_falls_back():
    lp = LinearProgram([-3, -2], [[1, 1]], [1.5])
    for start in (WarmStart(np.array([5]), np.zeros(3, bool)),          # out of range
                  WarmStart(np.array([0, 1]), np.zeros(3, bool)),       # wrong length
                  WarmStart(np.array([0]), np.array([False, True, False]))):  # infeasible (x0 = 0.5?)
        res = solve_lp(lp, warm_start=start)
        assert res.status is LpStatus.OPTIMAL
        assert res.objective == pytest.approx(-4.0)
