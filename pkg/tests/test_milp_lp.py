"""LP solver checks against vertex enumeration and an independent library."""

import numpy as np
import pytest
import scipy.optimize

from ccgkit.milp import MilpModel, SolveConfig, Status, solve_lp
from ccgkit.milp.simplex import solve_lp_arrays

from oracles import lp_by_vertex_enumeration


def test_two_variable_textbook_lp():
    """max 3a + 2b s.t. a + b <= 4, a + 3b <= 6, a,b >= 0.

    Vertices: (0,0), (4,0), (3,1), (0,2).  Objective values 0, 12, 11, 4,
    so the optimum is 12 at (4, 0).
    """
    m = MilpModel()
    a = m.add_var(0.0)
    bb = m.add_var(0.0)
    m.add_constr([(a, 1.0), (bb, 1.0)], "<=", 4.0)
    m.add_constr([(a, 1.0), (bb, 3.0)], "<=", 6.0)
    m.set_objective([(a, 3.0), (bb, 2.0)], sense="max")
    res = solve_lp(m)
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(12.0, abs=1e-9)
    assert res.x == pytest.approx([4.0, 0.0], abs=1e-9)


def test_equality_and_free_variable():
    """min y s.t. y = 2x - 3, 0 <= x <= 5, y free: optimum y = -3 at x = 0."""
    m = MilpModel()
    x = m.add_var(0.0, 5.0)
    y = m.add_var(-np.inf, np.inf)
    m.add_constr([(y, 1.0), (x, -2.0)], "=", -3.0)
    m.set_objective([(y, 1.0)])
    res = solve_lp(m)
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(-3.0, abs=1e-9)


def test_unbounded_detected_with_ray():
    m = MilpModel()
    x = m.add_var(0.0)
    m.set_objective([(x, 1.0)], sense="max")
    res = solve_lp(m)
    assert res.status is Status.UNBOUNDED
    assert res.ray is not None and res.ray[0] > 0


def test_infeasible_bound_contradiction():
    """x <= 1 and x >= 2 cannot hold together."""
    m = MilpModel()
    x = m.add_var(0.0, 10.0)
    m.add_constr([(x, 1.0)], "<=", 1.0)
    m.add_constr([(x, 1.0)], ">=", 2.0)
    m.set_objective([(x, 1.0)])
    res = solve_lp(m)
    assert res.status is Status.INFEASIBLE


def test_degenerate_lp_finishes():
    """Many redundant constraints through one vertex must not cycle."""
    m = MilpModel()
    xs = m.add_vars(3, lb=0.0)
    for k in range(8):
        coefs = [(xs[j], 1.0 + (k * (j + 1)) % 3) for j in range(3)]
        m.add_constr(coefs, "<=", 0.0)
    m.set_objective([(xs[0], -1.0), (xs[1], -1.0), (xs[2], -1.0)])
    res = solve_lp(m)
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(0.0, abs=1e-9)


def _random_lp(rng, n=5, m=5):
    A = rng.uniform(-2.0, 2.0, size=(m, n))
    b = rng.uniform(0.5, 3.0, size=m)
    c = rng.uniform(-1.5, 1.5, size=n)
    senses = ["<="] * m
    lo = np.zeros(n)
    hi = np.full(n, 4.0)
    return c, A, senses, b, lo, hi


def test_random_dense_lps_against_vertex_enumeration():
    """20 random 5x5 LPs agree with basis enumeration within 1e-6."""
    rng = np.random.default_rng(20240817)
    cfg = SolveConfig()
    for trial in range(20):
        c, A, senses, b, lo, hi = _random_lp(rng)
        st = solve_lp_arrays(c, A, senses, b, lo, hi, cfg)
        status, x_ref, obj_ref = lp_by_vertex_enumeration(c, A, senses, b, lo, hi)
        assert status == "optimal"
        assert st.status is Status.OPTIMAL, f"trial {trial}"
        assert st.objective == pytest.approx(obj_ref, abs=1e-6), f"trial {trial}"


def test_random_lps_with_mixed_senses_against_scipy():
    rng = np.random.default_rng(7)
    cfg = SolveConfig()
    for trial in range(30):
        n, m = 6, 7
        A = rng.uniform(-2.0, 2.0, size=(m, n))
        b = rng.uniform(-1.0, 3.0, size=m)
        c = rng.uniform(-1.5, 1.5, size=n)
        senses = [rng.choice(["<=", ">=", "="]) for _ in range(m)]
        lo = np.full(n, -3.0)
        hi = np.full(n, 5.0)
        st = solve_lp_arrays(c, A, senses, b, lo, hi, cfg)

        a_ub, b_ub, a_eq, b_eq = [], [], [], []
        for i, s in enumerate(senses):
            if s == "<=":
                a_ub.append(A[i]); b_ub.append(b[i])
            elif s == ">=":
                a_ub.append(-A[i]); b_ub.append(-b[i])
            else:
                a_eq.append(A[i]); b_eq.append(b[i])
        ref = scipy.optimize.linprog(
            c,
            A_ub=np.array(a_ub) if a_ub else None,
            b_ub=np.array(b_ub) if b_ub else None,
            A_eq=np.array(a_eq) if a_eq else None,
            b_eq=np.array(b_eq) if b_eq else None,
            bounds=list(zip(lo, hi)),
            method="highs",
        )
        if ref.status == 2:
            assert st.status is Status.INFEASIBLE, f"trial {trial}"
        else:
            assert ref.status == 0
            assert st.status is Status.OPTIMAL, f"trial {trial}"
            assert st.objective == pytest.approx(ref.fun, abs=1e-6), f"trial {trial}"


def test_fixed_variables_respected():
    m = MilpModel()
    x = m.add_var(2.0, 2.0)
    y = m.add_var(0.0, 10.0)
    m.add_constr([(x, 1.0), (y, 1.0)], "<=", 5.0)
    m.set_objective([(y, -1.0)])
    res = solve_lp(m)
    assert res.status is Status.OPTIMAL
    assert res.x == pytest.approx([2.0, 3.0], abs=1e-9)


def test_warm_start_matches_cold_solution():
    rng = np.random.default_rng(99)
    cfg = SolveConfig()
    c, A, senses, b, lo, hi = _random_lp(rng)
    cold = solve_lp_arrays(c, A, senses, b, lo, hi, cfg)
    assert cold.status is Status.OPTIMAL
    hi2 = hi.copy()
    hi2[0] = 0.5
    warm = solve_lp_arrays(c, A, senses, b, lo, hi2, cfg, warm=(cold.basis, cold.vstat))
    cold2 = solve_lp_arrays(c, A, senses, b, lo, hi2, cfg)
    assert warm.status is cold2.status
    if warm.status is Status.OPTIMAL:
        assert warm.objective == pytest.approx(cold2.objective, abs=1e-8)
