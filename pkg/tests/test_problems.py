"""Benchmark family checks backed by brute-force enumeration oracles."""

import itertools

import numpy as np
import pytest

from ccgkit.problems import (
    CapitalBudgetingInstance,
    KnapsackInstance,
    cb_feasibility_scenario,
    centroid_scenario,
    first_stage_feature_rows,
    first_stage_features,
    generate_cb_instance,
    generate_knapsack_instance,
    load_instance,
    realized_costs,
    realized_profits,
    save_instance,
    scenario_bounds,
    scenario_budget_row,
    scenario_dim,
    scenario_feature_maps,
    scenario_features,
    second_stage_value,
    validate_scenario,
)
from ccgkit.problems.knapsack import (
    first_stage_term,
    objective_coefficients,
    objective_range,
    second_stage_knapsack,
)


def kp_inner_by_enumeration(inst, x, xi):
    """Oracle: try every (y, r) pair, keep the feasible minimum."""
    best = np.inf
    for y in itertools.product([0, 1], repeat=inst.n):
        if any(y[i] > x[i] for i in range(inst.n)):
            continue
        for r in itertools.product([0, 1], repeat=inst.n):
            if any(r[i] > y[i] for i in range(inst.n)):
                continue
            load = sum(inst.c[i] * y[i] + inst.t[i] * r[i] for i in range(inst.n))
            if load > inst.capacity + 1e-9:
                continue
            val = sum(
                (inst.p_hat[i] * xi[i] - inst.f[i]) * y[i]
                - inst.p_hat[i] * xi[i] * r[i]
                for i in range(inst.n)
            )
            best = min(best, val)
    return best


def cb_inner_by_enumeration(inst, x, xi):
    """Oracle: enumerate second-stage picks; None when x busts the budget."""
    cost = realized_costs(inst, xi)
    prof = realized_profits(inst, xi)
    spent = float(cost @ x)
    if spent > inst.budget + 1e-9:
        return None
    best = 0.0
    free = [i for i in range(inst.n) if x[i] < 0.5]
    for sub in itertools.chain.from_iterable(
        itertools.combinations(free, k) for k in range(len(free) + 1)
    ):
        extra = sum(cost[i] for i in sub)
        if spent + extra > inst.budget + 1e-9:
            continue
        best = min(best, -inst.eta * sum(prof[i] for i in sub))
    return best


def running_example():
    return KnapsackInstance(
        name="running",
        n=2,
        p_bar=np.array([10.0, 8.0]),
        p_hat=np.array([4.0, 4.0]),
        f=np.array([5.0, 5.0]),
        c=np.array([3.0, 2.0]),
        t=np.array([1.0, 1.0]),
        capacity=4.0,
        gamma=1.0,
        tag="UN",
        seed=0,
    )


class TestKnapsackSecondStage:
    def test_running_example_value(self):
        inst = running_example()
        val = second_stage_value(inst, [1, 1], [1.0, 0.0], "sum")
        assert val == pytest.approx(-13.0, abs=1e-9)

    def test_empty_first_stage_is_zero(self):
        inst = generate_knapsack_instance(6, "UN", seed=3)
        xi = np.full(6, 0.5)
        assert second_stage_value(inst, np.zeros(6), xi, "sum") == pytest.approx(0.0)
        assert second_stage_value(inst, np.zeros(6), xi, "second_only") == 0.0

    def test_dp_matches_milp_and_enumeration(self):
        rng = np.random.default_rng(11)
        for seed in range(8):
            inst = generate_knapsack_instance(6, "UN", seed=seed)
            x = (rng.random(6) < 0.7).astype(float)
            xi = rng.uniform(0, 1, size=6)
            dp_val = second_stage_knapsack(inst, x, xi, "sum")
            milp_val = second_stage_knapsack(inst, x, xi, "sum", force_milp=True)
            oracle = kp_inner_by_enumeration(inst, x, xi) + first_stage_term(inst, x)
            assert dp_val == pytest.approx(milp_val, abs=1e-7)
            assert dp_val == pytest.approx(oracle, abs=1e-7)

    def test_sum_minus_second_only_is_first_stage_term(self):
        rng = np.random.default_rng(4)
        inst = generate_knapsack_instance(8, "WC", seed=2)
        for _ in range(5):
            x = (rng.random(8) < 0.5).astype(float)
            xi = rng.uniform(0, 1, size=8)
            s = second_stage_value(inst, x, xi, "sum")
            t = second_stage_value(inst, x, xi, "second_only")
            assert s - t == pytest.approx(first_stage_term(inst, x), abs=1e-9)

    def test_objective_range_contains_samples(self):
        rng = np.random.default_rng(5)
        inst = generate_knapsack_instance(5, "ASC", seed=1)
        xi = rng.uniform(0, 1, size=5)
        lo, hi = objective_range(inst, xi)
        cx, cy, cr = objective_coefficients(inst, xi)
        for _ in range(50):
            x = rng.integers(0, 2, size=5)
            y = np.minimum(x, rng.integers(0, 2, size=5))
            r = np.minimum(y, rng.integers(0, 2, size=5))
            val = cx @ x + cy @ y + cr @ r
            assert lo - 1e-9 <= val <= hi + 1e-9


class TestKnapsackGenerator:
    def test_deterministic(self):
        a = generate_knapsack_instance(12, "WC", seed=9)
        b = generate_knapsack_instance(12, "WC", seed=9)
        assert a.to_dict() == b.to_dict()

    def test_sc_offset_constant(self):
        inst = generate_knapsack_instance(30, "SC", seed=0)
        diffs = inst.p_bar - inst.c
        assert np.all(diffs == diffs[0])

    def test_wc_correlation_high(self):
        inst = generate_knapsack_instance(80, "WC", seed=1)
        corr = np.corrcoef(inst.p_bar, inst.c)[0, 1]
        assert corr >= 0.9

    def test_budget_and_capacity_positive(self):
        for n in (1, 5, 20):
            inst = generate_knapsack_instance(n, "UN", seed=0)
            assert inst.capacity > 0
            assert 0 <= inst.gamma <= n

    def test_roundtrip_serialization(self, tmp_path):
        inst = generate_knapsack_instance(7, "ASC", seed=4)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        back = load_instance(path)
        assert isinstance(back, KnapsackInstance)
        assert back.to_dict() == inst.to_dict()


class TestCapitalBudgeting:
    def test_nominal_scenario_costs(self):
        inst = generate_cb_instance(10, seed=2)
        np.testing.assert_allclose(realized_costs(inst, np.zeros(4)), inst.c_bar)
        np.testing.assert_allclose(realized_profits(inst, np.zeros(4)), inst.r_bar)

    def test_realized_cost_range_from_unit_rows(self):
        inst = generate_cb_instance(6, seed=1)
        worst = realized_costs(inst, np.sign(inst.phi[0]) * 0)  # placeholder
        # row sums are 1, so extremes over the box are c/2 and 3c/2
        hi = realized_costs(inst, np.ones(4))
        lo = realized_costs(inst, -np.ones(4))
        np.testing.assert_allclose(hi, 1.5 * inst.c_bar, atol=1e-9)
        np.testing.assert_allclose(lo, 0.5 * inst.c_bar, atol=1e-9)
        assert worst.shape == (6,)

    def test_budget_binds_across_seeds(self):
        for seed in range(50):
            inst = generate_cb_instance(10, seed=seed)
            worst_total = float(realized_costs(inst, np.ones(4)).sum())
            assert inst.budget < worst_total

    def test_second_stage_matches_enumeration(self):
        rng = np.random.default_rng(7)
        for seed in range(6):
            inst = generate_cb_instance(7, seed=seed)
            x = (rng.random(7) < 0.4).astype(float)
            xi = rng.uniform(-1, 1, size=4)
            got = second_stage_value(inst, x, xi, "sum")
            inner = cb_inner_by_enumeration(inst, x, xi)
            if inner is None:
                assert got is None
            else:
                want = inner - float(realized_profits(inst, xi) @ x)
                assert got == pytest.approx(want, abs=1e-7)

    def test_infeasible_marker_fires(self):
        inst = generate_cb_instance(8, seed=3)
        x = np.ones(8)
        xi = np.ones(4)  # max-cost scenario; budget is half the nominal total
        assert second_stage_value(inst, x, xi, "sum") is None

    def test_single_project_nominal_value(self):
        inst = CapitalBudgetingInstance(
            name="tiny",
            n=1,
            c_bar=np.array([3.0]),
            r_bar=np.array([2.0]),
            phi=np.zeros((1, 4)),
            psi=np.zeros((1, 4)),
            budget=3.0,
            eta=0.8,
        )
        val = second_stage_value(inst, np.array([1.0]), np.zeros(4), "sum")
        assert val == pytest.approx(-2.0)

    def test_feasibility_scenario_closed_form_vs_lp(self):
        pytest.importorskip("scipy")
        from scipy.optimize import linprog

        rng = np.random.default_rng(12)
        hits = 0
        for seed in range(20):
            inst = generate_cb_instance(9, seed=seed)
            order = rng.permutation(9)
            x = np.zeros(9)
            for i in order:  # fill until close to the budget
                if inst.c_bar @ x + inst.c_bar[i] <= 1.15 * inst.budget:
                    x[i] = 1.0
            w = inst.phi.T @ (inst.c_bar * x)
            res = linprog(
                c=-w / 2.0, bounds=[(-1, 1)] * 4, method="highs"
            )
            lp_max = float(inst.c_bar @ x) - res.fun
            closed = float(inst.c_bar @ x) + float(np.abs(w).sum()) / 2.0
            assert closed == pytest.approx(lp_max, abs=1e-8)
            scen = cb_feasibility_scenario(inst, x)
            if closed > inst.budget + 1e-9:
                hits += 1
                assert scen is not None
                got = float(realized_costs(inst, scen) @ x)
                assert got == pytest.approx(closed, abs=1e-8)
            else:
                assert scen is None
        assert hits >= 1

    def test_feasibility_scenario_trivial_cases(self):
        inst = generate_cb_instance(5, seed=0)
        assert cb_feasibility_scenario(inst, np.zeros(5)) is None

    def test_roundtrip_serialization(self, tmp_path):
        inst = generate_cb_instance(6, seed=8)
        path = tmp_path / "cb.json"
        save_instance(inst, path)
        back = load_instance(path)
        assert isinstance(back, CapitalBudgetingInstance)
        assert back.to_dict() == inst.to_dict()


class TestFeaturesAndScenarios:
    def test_feature_widths(self):
        kp = generate_knapsack_instance(5, "UN", seed=0)
        cb = generate_cb_instance(5, seed=0)
        assert first_stage_features(kp, np.zeros(5)).shape == (5, 8)
        assert scenario_features(kp, np.zeros(5)).shape == (5, 8)
        assert first_stage_features(cb, np.zeros(5)).shape == (5, 3)
        assert scenario_features(cb, np.zeros(4)).shape == (5, 4)

    def test_identical_items_share_rows(self):
        inst = KnapsackInstance(
            name="twins",
            n=2,
            p_bar=np.array([6.0, 6.0]),
            p_hat=np.array([3.0, 3.0]),
            f=np.array([6.6, 6.6]),
            c=np.array([4.0, 4.0]),
            t=np.array([2.0, 2.0]),
            capacity=5.0,
            gamma=1.0,
            tag="UN",
        )
        rows = first_stage_features(inst, np.array([1.0, 1.0]))
        np.testing.assert_array_equal(rows[0], rows[1])

    def test_feature_maps_reproduce_rows(self):
        rng = np.random.default_rng(3)
        for inst in (
            generate_knapsack_instance(6, "WC", seed=5),
            generate_cb_instance(6, seed=5),
        ):
            q = scenario_dim(inst)
            lo, hi = scenario_bounds(inst)
            xi = rng.uniform(lo, hi)
            want = scenario_features(inst, xi)
            maps = scenario_feature_maps(inst)
            got = np.stack([mat @ xi + off for mat, off in maps])
            np.testing.assert_allclose(got, want, atol=1e-12)
            assert len(maps) == inst.n and maps[0][0].shape == (want.shape[1], q)

    def test_rows_at_fixed_bit(self):
        inst = generate_cb_instance(4, seed=1)
        rows = first_stage_feature_rows(inst, 1)
        np.testing.assert_allclose(rows[:, 0], 1.0)

    def test_scenario_validation(self):
        kp = generate_knapsack_instance(4, "UN", seed=0)
        cb = generate_cb_instance(4, seed=0)
        assert validate_scenario(kp, centroid_scenario(kp))
        assert validate_scenario(cb, np.array([1.0, -1.0, 0.0, 0.5]))
        assert not validate_scenario(cb, np.array([1.2, 0.0, 0.0, 0.0]))
        too_heavy = np.ones(4)
        assert (float(too_heavy.sum()) <= kp.gamma) == validate_scenario(kp, too_heavy)
        row = scenario_budget_row(kp)
        assert row is not None and row[1] == kp.gamma
        assert scenario_budget_row(cb) is None
