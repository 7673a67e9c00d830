"""Capital budgeting with uncertain project costs and profits.

A company invests in projects before or after observing a four-dimensional
risk factor drawn from the box [-1, 1]^4. Costs and profits move with the
risk factor through per-project sensitivity rows. Late investments earn only
a fraction eta of the profit. The internal convention is minimization, so
the revenue objective is negated on the way in and callers negate once more
when reporting.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from ..milp import MilpModel, SolveConfig, Status, VarKind, solve_milp

_FEAS_TOL = 1e-9

RISK_DIM = 4


@dataclasses.dataclass(frozen=True)
class CapitalBudgetingInstance:
    name: str
    n: int
    c_bar: np.ndarray
    r_bar: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    budget: float
    eta: float
    seed: int = 0

    family = "capital"

    def __post_init__(self):
        for field in ("c_bar", "r_bar"):
            arr = np.asarray(getattr(self, field), dtype=float)
            if arr.shape != (self.n,):
                raise ValueError(f"{field} must have length {self.n}")
            if np.any(arr < 0):
                raise ValueError(f"{field} must be nonnegative")
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)
        for field in ("phi", "psi"):
            mat = np.asarray(getattr(self, field), dtype=float)
            if mat.shape != (self.n, RISK_DIM):
                raise ValueError(f"{field} must be {self.n} x {RISK_DIM}")
            if np.any(np.abs(mat).sum(axis=1) > 2.0 + 1e-9):
                raise ValueError(f"{field} rows too large: realized costs could go negative")
            mat.setflags(write=False)
            object.__setattr__(self, field, mat)
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie strictly between 0 and 1")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")

    def to_dict(self):
        return {
            "family": self.family,
            "name": self.name,
            "n": self.n,
            "seed": self.seed,
            "c_bar": self.c_bar.tolist(),
            "r_bar": self.r_bar.tolist(),
            "phi": self.phi.tolist(),
            "psi": self.psi.tolist(),
            "budget": self.budget,
            "eta": self.eta,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            name=doc["name"],
            n=int(doc["n"]),
            c_bar=np.array(doc["c_bar"], dtype=float),
            r_bar=np.array(doc["r_bar"], dtype=float),
            phi=np.array(doc["phi"], dtype=float),
            psi=np.array(doc["psi"], dtype=float),
            budget=float(doc["budget"]),
            eta=float(doc["eta"]),
            seed=int(doc.get("seed", 0)),
        )


def generate_cb_instance(n, seed=0):
    """Nominal costs uniform on [1, 10], profits a fifth of the cost.

    Sensitivity rows are uniform on the probability simplex, so each row sums
    to one and realized costs stay within [c/2, 3c/2] over the risk box. The
    budget is half the total nominal cost, which binds for any n of interest.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng([seed, n, 977])
    c_bar = rng.uniform(1.0, 10.0, size=n)
    r_bar = c_bar / 5.0
    phi = rng.dirichlet(np.ones(RISK_DIM), size=n)
    psi = rng.dirichlet(np.ones(RISK_DIM), size=n)
    return CapitalBudgetingInstance(
        name=f"cb_n{n}_s{seed}",
        n=n,
        c_bar=c_bar,
        r_bar=r_bar,
        phi=phi,
        psi=psi,
        budget=float(c_bar.sum()) / 2.0,
        eta=0.8,
        seed=seed,
    )


def scenario_lo_hi(inst):
    return -np.ones(RISK_DIM), np.ones(RISK_DIM)


def check_scenario(inst, xi, tol=_FEAS_TOL):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (RISK_DIM,):
        return False
    return bool(np.all(xi >= -1 - tol) and np.all(xi <= 1 + tol))


def realized_costs(inst, xi):
    return (1.0 + inst.phi @ np.asarray(xi, dtype=float) / 2.0) * inst.c_bar


def realized_profits(inst, xi):
    return (1.0 + inst.psi @ np.asarray(xi, dtype=float) / 2.0) * inst.r_bar


def cb_feasibility_scenario(inst, x, tol=_FEAS_TOL):
    """Scenario maximizing the realized cost of x, or None if x stays affordable.

    The cost of a fixed x is linear in the risk factor, so the box maximum is
    attained at the componentwise sign of the gradient and has the closed
    form  c_bar' x + sum_d |w_d| / 2  with  w = phi' (c_bar * x).
    """
    x = np.asarray(x, dtype=float)
    w = inst.phi.T @ (inst.c_bar * x)
    worst_cost = float(inst.c_bar @ x) + float(np.abs(w).sum()) / 2.0
    if worst_cost <= inst.budget + tol:
        return None
    return np.sign(w)


def first_stage_term(inst, x, xi):
    """Negated revenue of the first-stage picks under scenario xi."""
    return -float(realized_profits(inst, xi) @ np.asarray(x, dtype=float))


def second_stage_capital(inst, x, xi, target_mode="sum", config=None):
    """Best second-stage investment value, or None when x itself busts the budget.

    Solves the remaining-budget selection problem over the projects x left
    untouched, in minimization form.
    """
    x = np.asarray(x, dtype=float)
    cost = realized_costs(inst, xi)
    prof = realized_profits(inst, xi)
    spent = float(cost @ x)
    if spent > inst.budget + _FEAS_TOL:
        return None
    remaining = max(0.0, inst.budget - spent)
    free = [i for i in range(inst.n) if x[i] < 0.5]
    inner = 0.0
    if free:
        m = MilpModel()
        y = {i: m.add_var(kind=VarKind.BINARY) for i in free}
        m.add_constr([(y[i], float(cost[i])) for i in free], "<=", remaining)
        m.set_objective([(y[i], -inst.eta * float(prof[i])) for i in free])
        res = solve_milp(m, config or SolveConfig())
        if res.status is not Status.OPTIMAL:
            raise RuntimeError(f"inner budgeting solve ended with status {res.status}")
        inner = float(res.objective)
    if target_mode == "sum":
        return first_stage_term(inst, x, xi) + inner
    if target_mode == "second_only":
        return inner
    raise ValueError(f"unknown target mode {target_mode!r}")


def objective_range(inst, xi):
    """Interval containing sum-mode objective values over all (x, y)."""
    prof = realized_profits(inst, xi)
    lo = -float(prof.sum())
    return lo, 0.0


def add_selected_recourse(m, inst, x_vars, pool, z_vars, epi_var):
    """Selector-conditional recourse block for the budgeting problem.

    The budget row depends on the scenario, so each pool member gets a
    relaxed copy  cost_j' (x + y) <= B + M_j (1 - z_j)  that binds only when
    selected. Every pool member additionally contributes an unconditional
    first-stage cut  cost_j' x <= B: any x feasible for the full problem
    affords its first-stage picks under every scenario, and these cuts are
    what price out decisions caught by the affordability check.
    """
    n = inst.n
    y = [m.add_var(kind=VarKind.BINARY) for _ in range(n)]
    for i in range(n):
        m.add_constr([(x_vars[i], 1.0), (y[i], 1.0)], "<=", 1.0)
    ranges = [objective_range(inst, xi) for xi in pool]
    glob_lo = min(lo for lo, _ in ranges)
    glob_hi = max(hi for _, hi in ranges)
    for j, xi in enumerate(pool):
        cost = realized_costs(inst, xi)
        prof = realized_profits(inst, xi)
        slack = max(0.0, float(cost.sum()) - inst.budget)
        m.add_constr(
            [(x_vars[i], float(cost[i])) for i in range(n)]
            + [(y[i], float(cost[i])) for i in range(n)]
            + [(z_vars[j], slack)],
            "<=",
            inst.budget + slack,
        )
        m.add_constr([(x_vars[i], float(cost[i])) for i in range(n)], "<=", inst.budget)
        big_m = ranges[j][1] - glob_lo
        terms = [(epi_var, 1.0), (z_vars[j], -big_m)]
        terms += [(x_vars[i], float(prof[i])) for i in range(n)]
        terms += [(y[i], inst.eta * float(prof[i])) for i in range(n)]
        m.add_constr(terms, ">=", -big_m)
    m.lb[epi_var] = glob_lo
    m.ub[epi_var] = glob_hi
    return y


def cb_first_stage_features(inst, x):
    """Per-project first-stage rows, width 3."""
    x = np.asarray(x, dtype=float)
    return np.column_stack([x, inst.r_bar, inst.c_bar])


def cb_scenario_features(inst, xi):
    """Per-project scenario rows, width 4: realized multipliers plus nominals."""
    xi = np.asarray(xi, dtype=float)
    return np.column_stack(
        [
            1.0 + inst.phi @ xi / 2.0,
            1.0 + inst.psi @ xi / 2.0,
            inst.r_bar,
            inst.c_bar,
        ]
    )


def cb_feature_maps(inst):
    """Affine maps xi -> scenario feature row, one (matrix, offset) per project."""
    maps = []
    for i in range(inst.n):
        mat = np.zeros((4, RISK_DIM))
        mat[0] = inst.phi[i] / 2.0
        mat[1] = inst.psi[i] / 2.0
        off = np.array([1.0, 1.0, inst.r_bar[i], inst.c_bar[i]])
        maps.append((mat, off))
    return maps
