"""Two-stage knapsack with profit degradation under budgeted uncertainty.

First stage picks a subset of items to produce. Afterwards each item i may
lose up to ``p_hat[i]`` profit, scaled by a degradation factor ``xi[i]``, and
the total degradation mass is capped by ``gamma``. The second stage reacts
per produced item: keep it with the degraded profit, repair it at an extra
capacity cost ``t[i]`` to restore the full profit, or outsource it for a fee
``f[i]``. Everything here is expressed in minimization form, so reported
values are negated profits.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..milp import MilpModel, SolveConfig, Status, VarKind, solve_milp

CORRELATION_TAGS = ("UN", "WC", "ASC", "SC")

_FEAS_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class KnapsackInstance:
    """Immutable problem data; arrays are read-only float vectors."""

    name: str
    n: int
    p_bar: np.ndarray
    p_hat: np.ndarray
    f: np.ndarray
    c: np.ndarray
    t: np.ndarray
    capacity: float
    gamma: float
    tag: str
    seed: int = 0

    family = "knapsack"

    def __post_init__(self):
        for field in ("p_bar", "p_hat", "f", "c", "t"):
            arr = np.asarray(getattr(self, field), dtype=float)
            if arr.shape != (self.n,):
                raise ValueError(f"{field} must have length {self.n}")
            if np.any(arr < 0):
                raise ValueError(f"{field} must be nonnegative")
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)
        if not 0 <= self.gamma <= self.n:
            raise ValueError(f"gamma {self.gamma} outside [0, {self.n}]")
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.tag not in CORRELATION_TAGS:
            raise ValueError(f"unknown correlation tag {self.tag!r}")

    def to_dict(self):
        return {
            "family": self.family,
            "name": self.name,
            "n": self.n,
            "seed": self.seed,
            "tag": self.tag,
            "p_bar": self.p_bar.tolist(),
            "p_hat": self.p_hat.tolist(),
            "f": self.f.tolist(),
            "c": self.c.tolist(),
            "t": self.t.tolist(),
            "capacity": self.capacity,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            name=doc["name"],
            n=int(doc["n"]),
            p_bar=np.array(doc["p_bar"], dtype=float),
            p_hat=np.array(doc["p_hat"], dtype=float),
            f=np.array(doc["f"], dtype=float),
            c=np.array(doc["c"], dtype=float),
            t=np.array(doc["t"], dtype=float),
            capacity=float(doc["capacity"]),
            gamma=float(doc["gamma"]),
            tag=doc["tag"],
            seed=int(doc.get("seed", 0)),
        )


def generate_knapsack_instance(n, tag="UN", seed=0):
    """Draw an instance whose profit/weight relationship follows ``tag``.

    Weights are uniform integers in [1, 100]. UN draws profits independently,
    WC sets them to the weight plus small noise, ASC to weight + 50 with a
    little jitter, and SC to weight + 50 exactly. The remaining parameters
    are derived: deviations are half the profit, outsourcing costs 110% of
    the profit, repairs take half the weight, capacity is 35% of the total
    weight, and the degradation budget is 10% of the item count rounded up.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if tag not in CORRELATION_TAGS:
        raise ValueError(f"unknown correlation tag {tag!r}")
    rng = np.random.default_rng([seed, n, CORRELATION_TAGS.index(tag)])
    c = rng.integers(1, 101, size=n).astype(float)
    if tag == "UN":
        p_bar = rng.integers(1, 101, size=n).astype(float)
    elif tag == "WC":
        p_bar = np.maximum(1.0, c + rng.integers(-5, 6, size=n))
    elif tag == "ASC":
        p_bar = c + 50.0 + rng.integers(-2, 3, size=n)
    else:
        p_bar = c + 50.0
    p_hat = np.round(0.5 * p_bar)
    f = 1.1 * p_bar
    t = np.ceil(c / 2.0)
    capacity = max(1.0, float(round(0.35 * float(c.sum()))))
    gamma = float(math.ceil(0.1 * n))
    return KnapsackInstance(
        name=f"kp_{tag.lower()}_n{n}_s{seed}",
        n=n,
        p_bar=p_bar,
        p_hat=p_hat,
        f=f,
        c=c,
        t=t,
        capacity=capacity,
        gamma=gamma,
        tag=tag,
        seed=seed,
    )


def scenario_lo_hi(inst):
    return np.zeros(inst.n), np.ones(inst.n)


def check_scenario(inst, xi, tol=_FEAS_TOL):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (inst.n,):
        return False
    if np.any(xi < -tol) or np.any(xi > 1 + tol):
        return False
    return float(xi.sum()) <= inst.gamma + tol


def first_stage_term(inst, x):
    """The part of the objective fixed once x is chosen: sum (f - p_bar) x."""
    return float((inst.f - inst.p_bar) @ np.asarray(x, dtype=float))


def _recourse_options(inst, xi):
    """Per-item (gain, weight) for the two non-trivial reactions.

    Gains are relative to leaving the item outsourced, which contributes
    nothing to the inner objective. Producing saves the fee minus the
    realized degradation; producing and repairing saves the full fee.
    """
    gain_produce = inst.f - inst.p_hat * xi
    gain_repair = inst.f.copy()
    return gain_produce, gain_repair


def _integral_weights(inst):
    return (
        float(inst.capacity).is_integer()
        and np.all(np.mod(inst.c, 1.0) == 0)
        and np.all(np.mod(inst.t, 1.0) == 0)
    )


def _inner_min_dp(inst, active, xi):
    """Exact inner minimum by a capacity-indexed dynamic program.

    Requires integer weights. Returns the minimized second-stage objective,
    which equals minus the best achievable gain over the produced subset.
    """
    cap = int(round(inst.capacity))
    gain_produce, gain_repair = _recourse_options(inst, xi)
    dp = np.zeros(cap + 1)
    for i in active:
        w1 = int(round(inst.c[i]))
        w2 = w1 + int(round(inst.t[i]))
        cand = dp.copy()
        if w1 <= cap:
            np.maximum(cand[w1:], dp[: cap + 1 - w1] + gain_produce[i], out=cand[w1:])
        if w2 <= cap:
            np.maximum(cand[w2:], dp[: cap + 1 - w2] + gain_repair[i], out=cand[w2:])
        dp = cand
    return -float(dp[cap])


def _inner_min_milp(inst, active, xi, config=None):
    gain_produce, gain_repair = _recourse_options(inst, xi)
    m = MilpModel()
    y = {i: m.add_var(kind=VarKind.BINARY) for i in active}
    r = {i: m.add_var(kind=VarKind.BINARY) for i in active}
    m.add_constr(
        [(y[i], float(inst.c[i])) for i in active]
        + [(r[i], float(inst.t[i])) for i in active],
        "<=",
        inst.capacity,
    )
    for i in active:
        m.add_constr([(r[i], 1.0), (y[i], -1.0)], "<=", 0.0)
    m.set_objective(
        [(y[i], -float(gain_produce[i])) for i in active]
        + [(r[i], -float(gain_repair[i] - gain_produce[i])) for i in active]
    )
    res = solve_milp(m, config or SolveConfig())
    if res.status is not Status.OPTIMAL:
        raise RuntimeError(f"inner knapsack solve ended with status {res.status}")
    return float(res.objective)


def inner_argmin(inst, x, xi):
    """Inner minimum together with an attaining reaction (y, r).

    Uses the capacity dynamic program with choice traceback when the weights
    are integral, otherwise falls back to the mixed-integer solve.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    active = [i for i in range(inst.n) if x[i] > 0.5]
    y = np.zeros(inst.n)
    r = np.zeros(inst.n)
    if not active:
        return 0.0, y, r
    if not _integral_weights(inst):
        gain_produce, gain_repair = _recourse_options(inst, xi)
        m = MilpModel()
        yv = {i: m.add_var(kind=VarKind.BINARY) for i in active}
        rv = {i: m.add_var(kind=VarKind.BINARY) for i in active}
        m.add_constr(
            [(yv[i], float(inst.c[i])) for i in active]
            + [(rv[i], float(inst.t[i])) for i in active],
            "<=",
            inst.capacity,
        )
        for i in active:
            m.add_constr([(rv[i], 1.0), (yv[i], -1.0)], "<=", 0.0)
        m.set_objective(
            [(yv[i], -float(gain_produce[i])) for i in active]
            + [(rv[i], -float(gain_repair[i] - gain_produce[i])) for i in active]
        )
        res = solve_milp(m)
        if res.status is not Status.OPTIMAL:
            raise RuntimeError(f"inner knapsack solve ended with status {res.status}")
        for i in active:
            y[i] = round(res.x[yv[i]])
            r[i] = round(res.x[rv[i]])
        return float(res.objective), y, r
    cap = int(round(inst.capacity))
    gain_produce, gain_repair = _recourse_options(inst, xi)
    dp = np.zeros(cap + 1)
    choices = np.zeros((len(active), cap + 1), dtype=np.int8)
    for k, i in enumerate(active):
        w1 = int(round(inst.c[i]))
        w2 = w1 + int(round(inst.t[i]))
        cand = dp.copy()
        if w1 <= cap:
            take = dp[: cap + 1 - w1] + gain_produce[i]
            mask = take > cand[w1:]
            cand[w1:][mask] = take[mask]
            choices[k, w1:][mask] = 1
        if w2 <= cap:
            take = dp[: cap + 1 - w2] + gain_repair[i]
            mask = take > cand[w2:]
            cand[w2:][mask] = take[mask]
            choices[k, w2:][mask] = 2
        dp = cand
    w = cap
    for k in range(len(active) - 1, -1, -1):
        i = active[k]
        pick = choices[k, w]
        if pick == 1:
            y[i] = 1.0
            w -= int(round(inst.c[i]))
        elif pick == 2:
            y[i] = 1.0
            r[i] = 1.0
            w -= int(round(inst.c[i])) + int(round(inst.t[i]))
    return -float(dp[cap]), y, r


def second_stage_knapsack(inst, x, xi, target_mode="sum", force_milp=False):
    """Optimal second-stage reaction value for fixed (x, xi).

    ``sum`` mode includes the scenario-independent first-stage term,
    ``second_only`` reports just the inner minimum. Always feasible: doing
    nothing is allowed for every produced item.
    """
    x = np.asarray(x, dtype=float)
    active = [i for i in range(inst.n) if x[i] > 0.5]
    if not active:
        inner = 0.0
    elif _integral_weights(inst) and not force_milp:
        inner = _inner_min_dp(inst, active, np.asarray(xi, dtype=float))
    else:
        inner = _inner_min_milp(inst, active, np.asarray(xi, dtype=float))
    if target_mode == "sum":
        return first_stage_term(inst, x) + inner
    if target_mode == "second_only":
        return inner
    raise ValueError(f"unknown target mode {target_mode!r}")


def objective_range(inst, xi):
    """Interval containing sum-mode objective values over all (x, y, r)."""
    fp = inst.f - inst.p_bar
    dy = inst.p_hat * xi - inst.f
    dr = -inst.p_hat * xi
    lo = np.minimum(fp, 0).sum() + np.minimum(dy, 0).sum() + np.minimum(dr, 0).sum()
    hi = np.maximum(fp, 0).sum() + np.maximum(dy, 0).sum() + np.maximum(dr, 0).sum()
    return float(lo), float(hi)


def objective_coefficients(inst, xi):
    """Coefficient vectors (on x, y, r) of the sum-mode objective at xi."""
    return inst.f - inst.p_bar, inst.p_hat * xi - inst.f, -inst.p_hat * xi


def add_scenario_copy(m, inst, x_vars, xi, mu_var):
    """Add one recourse copy for xi and an epigraph row bounding mu_var.

    Used by the pool-based exact loop: mu >= objective(x, y_xi, r_xi).
    """
    n = inst.n
    y = [m.add_var(kind=VarKind.BINARY) for _ in range(n)]
    r = [m.add_var(kind=VarKind.BINARY) for _ in range(n)]
    m.add_constr(
        [(y[i], float(inst.c[i])) for i in range(n)]
        + [(r[i], float(inst.t[i])) for i in range(n)],
        "<=",
        inst.capacity,
    )
    for i in range(n):
        m.add_constr([(r[i], 1.0), (y[i], -1.0)], "<=", 0.0)
        m.add_constr([(y[i], 1.0), (x_vars[i], -1.0)], "<=", 0.0)
    cx, cy, cr = objective_coefficients(inst, xi)
    terms = [(mu_var, 1.0)]
    terms += [(x_vars[i], -float(cx[i])) for i in range(n)]
    terms += [(y[i], -float(cy[i])) for i in range(n)]
    terms += [(r[i], -float(cr[i])) for i in range(n)]
    m.add_constr(terms, ">=", 0.0)
    return y, r


def add_selected_recourse(m, inst, x_vars, pool, z_vars, epi_var):
    """Shared recourse block for the selector formulation.

    One (y, r) copy serves whichever pool scenario the selector marks. The
    capacity and linking rows are scenario independent here, so only the
    objective needs per-scenario treatment: for each pool member j an
    epigraph row  epi >= obj_j(x, y, r) - M_j (1 - z_j)  is added, with M_j
    wide enough that unselected rows never bind.
    """
    n = inst.n
    y = [m.add_var(kind=VarKind.BINARY) for _ in range(n)]
    r = [m.add_var(kind=VarKind.BINARY) for _ in range(n)]
    m.add_constr(
        [(y[i], float(inst.c[i])) for i in range(n)]
        + [(r[i], float(inst.t[i])) for i in range(n)],
        "<=",
        inst.capacity,
    )
    for i in range(n):
        m.add_constr([(r[i], 1.0), (y[i], -1.0)], "<=", 0.0)
        m.add_constr([(y[i], 1.0), (x_vars[i], -1.0)], "<=", 0.0)
    ranges = [objective_range(inst, xi) for xi in pool]
    glob_lo = min(lo for lo, _ in ranges)
    glob_hi = max(hi for _, hi in ranges)
    for j, xi in enumerate(pool):
        cx, cy, cr = objective_coefficients(inst, xi)
        big_m = ranges[j][1] - glob_lo
        terms = [(epi_var, 1.0), (z_vars[j], -big_m)]
        terms += [(x_vars[i], -float(cx[i])) for i in range(n)]
        terms += [(y[i], -float(cy[i])) for i in range(n)]
        terms += [(r[i], -float(cr[i])) for i in range(n)]
        m.add_constr(terms, ">=", -big_m)
    m.lb[epi_var] = glob_lo
    m.ub[epi_var] = glob_hi
    return y, r


def knapsack_first_stage_features(inst, x):
    """Per-item feature rows describing a first-stage decision, width 8."""
    x = np.asarray(x, dtype=float)
    cap = np.full(inst.n, inst.capacity)
    return np.column_stack(
        [x, inst.f, inst.p_bar, inst.p_hat, inst.p_hat, inst.c, inst.t, cap]
    )


def knapsack_scenario_features(inst, xi):
    """Per-item scenario rows, width 8; includes the realized degradation."""
    xi = np.asarray(xi, dtype=float)
    cap = np.full(inst.n, inst.capacity)
    return np.column_stack(
        [xi, inst.f, inst.p_bar, inst.p_hat, inst.p_hat * xi, inst.c, inst.t, cap]
    )


def knapsack_feature_maps(inst):
    """Affine maps xi -> scenario feature row, one (matrix, offset) per item."""
    maps = []
    for i in range(inst.n):
        mat = np.zeros((8, inst.n))
        mat[0, i] = 1.0
        mat[4, i] = float(inst.p_hat[i])
        off = np.array(
            [
                0.0,
                inst.f[i],
                inst.p_bar[i],
                inst.p_hat[i],
                0.0,
                inst.c[i],
                inst.t[i],
                inst.capacity,
            ]
        )
        maps.append((mat, off))
    return maps
