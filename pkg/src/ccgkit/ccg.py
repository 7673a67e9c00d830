"""Scenario-generation loops: the exact pool method and its learned variant.

Both loops alternate a main problem over a finite scenario pool with an
adversarial search for a scenario that breaks the current decision. The
exact loop certifies bounds by enumerating the first-stage cube against
the pool.
The learned loop replaces both sides with a trained value model: the main
problem embeds one network copy per pool scenario and picks the predicted
worst through a selector, and the adversarial problem maximizes the
embedded network over the uncertainty set.
"""

from __future__ import annotations

import dataclasses
import itertools
import time

import numpy as np

from .embed import (
    embed_argmax,
    embed_first_stage_path,
    embed_scenario_path,
    embed_value_head,
)
from .evalbench import evaluate_exact_objective_uncertainty
from .milp import (
    INF,
    MilpModel,
    SolveConfig,
    Status,
    VarKind,
    solve_lp,
    solve_milp,
    tighten_var_bounds,
)
from .nn.layers import encode_set, run_layers
from .problems import (
    centroid_scenario,
    first_stage_feature_rows,
    first_stage_features,
    scenario_bounds,
    scenario_budget_row,
    scenario_feature_maps,
    scenario_features,
)
from .problems.base import second_stage_value
from .problems import capital as _capital
from .problems import knapsack as _knapsack
from .problems.capital import CapitalBudgetingInstance, cb_feasibility_scenario
from .problems.knapsack import KnapsackInstance


class CcgError(RuntimeError):
    pass


class ScenarioPool:
    """Ordered scenario collection with tolerance-based deduplication."""

    def __init__(self, tol=1e-9):
        self.tol = tol
        self.scenarios = []

    def add(self, xi):
        xi = np.asarray(xi, dtype=float)
        for known in self.scenarios:
            if np.max(np.abs(known - xi)) <= self.tol:
                return False
        self.scenarios.append(xi)
        return True

    def __len__(self):
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)


@dataclasses.dataclass
class MlCcgConfig:
    epsilon: float = 1e-3
    max_iterations: int = 50
    mp_mode: str = "argmax"
    ap_mode: str = "milp"
    ap_samples: int = 1000
    ap_warm_samples: int = 128
    ap_tighten_time: float = 20.0
    time_limit: float = 600.0
    solve: SolveConfig = dataclasses.field(default_factory=SolveConfig)
    seed: int = 0
    ap_on_feasibility_cut: bool = False
    dedup_tol: float = 1e-9

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.mp_mode not in ("argmax", "max"):
            raise ValueError(f"unknown main-problem mode {self.mp_mode!r}")
        if self.ap_mode not in ("milp", "sampling", "lp-relax"):
            raise ValueError(f"unknown adversarial mode {self.ap_mode!r}")
        if self.ap_mode == "sampling" and self.ap_samples < 1:
            raise ValueError("sampling mode needs at least one sample")


@dataclasses.dataclass
class CcgResult:
    x: np.ndarray
    objective: float
    pool: list
    iterations: list
    termination: str
    wall_time: float
    lower_bounds: list | None = None
    upper_bounds: list | None = None


@dataclasses.dataclass
class MpSolution:
    x: np.ndarray
    objective: float
    status: Status
    selected_index: int | None = None
    selected_scenario: np.ndarray | None = None


@dataclasses.dataclass
class ApSolution:
    scenario: np.ndarray
    value: float
    proven: bool


def pool_predictions(model, inst, x, scenarios):
    """Scaled predictions for one decision against many scenarios."""
    x_rows = model.x_scaler.transform(first_stage_features(inst, x))
    ex = encode_set(model.x_encoder, x_rows)
    batch = np.stack([scenario_features(inst, xi) for xi in scenarios])
    es = encode_set(model.xi_encoder, model.xi_scaler.transform(batch))
    h = np.concatenate([np.tile(ex, (len(scenarios), 1)), es], axis=1)
    return run_layers(model.value_net, h)[:, 0]


def termination_check(pool_best, ap_value, epsilon):
    """True when the adversarial value still improves on the pool by epsilon."""
    return ap_value >= pool_best + epsilon


def _round_binary(res, var_ids):
    return np.array([float(round(res.x[v])) for v in var_ids])


def _embed_predictions(m, inst, model, x_vars, pool):
    """One value-network copy per pool scenario, sharing the decision path.

    Returns the prediction terms and their global lower/upper bounds.
    """
    rows0 = first_stage_feature_rows(inst, 0)
    rows1 = first_stage_feature_rows(inst, 1)
    x_terms, x_net = embed_first_stage_path(m, model, rows0, rows1, x_vars)
    x_lo = x_net.bounds.output_lo
    x_hi = x_net.bounds.output_hi
    p_terms = []
    lo = INF
    hi = -INF
    for j, xi in enumerate(pool):
        emb = encode_set(
            model.xi_encoder,
            model.xi_scaler.transform(scenario_features(inst, xi)),
        )
        head = embed_value_head(
            m, model, x_terms, x_lo, x_hi, emb, "scenario", prefix=f"val{j}"
        )
        p_terms.append(head.output_terms[0])
        lo = min(lo, float(head.bounds.output_lo[0]))
        hi = max(hi, float(head.bounds.output_hi[0]))
    return p_terms, lo, hi


def solve_main_argmax(inst, model, pool, solve_config=None):
    """Main problem that prices the decision at its predicted-worst scenario.

    The model contains true recourse variables and constraints; predictions
    only steer which pool scenario the epigraph binds through the selector.
    """
    scenarios = list(pool)
    if not scenarios:
        raise CcgError("scenario pool is empty")
    m = MilpModel()
    x_vars = [m.add_var(kind=VarKind.BINARY, name=f"x{i}") for i in range(inst.n)]
    p_terms, lo, hi = _embed_predictions(m, inst, model, x_vars, scenarios)
    gadget = embed_argmax(m, p_terms, scenarios, lo, hi)
    epi = m.add_var(-INF, INF, name="worst_obj")
    if isinstance(inst, KnapsackInstance):
        _knapsack.add_selected_recourse(m, inst, x_vars, scenarios, gadget.z_vars, epi)
    else:
        _capital.add_selected_recourse(m, inst, x_vars, scenarios, gadget.z_vars, epi)
    m.set_objective([(epi, 1.0)])
    res = solve_milp(m, solve_config or SolveConfig())
    if res.status is Status.INFEASIBLE:
        return MpSolution(x=np.zeros(inst.n), objective=INF, status=res.status)
    if res.status not in (Status.OPTIMAL, Status.FEASIBLE):
        raise CcgError(f"main problem ended with status {res.status}")
    x = _round_binary(res, x_vars)
    z = [res.x[v] for v in gadget.z_vars]
    j = int(np.argmax(z))
    return MpSolution(
        x=x,
        objective=res.objective,
        status=res.status,
        selected_index=j,
        selected_scenario=scenarios[j],
    )


def solve_main_max(inst, model, pool, solve_config=None):
    """Ablation main problem: minimize the largest prediction over the pool.

    No true recourse block; the objective is the envelope of the embedded
    predictions, reported in original label units.
    """
    scenarios = list(pool)
    if not scenarios:
        raise CcgError("scenario pool is empty")
    m = MilpModel()
    x_vars = [m.add_var(kind=VarKind.BINARY, name=f"x{i}") for i in range(inst.n)]
    p_terms, lo, hi = _embed_predictions(m, inst, model, x_vars, scenarios)
    alpha = m.add_var(lo, hi, name="envelope")
    for term in p_terms:
        kind, val = term
        if kind == "const":
            m.add_constr([(alpha, 1.0)], ">=", float(val))
        else:
            m.add_constr([(alpha, 1.0), (val, -1.0)], ">=", 0.0)
    if isinstance(inst, CapitalBudgetingInstance):
        for xi in scenarios:
            cost = _capital.realized_costs(inst, xi)
            m.add_constr(
                [(x_vars[i], float(cost[i])) for i in range(inst.n)],
                "<=",
                inst.budget,
            )
    m.set_objective([(alpha, 1.0)])
    res = solve_milp(m, solve_config or SolveConfig())
    if res.status is Status.INFEASIBLE:
        return MpSolution(x=np.zeros(inst.n), objective=INF, status=res.status)
    if res.status not in (Status.OPTIMAL, Status.FEASIBLE):
        raise CcgError(f"main problem ended with status {res.status}")
    x = _round_binary(res, x_vars)
    value = float(model.label_scaler.inverse(res.objective))
    return MpSolution(x=x, objective=value, status=res.status)


def _project_scenario(inst, xi):
    lo, hi = scenario_bounds(inst)
    xi = np.clip(np.asarray(xi, dtype=float), lo, hi)
    row = scenario_budget_row(inst)
    if row is not None:
        weights, cap = row
        mass = float(weights @ xi)
        if mass > cap and mass > 0:
            xi = xi * (cap / mass)
    return xi


def _ap_embed(inst, model, x, clips=None, head_clips=None):
    m = MilpModel()
    lo, hi = scenario_bounds(inst)
    xi_vars = [m.add_var(float(lo[d]), float(hi[d]), name=f"xi{d}") for d in range(len(lo))]
    row = scenario_budget_row(inst)
    budget_cap = None
    if row is not None:
        weights, cap = row
        m.add_constr([(v, float(w)) for v, w in zip(xi_vars, weights)], "<=", cap)
        if np.all(weights == 1.0) and np.all(lo == 0.0) and np.all(hi == 1.0):
            budget_cap = cap
    s_terms, info = embed_scenario_path(
        m, model, scenario_feature_maps(inst), xi_vars, lo, hi, budget_cap=budget_cap, clips=clips
    )
    post = info["post_net"]
    x_emb = encode_set(
        model.x_encoder, model.x_scaler.transform(first_stage_features(inst, x))
    )
    head = embed_value_head(
        m,
        model,
        s_terms,
        post.bounds.output_lo,
        post.bounds.output_hi,
        x_emb,
        "first_stage",
        pre_clips=head_clips,
    )
    kind, out = head.output_terms[0]
    if kind == "const":
        m.set_objective([], constant=float(out), sense="max")
    else:
        m.set_objective([(out, 1.0)], sense="max")
    return m, xi_vars, head.output_terms[0], info, head, budget_cap


def _clips_from(net, tightened):
    """Per-layer clip arrays for rebuilding a net after bound tightening."""
    out = []
    touched = False
    for (zlo, zhi), pv in zip(net.bounds.pre, net.pre_vars):
        clo, chi = zlo.copy(), zhi.copy()
        hit = False
        for i, v in enumerate(pv):
            if v is not None and v in tightened:
                clo[i], chi[i] = tightened[v]
                hit = True
        out.append((clo, chi) if hit else None)
        touched = touched or hit
    return out if touched else None


def _build_ap_model(inst, model, x, tighten_time=0.0):
    """Adversarial model over scenario variables, optionally tightened.

    With a positive ``tighten_time`` the embedding is built twice: the first
    pass exists only to run LP bound tightening on every pre-activation
    variable, the second rebuilds the encoding from the tightened ranges,
    which shrinks the big-M rows and usually fixes the sign of many more
    neurons.
    """
    m, xi_vars, out_term, info, head, budget_cap = _ap_embed(inst, model, x)
    if tighten_time <= 0.0 or out_term[0] == "const":
        return m, xi_vars, out_term
    first = 1 if budget_cap is not None else 0
    targets = []
    for net in info["element_nets"]:
        for pv in net.pre_vars[first:]:
            targets.extend(v for v in pv if v is not None)
    for pv in info["post_net"].pre_vars:
        targets.extend(v for v in pv if v is not None)
    for pv in head.pre_vars[:-1]:
        targets.extend(v for v in pv if v is not None)
    tightened = tighten_var_bounds(m, targets, time_limit=tighten_time) if targets else {}
    if not tightened:
        return m, xi_vars, out_term
    clips = {}
    for ei, net in enumerate(info["element_nets"]):
        c = _clips_from(net, tightened)
        if c is not None:
            clips[f"e{ei}"] = c
    c = _clips_from(info["post_net"], tightened)
    if c is not None:
        clips["post"] = c
    head_clips = _clips_from(head, tightened)
    m2, xi_vars2, out2, _, _, _ = _ap_embed(inst, model, x, clips=clips, head_clips=head_clips)
    return m2, xi_vars2, out2


def _warm_scenario(inst, model, x, config, rng, candidates):
    """Best scenario among random draws and supplied candidates.

    Serves as the fallback when the exact solve hits a limit and as the
    baseline the returned value can never fall below.
    """
    pool = [centroid_scenario(inst)]
    if candidates:
        pool.extend(np.asarray(c, dtype=float) for c in candidates)
    for _ in range(config.ap_warm_samples):
        pool.append(sample_scenario_for(inst, rng))
    vals = pool_predictions(model, inst, x, pool)
    j = int(np.argmax(vals))
    return pool[j], float(vals[j])


def sample_scenario_for(inst, rng):
    from .datagen import sample_scenario

    return sample_scenario(inst, rng)


def solve_adversarial(inst, model, x, config=None, rng=None, candidates=None):
    """Find the scenario with the highest predicted value at the decision x.

    Mode milp maximizes the embedded network exactly; sampling takes the
    best of uniform draws; lp-relax solves the continuous relaxation of the
    same model. All modes report the forward-pass prediction at the
    returned scenario, so heuristic modes never overstate their find.
    """
    config = config or MlCcgConfig()
    if rng is None:
        rng = np.random.default_rng([config.seed, 211])
    if config.ap_mode == "sampling":
        draws = [sample_scenario_for(inst, rng) for _ in range(config.ap_samples)]
        vals = pool_predictions(model, inst, x, draws)
        j = int(np.argmax(vals))
        return ApSolution(scenario=draws[j], value=float(vals[j]), proven=False)
    if config.ap_mode == "lp-relax":
        m, xi_vars, out_term = _build_ap_model(inst, model, x)
        res = solve_lp(m, config.solve)
        if res.status is not Status.OPTIMAL:
            raise CcgError(f"adversarial relaxation ended with status {res.status}")
        xi = _project_scenario(inst, np.array([res.x[v] for v in xi_vars]))
        value = float(pool_predictions(model, inst, x, [xi])[0])
        return ApSolution(scenario=xi, value=value, proven=False)
    warm_xi, warm_val = _warm_scenario(inst, model, x, config, rng, candidates)
    m, xi_vars, out_term = _build_ap_model(inst, model, x, tighten_time=config.ap_tighten_time)
    res = solve_milp(m, config.solve)
    if res.status not in (Status.OPTIMAL, Status.FEASIBLE):
        return ApSolution(scenario=warm_xi, value=warm_val, proven=False)
    xi = _project_scenario(inst, np.array([res.x[v] for v in xi_vars]))
    value = float(pool_predictions(model, inst, x, [xi])[0])
    if warm_val - value > 1e-9:
        # projection after solver tolerances genuinely lost value; the warm
        # scenario is the better answer but carries no optimality proof
        return ApSolution(scenario=warm_xi, value=warm_val, proven=False)
    return ApSolution(scenario=xi, value=value, proven=res.status is Status.OPTIMAL)


def ml_ccg(inst, model, config=None):
    """Learned scenario-generation loop.

    Each iteration solves the main problem over the pool, checks budget
    feasibility of the decision first (budgeting family), then asks the
    adversarial problem for a scenario whose prediction beats the pool's
    best by the accuracy margin. The loop stops when no such scenario
    exists, or at the iteration or time budget.
    """
    config = config or MlCcgConfig()
    rng = np.random.default_rng([config.seed, 211])
    pool = ScenarioPool(config.dedup_tol)
    pool.add(centroid_scenario(inst))
    solve_main = solve_main_argmax if config.mp_mode == "argmax" else solve_main_max
    iterations = []
    termination = "max-iterations"
    x_star = np.zeros(inst.n)
    objective = INF
    t0 = time.perf_counter()
    for it in range(1, config.max_iterations + 1):
        if time.perf_counter() - t0 > config.time_limit:
            termination = "time-limit"
            break
        t_it = time.perf_counter()
        mp = solve_main(inst, model, pool, config.solve)
        if mp.status is Status.INFEASIBLE:
            raise CcgError("main problem infeasible; pool cuts exclude every decision")
        x_star = mp.x
        objective = mp.objective
        record = {
            "iteration": it,
            "mp_objective": mp.objective,
            "mp_status": mp.status.name,
            "x": x_star.tolist(),
            "pool_size": len(pool),
            "ap_value": None,
            "pool_best": None,
            "action": "",
        }
        if isinstance(inst, CapitalBudgetingInstance):
            feas = cb_feasibility_scenario(inst, x_star)
            if feas is not None and pool.add(feas):
                record["action"] = "feasibility-scenario"
                if not config.ap_on_feasibility_cut:
                    record["wall_ms"] = _elapsed_ms(t_it)
                    iterations.append(record)
                    continue
        ap = solve_adversarial(inst, model, x_star, config, rng=rng, candidates=list(pool))
        pool_best = float(np.max(pool_predictions(model, inst, x_star, list(pool))))
        record["ap_value"] = ap.value
        record["pool_best"] = pool_best
        if termination_check(pool_best, ap.value, config.epsilon):
            if pool.add(ap.scenario):
                record["action"] = (record["action"] + "+adversarial-scenario").lstrip("+")
                record["wall_ms"] = _elapsed_ms(t_it)
                iterations.append(record)
                continue
            record["action"] = (record["action"] + "+duplicate-scenario").lstrip("+")
        record["action"] = (record["action"] + "+converged").lstrip("+")
        record["wall_ms"] = _elapsed_ms(t_it)
        iterations.append(record)
        termination = "epsilon-converged"
        break
    return CcgResult(
        x=x_star,
        objective=objective,
        pool=list(pool),
        iterations=iterations,
        termination=termination,
        wall_time=time.perf_counter() - t0,
    )


def _elapsed_ms(t0):
    return 1000.0 * (time.perf_counter() - t0)


def classical_ccg(
    inst,
    tol=1e-6,
    max_iterations=100,
    time_limit=600.0,
):
    """Exact scenario-generation loop for the objective-uncertainty family.

    Maintains a sandwich: the pool main problem lower-bounds the optimum,
    the exact evaluation of each incumbent upper-bounds it, and the loop
    stops when the gap closes to ``tol``.

    The pool main problem enumerates the first-stage cube and keeps a
    running per-decision maximum over pool scenarios, so an iteration pays
    one inner solve per decision for the newly added scenario only. The
    scenario-copy formulation of the same problem stalls already at tiny
    sizes because the relaxation of every recourse copy undercuts the
    epigraph variable, which makes enumeration the honest exact tool at
    the sizes this loop is meant to certify.
    """
    if not isinstance(inst, KnapsackInstance):
        raise CcgError(
            "the exact loop needs objective uncertainty; integer recourse under "
            "constraint uncertainty has no tractable adversarial solve here"
        )
    if inst.n > 12:
        raise CcgError("the exact loop enumerates the first stage and is limited to n <= 12")
    pool = ScenarioPool()
    pool.add(centroid_scenario(inst))
    xs = np.array(list(itertools.product((0.0, 1.0), repeat=inst.n)))
    pool_max = np.full(len(xs), -INF)
    fresh = [centroid_scenario(inst)]
    lb, ub = -INF, INF
    lb_trace, ub_trace, iterations = [], [], []
    best_x = np.zeros(inst.n)
    termination = "max-iterations"
    t0 = time.perf_counter()
    for it in range(1, max_iterations + 1):
        if time.perf_counter() - t0 > time_limit:
            termination = "time-limit"
            break
        t_it = time.perf_counter()
        for xi in fresh:
            for idx in range(len(xs)):
                q = second_stage_value(inst, xs[idx], xi, "sum")
                if q > pool_max[idx]:
                    pool_max[idx] = q
        fresh = []
        best_idx = int(np.argmin(pool_max))
        lb = max(lb, float(pool_max[best_idx]))
        x_cur = xs[best_idx]
        val, xi_star = evaluate_exact_objective_uncertainty(inst, x_cur, tol=tol * 0.1)
        if val < ub:
            ub = val
            best_x = x_cur
        lb_trace.append(lb)
        ub_trace.append(ub)
        record = {
            "iteration": it,
            "lower_bound": lb,
            "upper_bound": ub,
            "pool_size": len(pool),
            "x": x_cur.tolist(),
            "action": "",
            "wall_ms": _elapsed_ms(t_it),
        }
        if ub - lb <= tol:
            record["action"] = "converged"
            iterations.append(record)
            termination = "epsilon-converged"
            break
        if not pool.add(xi_star):
            record["action"] = "stalled"
            iterations.append(record)
            termination = "stalled"
            break
        fresh.append(xi_star)
        record["action"] = "adversarial-scenario"
        iterations.append(record)
    return CcgResult(
        x=best_x,
        objective=ub,
        pool=list(pool),
        iterations=iterations,
        termination=termination,
        wall_time=time.perf_counter() - t0,
        lower_bounds=lb_trace,
        upper_bounds=ub_trace,
    )
