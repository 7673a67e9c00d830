"""Branch-and-bound for mixed-integer linear programs.

Every node relaxation continues on the live simplex tableau of the
previously solved one, so the expensive basis refactorization happens only
on drift control and numerical repair.  The search plunges: after
branching, the child on the rounding side of the fractional value is
solved immediately, while the sibling goes to a best-bound heap priced at
the parent bound and is solved only if it ever gets popped.  Branching
picks the most fractional integer variable, ties break on the smallest
index, and node order is deterministic for a given model.
"""

import heapq
import time

import numpy as np

from ccgkit.milp.model import MilpModel, SolveConfig, SolveResult, Status
from ccgkit.milp.simplex import solve_lp_arrays


def solve_milp(
    model: MilpModel,
    config: SolveConfig | None = None,
    warm_solution=None,
) -> SolveResult:
    config = config or SolveConfig()
    t0 = time.perf_counter()
    c, const, A, senses, b, lo, hi = model.dense_arrays()
    sign = 1.0 if model.sense == "min" else -1.0
    cmin = sign * c
    int_idx = model.integer_indices()
    n = model.num_vars
    prio = None
    if model.branch_priority and int_idx.size:
        prio = np.array(
            [model.branch_priority.get(int(j), 0) for j in int_idx], dtype=np.int64
        )

    def finish(status, x, obj_min, bound_min, nodes, pivots):
        wall = time.perf_counter() - t0
        obj = None if obj_min is None else sign * obj_min + const
        bnd = None if bound_min is None else sign * bound_min + const
        return SolveResult(status, x, obj, bnd, nodes, pivots, wall)

    pivots = 0
    nodes = 0
    live = None  # (basis, vstat, tab, rhs0, since_refresh) of the last solve

    def run_lp(nlo, nhi):
        nonlocal pivots, nodes, live
        st = solve_lp_arrays(cmin, A, senses, b, nlo, nhi, config, warm=live)
        pivots += st.pivots
        nodes += 1
        live = None if st.tab is None else (st.basis, st.vstat, st.tab, st.rhs0, st.since_refresh)
        if st.status not in (Status.OPTIMAL, Status.INFEASIBLE, Status.UNBOUNDED):
            # numerical trouble on the warm path: retry once from scratch
            live = None
            st = solve_lp_arrays(cmin, A, senses, b, nlo, nhi, config)
            pivots += st.pivots
            live = None if st.tab is None else (st.basis, st.vstat, st.tab, st.rhs0, st.since_refresh)
        return st

    root = run_lp(lo, hi)
    if root.status is Status.INFEASIBLE:
        return finish(Status.INFEASIBLE, None, None, None, nodes, pivots)
    if root.status is Status.UNBOUNDED:
        return finish(Status.UNBOUNDED, None, None, None, nodes, pivots)
    if root.status is not Status.OPTIMAL:
        return finish(Status.UNSTABLE, None, None, None, nodes, pivots)

    incumbent = None
    incumbent_obj = np.inf
    last_improve = t0

    def node_fractional(x):
        """Branching variable, or -1 if the point is integral.

        Most fractional wins; with priorities set, only the highest level
        that still has a fractional variable competes.
        """
        if int_idx.size == 0:
            return -1
        xs = x[int_idx]
        frac = np.abs(xs - np.round(xs))  # distance to nearest integer, in [0, 0.5]
        live = frac > config.int_tol
        if not live.any():
            return -1
        if prio is not None:
            live &= prio == prio[live].max()
        j = int(np.argmax(np.where(live, frac, -1.0)))
        return int(int_idx[j])

    def accept_incumbent(x_full):
        nonlocal incumbent, incumbent_obj, last_improve
        x = x_full[:n].copy()
        if int_idx.size:
            x[int_idx] = np.round(x[int_idx])
            np.clip(x, lo, hi, out=x)
        obj = float(cmin @ x)
        if obj < incumbent_obj - 1e-12:
            incumbent = x
            incumbent_obj = obj
            last_improve = time.perf_counter()

    def pruned(bound):
        if incumbent is None:
            return False
        gap_abs = config.gap_tol * max(1.0, abs(incumbent_obj))
        return bound >= incumbent_obj - gap_abs

    if warm_solution is not None:
        w = np.asarray(warm_solution, dtype=float)
        ok = (
            w.shape == (n,)
            and np.all(w >= lo - config.feas_tol)
            and np.all(w <= hi + config.feas_tol)
            and (
                int_idx.size == 0
                or np.max(np.abs(w[int_idx] - np.round(w[int_idx]))) <= config.int_tol
            )
        )
        if ok:
            act = A @ w
            slack = config.feas_tol * (1.0 + np.abs(b))
            for row, sense in enumerate(senses):
                if sense == "<=" and act[row] > b[row] + slack[row]:
                    ok = False
                elif sense == ">=" and act[row] < b[row] - slack[row]:
                    ok = False
                elif sense == "=" and abs(act[row] - b[row]) > slack[row]:
                    ok = False
                if not ok:
                    break
        # a valid warm point becomes the incumbent before the search starts,
        # so bound pruning bites from the first node
        if ok:
            accept_incumbent(w)

    # heap of unsolved nodes (parent bound, tie, lo, hi); ``cur`` is the
    # solved node being plunged, (bound, lo, hi, x)
    tie = 0
    heap = []
    cur = (root.objective, lo, hi, root.x)
    status_on_limit = None

    while cur is not None or heap:
        now = time.perf_counter()
        if now - t0 > config.time_limit:
            status_on_limit = "time"
            break
        if incumbent is not None and now - last_improve > config.no_improve_limit:
            status_on_limit = "stall"
            break
        if nodes >= config.node_limit:
            status_on_limit = "nodes"
            break

        if cur is None:
            est, _, nlo, nhi = heapq.heappop(heap)
            if pruned(est):
                # best-bound order: every remaining node is at least as bad
                heap.clear()
                break
            st = run_lp(nlo, nhi)
            if st.status is Status.INFEASIBLE:
                continue
            if st.status is not Status.OPTIMAL:
                return finish(Status.UNSTABLE, None, None, None, nodes, pivots)
            if pruned(st.objective):
                continue
            cur = (st.objective, nlo, nhi, st.x)
            continue

        bound, nlo, nhi, x = cur
        cur = None
        if pruned(bound):
            continue
        branch_j = node_fractional(x)
        if branch_j < 0:
            accept_incumbent(x)
            continue
        xj = x[branch_j]
        # plunge toward the rounding side, defer the other child
        down_first = (xj - np.floor(xj)) <= 0.5
        for first in (True, False):
            clo = nlo.copy()
            chi = nhi.copy()
            if first == down_first:
                chi[branch_j] = np.floor(xj)
            else:
                clo[branch_j] = np.ceil(xj)
            if clo[branch_j] > chi[branch_j]:
                continue
            if first:
                st = run_lp(clo, chi)
                if st.status is Status.INFEASIBLE:
                    continue
                if st.status is not Status.OPTIMAL:
                    return finish(Status.UNSTABLE, None, None, None, nodes, pivots)
                if pruned(st.objective):
                    continue
                if node_fractional(st.x) < 0:
                    accept_incumbent(st.x)
                    continue
                cur = (st.objective, clo, chi, st.x)
            else:
                tie += 1
                heapq.heappush(heap, (bound, tie, clo, chi))

    if status_on_limit is None:
        # tree exhausted or bound-pruned: incumbent is optimal if it exists
        if incumbent is None:
            return finish(Status.INFEASIBLE, None, None, None, nodes, pivots)
        return finish(Status.OPTIMAL, incumbent, incumbent_obj, incumbent_obj, nodes, pivots)

    open_bounds = [h[0] for h in heap]
    if cur is not None:
        open_bounds.append(cur[0])
    if incumbent is None:
        return finish(Status.LIMIT_NO_INCUMBENT, None, None, None, nodes, pivots)
    bound_min = min(open_bounds) if open_bounds else incumbent_obj
    bound_min = min(bound_min, incumbent_obj)
    return finish(Status.FEASIBLE, incumbent, incumbent_obj, bound_min, nodes, pivots)
