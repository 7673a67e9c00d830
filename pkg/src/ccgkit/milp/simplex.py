"""Dense bounded-variable simplex.

The solver works on the row form ``A x (<=,=,>=) b`` with per-variable bounds
that may be infinite on either side.  Each row receives a slack variable whose
bounds encode the sense, which gives the fixed working matrix ``W = [A | I]``.
A composite phase 1 drives bound violations of the basic variables to zero by
minimizing the total infeasibility, after which phase 2 prices the true
objective; both phases share one pivot routine.  Pricing is steepest reduced
cost (Dantzig) and falls back to Bland's least-index rule after a run of
degenerate pivots, which is what guarantees a finite pivot count.

The tableau ``B^-1 W`` is kept dense and refreshed from scratch periodically
to keep the accumulated floating point drift below the feasibility tolerance.
"""

import time
from dataclasses import dataclass

import numpy as np

from ccgkit.milp.model import INF, MilpModel, SolveConfig, SolveResult, Status

# nonbasic-at-lower / nonbasic-at-upper / nonbasic-free (value 0) / basic
AT_LOWER, AT_UPPER, AT_FREE, BASIC = 0, 1, 2, 3

_PIVOT_TOL = 1e-9
_ZERO_TOL = 1e-11
_DEGEN_RUN = 80
_REFRESH_EVERY = 300


@dataclass
class LpState:
    """Internal LP outcome carrying warm-start information.

    ``tab``/``rhs0`` expose the live tableau for the returned basis so a
    follow-up solve over the same matrix can continue without a fresh
    factorization; ``since_refresh`` counts pivots since the tableau was
    last rebuilt, so drift control carries across solves.
    """

    status: Status
    x: np.ndarray | None          # full vector including slacks
    objective: float | None
    pivots: int
    basis: np.ndarray | None
    vstat: np.ndarray | None
    ray: np.ndarray | None = None
    tab: np.ndarray | None = None
    rhs0: np.ndarray | None = None
    since_refresh: int = 0


def solve_lp(model: MilpModel, config: SolveConfig | None = None) -> SolveResult:
    """Solve the continuous relaxation of ``model`` (integrality dropped)."""
    config = config or SolveConfig()
    c, const, A, senses, b, lo, hi = model.dense_arrays()
    t0 = time.perf_counter()
    sign = 1.0 if model.sense == "min" else -1.0
    st = solve_lp_arrays(sign * c, A, senses, b, lo, hi, config)
    wall = time.perf_counter() - t0
    n = model.num_vars
    if st.status is Status.OPTIMAL:
        x = st.x[:n].copy()
        obj = sign * st.objective + const
        return SolveResult(Status.OPTIMAL, x, obj, obj, 0, st.pivots, wall)
    ray = st.ray[:n].copy() if st.ray is not None else None
    return SolveResult(st.status, None, None, None, 0, st.pivots, wall, ray=ray)


def solve_lp_arrays(
    c: np.ndarray,
    A: np.ndarray,
    senses,
    b: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    config: SolveConfig,
    warm: tuple[np.ndarray, np.ndarray] | None = None,
) -> LpState:
    """Minimize ``c @ x`` over ``A x (senses) b`` and ``lo <= x <= hi``.

    ``warm`` may carry (basis, vstat) from a related solve, or the extended
    form (basis, vstat, tab, rhs0, since_refresh) handing over a live
    tableau; an unusable warm basis silently falls back to the all-slack
    start.  A handed-over tableau is mutated in place, so the caller must
    treat it as consumed.
    """
    m, n = A.shape
    N = n + m
    W = np.empty((m, N))
    W[:, :n] = A
    W[:, n:] = np.eye(m)
    full_lo = np.empty(N)
    full_hi = np.empty(N)
    full_lo[:n] = lo
    full_hi[:n] = hi
    for i, s in enumerate(senses):
        if s == "<=":
            full_lo[n + i], full_hi[n + i] = 0.0, INF
        elif s == ">=":
            full_lo[n + i], full_hi[n + i] = -INF, 0.0
        else:
            full_lo[n + i], full_hi[n + i] = 0.0, 0.0
    cost = np.zeros(N)
    cost[:n] = c
    return _simplex(W, b, cost, full_lo, full_hi, n, config, warm)


def _default_vstat(full_lo, full_hi, N):
    vstat = np.full(N, AT_LOWER, dtype=np.int8)
    no_lo = np.isneginf(full_lo)
    vstat[no_lo & np.isposinf(full_hi)] = AT_FREE
    vstat[no_lo & np.isfinite(full_hi)] = AT_UPPER
    return vstat


def _nonbasic_values(vstat, full_lo, full_hi):
    vals = np.where(vstat == AT_LOWER, full_lo, 0.0)
    vals = np.where(vstat == AT_UPPER, full_hi, vals)
    vals = np.where(vstat == BASIC, 0.0, vals)
    return vals


def _simplex(W, b, cost, full_lo, full_hi, n_struct, config, warm=None):
    m, N = W.shape
    ftol = config.feas_tol

    basis = None
    vstat = None
    warm_tab = None
    warm_rhs0 = None
    warm_since = 0
    if warm is not None:
        if len(warm) == 5:
            wb, ws, warm_tab, warm_rhs0, warm_since = warm
        else:
            wb, ws = warm
        if (
            wb is not None
            and len(wb) == m
            and len(ws) == N
            and len(np.unique(wb)) == m
            and (m == 0 or (np.min(wb) >= 0 and np.max(wb) < N))
        ):
            basis = np.array(wb, dtype=np.int64)
            vstat = np.array(ws, dtype=np.int8)
            # repair statuses so they agree with the basis list
            default = _default_vstat(full_lo, full_hi, N)
            stray = (vstat == BASIC)
            stray[basis] = False
            vstat[stray] = default[stray]
            vstat[basis] = BASIC
    if basis is None:
        basis = np.arange(n_struct, n_struct + m, dtype=np.int64)
        vstat = _default_vstat(full_lo, full_hi, N)
        vstat[basis] = BASIC
        warm_tab = None

    def refresh():
        B = W[:, basis]
        try:
            tab = np.linalg.solve(B, W)
            rhs0 = np.linalg.solve(B, b)
        except np.linalg.LinAlgError:
            return None, None
        return tab, rhs0

    since_refresh = 0
    if warm_tab is not None and warm_tab.shape == (m, N) and warm_rhs0 is not None:
        # continue on the handed-over tableau; bounds may differ but the
        # matrix does not, so it is exact for this basis up to drift
        tab, rhs0 = warm_tab, warm_rhs0
        since_refresh = int(warm_since)
    else:
        tab, rhs0 = refresh()
    if tab is None:
        # singular warm basis: restart from slacks
        basis = np.arange(n_struct, n_struct + m, dtype=np.int64)
        vstat = _default_vstat(full_lo, full_hi, N)
        vstat[basis] = BASIC
        tab, rhs0 = refresh()
        if tab is None:
            return LpState(Status.UNSTABLE, None, None, 0, None, None)

    vals = _nonbasic_values(vstat, full_lo, full_hi)
    nb_mask = vstat != BASIC
    x_basic = rhs0 - tab[:, nb_mask] @ vals[nb_mask]

    # a variable fixed by its bounds can never improve anything by entering
    not_fixed = (full_hi - full_lo) > 0

    max_pivots = max(5000, 50 * (m + N))
    pivots = 0
    degen_run = 0
    bland = False

    def state(status, x=None, obj=None, ray=None):
        return LpState(
            status, x, obj, pivots, basis, vstat, ray=ray,
            tab=tab, rhs0=rhs0, since_refresh=since_refresh,
        )

    while True:
        if pivots > max_pivots:
            return state(Status.UNSTABLE)

        over = x_basic - full_hi[basis]
        under = full_lo[basis] - x_basic
        infeas = np.maximum(np.maximum(over, under), 0.0)
        in_phase1 = bool(np.any(infeas > ftol))

        if in_phase1:
            d_basic = np.where(over > ftol, 1.0, 0.0) - np.where(under > ftol, 1.0, 0.0)
            red = -(d_basic @ tab)
        else:
            d_basic = cost[basis]
            red = cost - d_basic @ tab
        red[basis] = 0.0

        can_up = ((vstat == AT_LOWER) | (vstat == AT_FREE)) & (red < -1e-9)
        can_dn = ((vstat == AT_UPPER) | (vstat == AT_FREE)) & (red > 1e-9)
        eligible = (can_up | can_dn) & not_fixed

        if not np.any(eligible):
            if in_phase1:
                return state(Status.INFEASIBLE)
            x = vals.copy()
            x[basis] = x_basic
            np.clip(x, full_lo, full_hi, out=x)
            obj = float(cost @ x)
            return state(Status.OPTIMAL, x=x, obj=obj)

        if bland:
            q = int(np.flatnonzero(eligible)[0])
        else:
            scores = np.where(eligible, np.abs(red), -1.0)
            q = int(np.argmax(scores))
        direction = 1.0 if can_up[q] else -1.0

        alpha = tab[:, q]
        delta = -direction * alpha  # per-unit change of each basic value

        # ratio test: first breakpoint over all basic variables
        lob = full_lo[basis]
        hib = full_hi[basis]
        t = np.full(m, INF)
        feas_mask = infeas <= ftol
        dn = delta < -_PIVOT_TOL
        up = delta > _PIVOT_TOL

        mask = feas_mask & dn & np.isfinite(lob)
        t[mask] = (x_basic[mask] - lob[mask]) / -delta[mask]
        mask = feas_mask & up & np.isfinite(hib)
        t[mask] = (hib[mask] - x_basic[mask]) / delta[mask]
        mask = (over > ftol) & dn
        t[mask] = (x_basic[mask] - hib[mask]) / -delta[mask]
        mask = (under > ftol) & up
        t[mask] = (lob[mask] - x_basic[mask]) / delta[mask]
        np.maximum(t, 0.0, out=t)

        t_self = INF
        if np.isfinite(full_lo[q]) and np.isfinite(full_hi[q]):
            t_self = full_hi[q] - full_lo[q]

        if t.size:
            r = int(np.argmin(t))
            theta = t[r]
        else:
            r, theta = -1, INF
        if theta > t_self:
            theta = t_self
            r = -1  # bound flip

        if not np.isfinite(theta):
            if in_phase1:
                return state(Status.UNSTABLE)
            ray = np.zeros(N)
            ray[q] = direction
            ray[basis] = -direction * alpha
            return state(Status.UNBOUNDED, ray=ray)

        degen_run = degen_run + 1 if theta <= _ZERO_TOL else 0
        if degen_run > _DEGEN_RUN:
            bland = True
        elif theta > _ZERO_TOL:
            bland = False

        x_basic = x_basic + theta * delta
        if r < 0:
            # entering variable flips to its opposite bound, basis unchanged
            vstat[q] = AT_UPPER if vstat[q] == AT_LOWER else AT_LOWER
            vals[q] = full_hi[q] if vstat[q] == AT_UPPER else full_lo[q]
        else:
            leaving = basis[r]
            piv = tab[r, q]
            if abs(piv) < _PIVOT_TOL:
                tab, rhs0 = refresh()
                if tab is None:
                    return state(Status.UNSTABLE)
                since_refresh = 0
                nb_mask = vstat != BASIC
                x_basic = rhs0 - tab[:, nb_mask] @ vals[nb_mask]
                pivots += 1
                continue
            enter_val = vals[q] + direction * theta
            prow = tab[r] / piv
            col = tab[:, q].copy()
            col[r] = 0.0
            tab -= np.outer(col, prow)
            tab[r] = prow
            # keep rhs0 = B^-1 b aligned with the new basis
            pr = rhs0[r] / piv
            rhs0 = rhs0 - col * pr
            rhs0[r] = pr
            basis[r] = q
            # classify the leaving variable at whichever bound blocked it
            lv_lo, lv_hi = full_lo[leaving], full_hi[leaving]
            x_leave = x_basic[r]
            if np.isfinite(lv_lo) and abs(x_leave - lv_lo) <= abs(x_leave - lv_hi):
                vstat[leaving] = AT_LOWER
                vals[leaving] = lv_lo
            elif np.isfinite(lv_hi):
                vstat[leaving] = AT_UPPER
                vals[leaving] = lv_hi
            else:
                vstat[leaving] = AT_FREE
                vals[leaving] = 0.0
            vstat[q] = BASIC
            vals[q] = 0.0
            x_basic[r] = enter_val

        pivots += 1
        since_refresh += 1
        if since_refresh >= _REFRESH_EVERY:
            since_refresh = 0
            tab, rhs0 = refresh()
            if tab is None:
                return state(Status.UNSTABLE)
            nb_mask = vstat != BASIC
            vals = _nonbasic_values(vstat, full_lo, full_hi)
            x_basic = rhs0 - tab[:, nb_mask] @ vals[nb_mask]
