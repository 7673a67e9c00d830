"""Independent reference implementations used to pin expected test values.

Everything in this module is deliberately slow and simple: exhaustive
enumeration and brute-force linear algebra, sharing no code with the package
solvers they are used to check.
"""

import itertools

import numpy as np

INF = float("inf")


def lp_by_vertex_enumeration(c, A, senses, b, lo, hi):
    """Minimize c@x over {A x (senses) b, lo <= x <= hi} by basis enumeration.

    Collects every candidate equality system from tight constraint rows and
    tight bounds, solves the square systems, filters feasible points, and
    returns (status, best_x, best_obj).  Only suitable for a handful of
    variables.  Assumes the feasible region is bounded or empty; a feasible
    problem whose optimum escapes to infinity is not detected here, so tests
    pair this with bounded boxes.
    """
    n = len(c)
    rows = []
    for i in range(len(b)):
        rows.append(("row", i))
    for j in range(n):
        if np.isfinite(lo[j]):
            rows.append(("lo", j))
        if np.isfinite(hi[j]):
            rows.append(("hi", j))

    def feasible(x):
        if np.any(x < lo - 1e-8) or np.any(x > hi + 1e-8):
            return False
        r = A @ x
        for i, s in enumerate(senses):
            if s == "<=" and r[i] > b[i] + 1e-8:
                return False
            if s == ">=" and r[i] < b[i] - 1e-8:
                return False
            if s == "=" and abs(r[i] - b[i]) > 1e-8:
                return False
        return True

    best_x, best = None, INF
    for combo in itertools.combinations(rows, n):
        M = np.zeros((n, n))
        rhs = np.zeros(n)
        for k, (kind, i) in enumerate(combo):
            if kind == "row":
                M[k] = A[i]
                rhs[k] = b[i]
            elif kind == "lo":
                M[k, i] = 1.0
                rhs[k] = lo[i]
            else:
                M[k, i] = 1.0
                rhs[k] = hi[i]
        try:
            x = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            continue
        if feasible(x):
            obj = float(c @ x)
            if obj < best - 1e-12:
                best, best_x = obj, x
    if best_x is None:
        return "infeasible", None, None
    return "optimal", best_x, best


def knapsack_min_by_enumeration(values, weights, capacity):
    """Minimize sum(values[i] * s_i) over binary s with sum(weights[i] * s_i) <= capacity."""
    n = len(values)
    best, best_s = INF, None
    for bits in itertools.product((0, 1), repeat=n):
        s = np.array(bits, dtype=float)
        if float(weights @ s) <= capacity + 1e-9:
            obj = float(values @ s)
            if obj < best - 1e-12:
                best, best_s = obj, s
    return best, best_s


def milp_by_enumeration(model):
    """Enumerate integer assignments, solve the continuous rest by vertex search.

    Only for models whose integer variables all have finite bounds and whose
    continuous block is tiny.
    """
    from ccgkit.milp.model import VarKind

    c, const, A, senses, b, lo, hi = model.dense_arrays()
    sign = 1.0 if model.sense == "min" else -1.0
    cmin = sign * c
    int_idx = [j for j, k in enumerate(model.kinds) if k is not VarKind.CONTINUOUS]
    cont_idx = [j for j, k in enumerate(model.kinds) if k is VarKind.CONTINUOUS]
    ranges = []
    for j in int_idx:
        ranges.append(range(int(np.ceil(lo[j] - 1e-9)), int(np.floor(hi[j] + 1e-9)) + 1))
    best, best_x = INF, None
    for combo in itertools.product(*ranges):
        flo = lo.copy()
        fhi = hi.copy()
        for j, v in zip(int_idx, combo):
            flo[j] = fhi[j] = float(v)
        if cont_idx:
            status, x, obj = lp_by_vertex_enumeration(cmin, A, senses, b, flo, fhi)
            if status != "optimal":
                continue
        else:
            x = flo.copy()
            r = A @ x
            ok = True
            for i, s in enumerate(senses):
                if s == "<=" and r[i] > b[i] + 1e-8:
                    ok = False
                if s == ">=" and r[i] < b[i] - 1e-8:
                    ok = False
                if s == "=" and abs(r[i] - b[i]) > 1e-8:
                    ok = False
            if not ok:
                continue
            obj = float(cmin @ x)
        if obj < best - 1e-12:
            best, best_x = obj, x
    if best_x is None:
        return "infeasible", None, None
    return "optimal", best_x, sign * best + const
