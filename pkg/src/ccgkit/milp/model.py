"""Model container for linear and mixed-integer linear programs.

A model is built incrementally: variables with bounds and a kind, then linear
constraints referencing variables by index, then a linear objective.  The
container validates every reference at construction time so the solvers can
assume a well-formed problem.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

INF = float("inf")


class ModelError(ValueError):
    """Raised for malformed model input (bad bounds, dangling references)."""


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"          # incumbent found, search stopped by a limit
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT_NO_INCUMBENT = "limit_no_incumbent"
    UNSTABLE = "numerically_unstable"


@dataclass
class SolveConfig:
    """Knobs shared by the LP and MILP solvers.

    Tolerances follow the package-wide convention: ``feas_tol`` for
    constraint and bound satisfaction, ``int_tol`` for integrality, and
    ``gap_tol`` as a relative optimality gap.
    """

    time_limit: float = 600.0
    no_improve_limit: float = 180.0
    node_limit: int = 1_000_000
    feas_tol: float = 1e-7
    int_tol: float = 1e-6
    gap_tol: float = 1e-6
    seed: int = 0


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None
    objective: float | None
    best_bound: float | None
    nodes: int = 0
    pivots: int = 0
    wall_time: float = 0.0
    ray: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.FEASIBLE)


@dataclass
class _Constraint:
    idx: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float


@dataclass
class MilpModel:
    """Incrementally built LP/MILP in minimize-or-maximize form."""

    name: str = "model"
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    var_names: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    obj_idx: np.ndarray | None = None
    obj_coef: np.ndarray | None = None
    obj_const: float = 0.0
    sense: str = "min"
    branch_priority: dict = field(default_factory=dict)

    # -- construction ------------------------------------------------------

    def add_var(
        self,
        lb: float = 0.0,
        ub: float = INF,
        kind: VarKind = VarKind.CONTINUOUS,
        name: str | None = None,
    ) -> int:
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            if ub == INF:
                ub = 1.0
            if lb < -1e-12 or ub > 1.0 + 1e-12:
                raise ModelError(f"binary variable bounds [{lb}, {ub}] exceed [0, 1]")
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if math.isnan(lb) or math.isnan(ub):
            raise ModelError("variable bound is NaN")
        if lb > ub:
            raise ModelError(f"variable lower bound {lb} exceeds upper bound {ub}")
        j = len(self.lb)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.kinds.append(kind)
        self.var_names.append(name if name is not None else f"x{j}")
        return j

    def add_vars(self, count: int, lb=0.0, ub=INF, kind=VarKind.CONTINUOUS, prefix="x") -> list:
        return [self.add_var(lb, ub, kind, f"{prefix}{i}") for i in range(count)]

    def add_constr(self, coeffs, sense: str, rhs: float) -> int:
        """Add ``sum(coef * var) sense rhs`` with sense one of ``<=``, ``>=``, ``=``."""
        if sense not in ("<=", ">=", "="):
            raise ModelError(f"unknown constraint sense {sense!r}")
        if isinstance(coeffs, dict):
            items = sorted(coeffs.items())
        else:
            items = list(coeffs)
        n = self.num_vars
        merged: dict[int, float] = {}
        for j, v in items:
            j = int(j)
            if j < 0 or j >= n:
                raise ModelError(f"constraint references unknown variable index {j}")
            merged[j] = merged.get(j, 0.0) + float(v)
        if math.isnan(rhs) or math.isinf(rhs):
            raise ModelError(f"constraint right-hand side {rhs} is not finite")
        idx = np.array(sorted(merged), dtype=np.int64)
        coef = np.array([merged[j] for j in idx], dtype=np.float64)
        if not np.all(np.isfinite(coef)):
            raise ModelError("constraint coefficient is not finite")
        self.constraints.append(_Constraint(idx, coef, sense, float(rhs)))
        return len(self.constraints) - 1

    def set_objective(self, coeffs, constant: float = 0.0, sense: str = "min") -> None:
        if sense not in ("min", "max"):
            raise ModelError(f"unknown objective sense {sense!r}")
        if isinstance(coeffs, dict):
            items = sorted(coeffs.items())
        else:
            items = list(coeffs)
        n = self.num_vars
        merged: dict[int, float] = {}
        for j, v in items:
            j = int(j)
            if j < 0 or j >= n:
                raise ModelError(f"objective references unknown variable index {j}")
            merged[j] = merged.get(j, 0.0) + float(v)
        self.obj_idx = np.array(sorted(merged), dtype=np.int64)
        self.obj_coef = np.array([merged[j] for j in self.obj_idx], dtype=np.float64)
        if not np.all(np.isfinite(self.obj_coef)):
            raise ModelError("objective coefficient is not finite")
        self.obj_const = float(constant)
        self.sense = sense

    # -- views -------------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.lb)

    @property
    def num_constrs(self) -> int:
        return len(self.constraints)

    def integer_indices(self) -> np.ndarray:
        return np.array(
            [j for j, k in enumerate(self.kinds) if k is not VarKind.CONTINUOUS],
            dtype=np.int64,
        )

    def set_branch_priority(self, var_ids, level: int) -> None:
        """Mark variables as preferred branching targets.

        Branching picks the fractional variable from the highest level that
        still has one; unmarked variables sit at level zero. Useful when a
        few shared variables gate the rest of the model, as fixing them
        first decomposes the remainder.
        """
        n = self.num_vars
        for j in var_ids:
            j = int(j)
            if j < 0 or j >= n:
                raise ModelError(f"branch priority references unknown variable index {j}")
            self.branch_priority[j] = int(level)

    def dense_arrays(self):
        """Return (c, const, A, senses, b, lo, hi) in native objective sense."""
        n, m = self.num_vars, self.num_constrs
        c = np.zeros(n)
        if self.obj_idx is not None:
            c[self.obj_idx] = self.obj_coef
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        for i, con in enumerate(self.constraints):
            A[i, con.idx] = con.coef
            b[i] = con.rhs
            senses.append(con.sense)
        lo = np.array(self.lb, dtype=np.float64)
        hi = np.array(self.ub, dtype=np.float64)
        return c, self.obj_const, A, senses, b, lo, hi

    def objective_value(self, x: np.ndarray) -> float:
        val = self.obj_const
        if self.obj_idx is not None:
            val += float(np.dot(self.obj_coef, np.asarray(x)[self.obj_idx]))
        return val

    # -- text export -------------------------------------------------------

    def to_lp_format(self) -> str:
        """Render the model in the plain LP text format."""
        out = [f"\\ {self.name}"]
        out.append("Minimize" if self.sense == "min" else "Maximize")
        terms = []
        if self.obj_idx is not None:
            for j, v in zip(self.obj_idx, self.obj_coef):
                terms.append(_term(v, self.var_names[j], not terms))
        if self.obj_const:
            terms.append(_num(self.obj_const, not terms))
        out.append(" obj: " + (" ".join(terms) if terms else "0"))
        out.append("Subject To")
        for i, con in enumerate(self.constraints):
            terms = []
            for j, v in zip(con.idx, con.coef):
                terms.append(_term(v, self.var_names[j], not terms))
            op = {"<=": "<=", ">=": ">=", "=": "="}[con.sense]
            out.append(f" c{i}: " + " ".join(terms) + f" {op} {con.rhs:.17g}")
        out.append("Bounds")
        for j in range(self.num_vars):
            lbj, ubj = self.lb[j], self.ub[j]
            name = self.var_names[j]
            if lbj == ubj:
                out.append(f" {name} = {lbj:.17g}")
            elif lbj == -INF and ubj == INF:
                out.append(f" {name} free")
            else:
                left = "-inf" if lbj == -INF else f"{lbj:.17g}"
                right = "+inf" if ubj == INF else f"{ubj:.17g}"
                out.append(f" {left} <= {name} <= {right}")
        bins = [self.var_names[j] for j, k in enumerate(self.kinds) if k is VarKind.BINARY]
        gens = [self.var_names[j] for j, k in enumerate(self.kinds) if k is VarKind.INTEGER]
        if bins:
            out.append("Binaries")
            out.append(" " + " ".join(bins))
        if gens:
            out.append("Generals")
            out.append(" " + " ".join(gens))
        out.append("End")
        return "\n".join(out) + "\n"


def _num(v: float, first: bool) -> str:
    if first:
        return f"{v:.17g}"
    return f"+ {v:.17g}" if v >= 0 else f"- {abs(v):.17g}"


def _term(v: float, name: str, first: bool) -> str:
    if first:
        return f"{v:.17g} {name}"
    return (f"+ {v:.17g} " if v >= 0 else f"- {abs(v):.17g} ") + name


def evaluate_solution(model: MilpModel, x) -> tuple[bool, float, float]:
    """Exact check of an assignment against the original model data.

    Returns ``(feasible, objective, max_violation)`` where the violation is
    the maximum over constraint residuals, bound breaches, and (for integer
    kinds) distance to the nearest integer.  Feasibility uses the default
    tolerances of :class:`SolveConfig`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.num_vars,):
        raise ModelError(
            f"assignment has shape {x.shape}, expected ({model.num_vars},)"
        )
    cfg = SolveConfig()
    viol = 0.0
    lo = np.array(model.lb)
    hi = np.array(model.ub)
    viol = max(viol, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
    for con in model.constraints:
        lhs = float(np.dot(con.coef, x[con.idx]))
        if con.sense == "<=":
            viol = max(viol, lhs - con.rhs)
        elif con.sense == ">=":
            viol = max(viol, con.rhs - lhs)
        else:
            viol = max(viol, abs(lhs - con.rhs))
    int_viol = 0.0
    for j in model.integer_indices():
        int_viol = max(int_viol, abs(x[j] - round(x[j])))
    feasible = viol <= cfg.feas_tol and int_viol <= cfg.int_tol
    return feasible, model.objective_value(x), max(viol, int_viol)
