from ccgkit.milp.model import (  # noqa: F401
    INF,
    ModelError,
    MilpModel,
    SolveConfig,
    SolveResult,
    Status,
    VarKind,
    evaluate_solution,
)
from ccgkit.milp.branch_bound import solve_milp  # noqa: F401
from ccgkit.milp.simplex import solve_lp  # noqa: F401
from ccgkit.milp.tighten import tighten_var_bounds  # noqa: F401
