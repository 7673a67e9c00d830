"""Two-stage robust optimization with learning-augmented column-and-constraint generation.

The package bundles a self-contained mixed-integer linear programming layer,
a permutation-invariant value network with hand-rolled reverse-mode gradients,
a big-M embedding of trained networks into MILP models, two benchmark problem
families, the classical and learned variants of the column-and-constraint
generation loop, dataset tooling, and evaluation utilities.
"""

__version__ = "0.1.0"

SCHEMA_VERSION = 1

from ccgkit.milp import (  # noqa: F401
    MilpModel,
    SolveConfig,
    SolveResult,
    Status,
    VarKind,
    evaluate_solution,
    solve_lp,
    solve_milp,
)
