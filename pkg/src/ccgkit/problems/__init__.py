"""Benchmark problem families, instance generators, and recourse solvers."""

from .base import (
    centroid_scenario,
    first_stage_feature_rows,
    first_stage_features,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    save_instance,
    scenario_bounds,
    scenario_budget_row,
    scenario_dim,
    scenario_feature_maps,
    scenario_features,
    second_stage_value,
    validate_scenario,
)
from .capital import (
    CapitalBudgetingInstance,
    cb_feasibility_scenario,
    generate_cb_instance,
    realized_costs,
    realized_profits,
)
from .knapsack import CORRELATION_TAGS, KnapsackInstance, generate_knapsack_instance

__all__ = [
    "CORRELATION_TAGS",
    "CapitalBudgetingInstance",
    "KnapsackInstance",
    "cb_feasibility_scenario",
    "centroid_scenario",
    "first_stage_feature_rows",
    "first_stage_features",
    "generate_cb_instance",
    "generate_knapsack_instance",
    "instance_from_dict",
    "instance_to_dict",
    "load_instance",
    "realized_costs",
    "realized_profits",
    "save_instance",
    "scenario_bounds",
    "scenario_budget_row",
    "scenario_dim",
    "scenario_feature_maps",
    "scenario_features",
    "second_stage_value",
    "validate_scenario",
]
