"""Family-independent entry points dispatching on the instance type."""

from __future__ import annotations

import numpy as np

from .._jsonio import SchemaError, check_schema_version, dump_json, load_json
from .. import SCHEMA_VERSION
from . import capital, knapsack
from .capital import CapitalBudgetingInstance
from .knapsack import KnapsackInstance

_FAMILIES = {
    "knapsack": KnapsackInstance,
    "capital": CapitalBudgetingInstance,
}


def instance_to_dict(inst):
    doc = inst.to_dict()
    doc["schema_version"] = SCHEMA_VERSION
    return doc


def instance_from_dict(doc):
    family = doc.get("family")
    if family not in _FAMILIES:
        raise SchemaError(f"unknown problem family {family!r}")
    return _FAMILIES[family].from_dict(doc)


def save_instance(inst, path):
    dump_json(path, instance_to_dict(inst))


def load_instance(path):
    doc = load_json(path)
    check_schema_version(doc, SCHEMA_VERSION, "instance file")
    return instance_from_dict(doc)


def _mod(inst):
    if isinstance(inst, KnapsackInstance):
        return knapsack
    if isinstance(inst, CapitalBudgetingInstance):
        return capital
    raise TypeError(f"unsupported instance type {type(inst).__name__}")


def scenario_dim(inst):
    return inst.n if isinstance(inst, KnapsackInstance) else capital.RISK_DIM


def scenario_bounds(inst):
    """Componentwise box containing the uncertainty set."""
    return _mod(inst).scenario_lo_hi(inst)


def scenario_budget_row(inst):
    """Extra linear row of the uncertainty set beyond the box, or None.

    For the degradation family this is the mass cap sum(xi) <= gamma; the
    risk box needs nothing further.
    """
    if isinstance(inst, KnapsackInstance):
        return np.ones(inst.n), float(inst.gamma)
    return None


def centroid_scenario(inst):
    return np.zeros(scenario_dim(inst))


def validate_scenario(inst, xi, tol=1e-9):
    return _mod(inst).check_scenario(inst, xi, tol)


def second_stage_value(inst, x, xi, target_mode="sum"):
    """Exact inner optimum for fixed decision and scenario.

    Returns None when no feasible reaction exists, which only happens for
    the budgeting family when x alone overruns the budget under xi.
    """
    if isinstance(inst, KnapsackInstance):
        return knapsack.second_stage_knapsack(inst, x, xi, target_mode)
    return capital.second_stage_capital(inst, x, xi, target_mode)


def first_stage_features(inst, x):
    if isinstance(inst, KnapsackInstance):
        return knapsack.knapsack_first_stage_features(inst, x)
    return capital.cb_first_stage_features(inst, x)


def scenario_features(inst, xi):
    if isinstance(inst, KnapsackInstance):
        return knapsack.knapsack_scenario_features(inst, xi)
    return capital.cb_scenario_features(inst, xi)


def scenario_feature_maps(inst):
    if isinstance(inst, KnapsackInstance):
        return knapsack.knapsack_feature_maps(inst)
    return capital.cb_feature_maps(inst)


def first_stage_feature_rows(inst, bit):
    """Feature rows with every decision entry forced to ``bit`` (0 or 1)."""
    return first_stage_features(inst, np.full(inst.n, float(bit)))
