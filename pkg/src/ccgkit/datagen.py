"""Labeled-pair generation for value-model training.

A dataset is a grid of (instance, decision, scenario) triples. Every
random draw comes from an index-keyed generator, so a spec rebuilds the
same records byte for byte regardless of batching or platform.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses

import numpy as np

from . import SCHEMA_VERSION
from ._jsonio import check_schema_version, dump_json, dump_jsonl, load_json, load_jsonl
from .nn.train import LabeledSample
from .problems import (
    CORRELATION_TAGS,
    CapitalBudgetingInstance,
    first_stage_features,
    generate_cb_instance,
    generate_knapsack_instance,
    instance_from_dict,
    instance_to_dict,
    scenario_features,
    second_stage_value,
)

FAMILIES = ("knapsack", "capital")


@dataclasses.dataclass(frozen=True)
class DatasetSpec:
    """Grid description: instances x decisions per instance x scenarios per decision."""

    family: str
    instances: int
    decisions: int
    scenarios: int
    sizes: tuple
    target_mode: str = "sum"
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if min(self.instances, self.decisions, self.scenarios) < 1:
            raise ValueError("all grid counts must be at least one")
        if not self.sizes:
            raise ValueError("sizes must name at least one instance size")
        if self.target_mode not in ("sum", "second_only"):
            raise ValueError(f"unknown target mode {self.target_mode!r}")
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["sizes"] = list(self.sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"],
            instances=int(d["instances"]),
            decisions=int(d["decisions"]),
            scenarios=int(d["scenarios"]),
            sizes=tuple(d["sizes"]),
            target_mode=d.get("target_mode", "sum"),
            seed=int(d.get("seed", 0)),
        )


def spec_instances(spec):
    """The deterministic instance list for a spec, sizes and tags cycling."""
    out = []
    for i in range(spec.instances):
        n = spec.sizes[i % len(spec.sizes)]
        if spec.family == "knapsack":
            tag = CORRELATION_TAGS[i % len(CORRELATION_TAGS)]
            out.append(generate_knapsack_instance(n, tag=tag, seed=spec.seed + i))
        else:
            out.append(generate_cb_instance(n, seed=spec.seed + i))
    return out


def sample_first_stage(inst, rng):
    """Random selection with a fresh density per draw.

    Budgeting decisions are repaired to the nominal budget by dropping the
    costliest picks, so most sampled pairs survive scenario pricing.
    """
    density = rng.uniform(0.2, 0.8)
    x = (rng.random(inst.n) < density).astype(float)
    if isinstance(inst, CapitalBudgetingInstance):
        order = np.argsort(-inst.c_bar)
        for i in order:
            if float(inst.c_bar @ x) <= inst.budget:
                break
            x[i] = 0.0
    return x


def sample_scenario(inst, rng):
    """Uniform draw from the uncertainty set.

    Box sets are sampled directly. The budgeted set is sampled on the box
    and pulled radially onto the budget face when the draw lands outside.
    """
    if isinstance(inst, CapitalBudgetingInstance):
        return rng.uniform(-1.0, 1.0, size=4)
    xi = rng.random(inst.n)
    mass = float(xi.sum())
    if mass > inst.gamma and mass > 0:
        xi = xi * (inst.gamma / mass)
    return xi


def instance_records(spec, inst, index):
    """Records and drop count for one grid row.

    Draws are keyed by grid position alone, so splitting the grid across
    workers or rebuilding a single row reproduces identical records.
    """
    records = []
    dropped = 0
    for j in range(spec.decisions):
        x = sample_first_stage(inst, np.random.default_rng([spec.seed, index, j]))
        x_rows = first_stage_features(inst, x)
        for k in range(spec.scenarios):
            rng = np.random.default_rng([spec.seed, index, j, k])
            xi = sample_scenario(inst, rng)
            label = second_stage_value(inst, x, xi, spec.target_mode)
            if label is None:
                dropped += 1
                continue
            records.append(
                {
                    "instance": inst.name,
                    "x": x.tolist(),
                    "xi": xi.tolist(),
                    "x_rows": x_rows.tolist(),
                    "xi_rows": scenario_features(inst, xi).tolist(),
                    "label": float(label),
                    "target_mode": spec.target_mode,
                }
            )
    return records, dropped


def build_records(spec, threads=1):
    """Materialize the full grid. Returns (instances, records, dropped)."""
    instances = spec_instances(spec)
    records = []
    dropped = 0
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda pair: instance_records(spec, pair[1], pair[0]),
                    enumerate(instances),
                )
            )
    else:
        parts = [instance_records(spec, inst, i) for i, inst in enumerate(instances)]
    for recs, drop in parts:
        records.extend(recs)
        dropped += drop
    return instances, records, dropped


def build_dataset(spec, records_path, manifest_path, threads=1):
    """Write the record stream and its manifest; returns the manifest."""
    instances, records, dropped = build_records(spec, threads=threads)
    dump_jsonl(records_path, records)
    labels = np.array([r["label"] for r in records], dtype=float)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "spec": spec.to_dict(),
        "record_count": len(records),
        "dropped_infeasible": dropped,
        "label_min": float(labels.min()) if len(labels) else 0.0,
        "label_max": float(labels.max()) if len(labels) else 0.0,
        "label_std": float(labels.std()) if len(labels) else 0.0,
        "instances": {inst.name: instance_to_dict(inst) for inst in instances},
    }
    dump_json(manifest_path, manifest)
    return manifest


def load_dataset(records_path):
    """Read a record stream back as training samples."""
    samples = []
    for rec in load_jsonl(records_path):
        samples.append(
            LabeledSample(
                x_rows=np.asarray(rec["x_rows"], dtype=float),
                xi_rows=np.asarray(rec["xi_rows"], dtype=float),
                label=float(rec["label"]),
                meta={"instance": rec["instance"], "target_mode": rec["target_mode"]},
            )
        )
    return samples


def load_manifest_instances(manifest_path):
    """Instances recorded in a dataset manifest, keyed by name."""
    doc = load_json(manifest_path)
    check_schema_version(doc, SCHEMA_VERSION, "dataset manifest")
    return {name: instance_from_dict(d) for name, d in doc["instances"].items()}
