"""Dataset builder checks.

Labels are re-derived through the enumeration oracles from the family tests,
so a drift in the generator's labeling shows up against code that never went
through it.
"""

import json

import numpy as np
import pytest

from ccgkit.datagen import (
    FAMILIES,
    DatasetSpec,
    build_dataset,
    build_records,
    load_dataset,
    load_manifest_instances,
    sample_first_stage,
    sample_scenario,
    spec_instances,
)
from ccgkit.problems import instance_to_dict, realized_profits
from ccgkit.problems.knapsack import first_stage_term
from tests.test_problems import cb_inner_by_enumeration, kp_inner_by_enumeration


def small_spec(family="knapsack", **overrides):
    base = dict(family=family, instances=2, decisions=3, scenarios=4, sizes=(5,), seed=13)
    base.update(overrides)
    return DatasetSpec(**base)


class TestSpec:
    def test_families_constant(self):
        assert set(FAMILIES) == {"knapsack", "capital"}

    def test_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            small_spec(family="matching")
        with pytest.raises(ValueError):
            small_spec(instances=0)
        with pytest.raises(ValueError):
            small_spec(sizes=())
        with pytest.raises(ValueError):
            small_spec(target_mode="difference")

    def test_roundtrip_dict(self):
        spec = small_spec(sizes=(5, 7))
        assert DatasetSpec.from_dict(spec.to_dict()) == spec

    def test_instances_cycle_sizes_and_tags(self):
        spec = small_spec(instances=6, sizes=(4, 6))
        insts = spec_instances(spec)
        assert [i.n for i in insts] == [4, 6, 4, 6, 4, 6]
        assert len({i.name for i in insts}) == 6


class TestRecords:
    def test_record_count_no_drops_for_knapsack(self):
        insts, records, dropped = build_records(small_spec())
        assert len(insts) == 2
        assert dropped == 0
        assert len(records) == 2 * 3 * 4

    def test_capital_drops_are_accounted(self):
        spec = small_spec(family="capital", instances=3, decisions=4, scenarios=5)
        _, records, dropped = build_records(spec)
        assert len(records) + dropped == 3 * 4 * 5
        assert all(r["label"] is not None for r in records)

    def test_scenarios_respect_uncertainty_sets(self):
        _, kp_records, _ = build_records(small_spec(scenarios=6))
        insts = {i.name: i for i in spec_instances(small_spec(scenarios=6))}
        for r in kp_records:
            xi = np.asarray(r["xi"])
            assert np.all(xi >= -1e-12) and np.all(xi <= 1.0 + 1e-12)
            assert xi.sum() <= insts[r["instance"]].gamma + 1e-9
        _, cb_records, _ = build_records(small_spec(family="capital"))
        for r in cb_records:
            xi = np.asarray(r["xi"])
            assert xi.shape == (4,)
            assert np.all(np.abs(xi) <= 1.0 + 1e-12)

    def test_labels_match_enumeration_oracles(self):
        spec = small_spec()
        insts, records, _ = build_records(spec)
        by_name = {i.name: i for i in insts}
        for r in records:
            inst = by_name[r["instance"]]
            x = np.asarray(r["x"])
            xi = np.asarray(r["xi"])
            want = kp_inner_by_enumeration(inst, x, xi) + first_stage_term(inst, x)
            assert r["label"] == pytest.approx(want, abs=1e-7)

        cb_spec = small_spec(family="capital", decisions=2, scenarios=3)
        cb_insts, cb_records, _ = build_records(cb_spec)
        by_name = {i.name: i for i in cb_insts}
        for r in cb_records:
            inst = by_name[r["instance"]]
            x = np.asarray(r["x"])
            xi = np.asarray(r["xi"])
            inner = cb_inner_by_enumeration(inst, x, xi)
            want = inner - float(realized_profits(inst, xi) @ x)
            assert r["label"] == pytest.approx(want, abs=1e-7)

    def test_first_stage_sampler_respects_cb_budget(self):
        insts = spec_instances(small_spec(family="capital", instances=4))
        rng = np.random.default_rng(3)
        for inst in insts:
            for _ in range(10):
                x = sample_first_stage(inst, rng)
                assert float(inst.c_bar @ x) <= inst.budget + 1e-9

    def test_build_records_deterministic(self):
        a = build_records(small_spec())
        b = build_records(small_spec())
        assert a[2] == b[2]
        assert json.dumps(a[1], sort_keys=True) == json.dumps(b[1], sort_keys=True)


class TestFiles:
    def test_dataset_files_roundtrip(self, tmp_path):
        spec = small_spec()
        records_path = tmp_path / "records.jsonl"
        manifest_path = tmp_path / "manifest.json"
        manifest = build_dataset(spec, records_path, manifest_path)
        samples = load_dataset(records_path)
        assert len(samples) == manifest["record_count"]
        assert manifest["dropped_infeasible"] == 0
        labels = np.array([s.label for s in samples])
        assert manifest["label_std"] == pytest.approx(float(labels.std()), rel=1e-12)
        insts = load_manifest_instances(manifest_path)
        want = {i.name: instance_to_dict(i) for i in spec_instances(spec)}
        got = {name: instance_to_dict(i) for name, i in insts.items()}
        assert json.dumps(got, sort_keys=True) == json.dumps(want, sort_keys=True)

    def test_dataset_files_byte_identical_across_runs(self, tmp_path):
        spec = small_spec(family="capital")
        first = tmp_path / "a"
        second = tmp_path / "b"
        first.mkdir()
        second.mkdir()
        build_dataset(spec, first / "r.jsonl", first / "m.json")
        build_dataset(spec, second / "r.jsonl", second / "m.json")
        assert (first / "r.jsonl").read_bytes() == (second / "r.jsonl").read_bytes()
        assert (first / "m.json").read_bytes() == (second / "m.json").read_bytes()

    def test_sample_scenario_streams_are_stable(self):
        insts = spec_instances(small_spec())
        rng1 = np.random.default_rng(42)
        rng2 = np.random.default_rng(42)
        for inst in insts:
            np.testing.assert_array_equal(
                sample_scenario(inst, rng1), sample_scenario(inst, rng2)
            )
