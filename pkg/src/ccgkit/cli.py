"""Operator commands tying the pipeline together.

Every command writes a self-describing artifact directory: the outputs, a
schema version, and the exact parameter document that produced them, so a
rerun with the same parameters and seed reproduces each file byte for byte.
Wall-clock fields are zeroed in artifacts unless RO_TIMING=on; real timings
go to stderr instead, where they cannot break reproducibility.  RO_THREADS
sizes the worker pool of the data and bench commands, and RO_SEED overrides
the seed of any command that accepts one.
"""

import concurrent.futures
import csv
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import SCHEMA_VERSION
from ._jsonio import SchemaError, check_schema_version, dump_json, dump_jsonl, load_json
from .ccg import CcgError, MlCcgConfig, classical_ccg, ml_ccg
from .datagen import DatasetSpec, build_dataset, load_dataset
from .evalbench import (
    EvaluationError,
    _cb_grid,
    brute_force_2ro,
    build_report,
    cb_grid_worst_case,
    evaluate_exact_objective_uncertainty,
    write_report_csv,
)
from .nn.layers import PROFILES, build_model
from .nn.serialize import load_model, save_model
from .nn.train import TrainConfig, TrainingDiverged, train_model
from .plots import save_bound_trace, save_re_boxplot, save_training_curve
from .problems import (
    CORRELATION_TAGS,
    KnapsackInstance,
    generate_cb_instance,
    generate_knapsack_instance,
    load_instance,
    save_instance,
)

_METHODS = ("brute", "ml-ccg", "ccg")
_BRUTE_LIMIT = 12


def _timing_on():
    return os.environ.get("RO_TIMING", "").lower() == "on"


def _threads():
    raw = os.environ.get("RO_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise SchemaError(f"RO_THREADS must be an integer, got {raw!r}")


def _seeded(seed):
    raw = os.environ.get("RO_SEED")
    if raw is None:
        return int(seed)
    try:
        return int(raw)
    except ValueError:
        raise SchemaError(f"RO_SEED must be an integer, got {raw!r}")


def _gate_timing(record, keys=("wall_ms", "wall_time")):
    """Copy with wall-clock fields zeroed unless timing opt-in is set."""
    out = dict(record)
    if not _timing_on():
        for key in keys:
            if key in out:
                out[key] = 0.0
    return out


def _merged(ctx):
    """Command parameters with config-file values merged under explicit flags."""
    params = {k: v for k, v in ctx.params.items() if k != "config"}
    cfg_path = ctx.params.get("config")
    if not cfg_path:
        return params
    doc = load_json(cfg_path)
    if not isinstance(doc, dict):
        raise SchemaError("config file must hold a JSON object")
    for key, val in doc.items():
        name = key.replace("-", "_")
        if name not in params:
            raise SchemaError(f"config key {key!r} is not a parameter of this command")
        if ctx.get_parameter_source(name) is not click.core.ParameterSource.COMMANDLINE:
            params[name] = val
    return params


def _write_run_config(out_dir, command, params):
    serializable = {}
    for key, val in params.items():
        if isinstance(val, tuple):
            val = list(val)
        serializable[key] = val
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "parameters": serializable,
    }
    dump_json(Path(out_dir) / "run_config.json", doc)


def _family_of(inst):
    return "knapsack" if isinstance(inst, KnapsackInstance) else "capital"


def _parse_sizes(raw):
    if isinstance(raw, (list, tuple)):
        return tuple(int(v) for v in raw)
    try:
        sizes = tuple(int(tok) for tok in str(raw).split(",") if tok.strip())
    except ValueError:
        raise click.UsageError(f"sizes must be comma-separated integers, got {raw!r}")
    if not sizes:
        raise click.UsageError("sizes must name at least one instance size")
    return sizes


def _load_instance_dir(path):
    path = Path(path)
    index = path / "index.json"
    if index.exists():
        doc = load_json(index)
        check_schema_version(doc, SCHEMA_VERSION, "instance index")
        files = [path / entry["file"] for entry in doc["instances"]]
    else:
        skip = {"index.json", "run_config.json"}
        files = sorted(p for p in path.glob("*.json") if p.name not in skip)
    if not files:
        raise SchemaError(f"no instances found under {path}")
    return [load_instance(f) for f in files]


@click.group()
def cli():
    """Two-stage robust optimization with learned scenario generation."""


@cli.command()
@click.option("--family", type=click.Choice(["knapsack", "capital"]), default="knapsack", show_default=True)
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--n-min", type=int, default=10, show_default=True)
@click.option("--n-max", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None, help="JSON defaults merged under explicit flags.")
@click.pass_context
def gen(ctx, **_kwargs):
    """Generate benchmark instances plus an index file."""
    p = _merged(ctx)
    seed = _seeded(p["seed"])
    if p["count"] < 0:
        raise click.UsageError("count must be nonnegative")
    if not 1 <= p["n_min"] <= p["n_max"]:
        raise click.UsageError("need 1 <= n-min <= n-max")
    out = Path(p["out"])
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(p["count"]):
        rng = np.random.default_rng([seed, i, 17])
        n = int(rng.integers(p["n_min"], p["n_max"] + 1))
        if p["family"] == "knapsack":
            tag = CORRELATION_TAGS[i % len(CORRELATION_TAGS)]
            inst = generate_knapsack_instance(n, tag=tag, seed=seed + i)
        else:
            inst = generate_cb_instance(n, seed=seed + i)
        fname = f"{inst.name}.json"
        save_instance(inst, out / fname)
        entries.append({"file": fname, "name": inst.name, "n": inst.n})
    dump_json(
        out / "index.json",
        {
            "schema_version": SCHEMA_VERSION,
            "family": p["family"],
            "count": p["count"],
            "instances": entries,
        },
    )
    _write_run_config(out, "gen", {**p, "seed": seed})
    click.echo(f"wrote {len(entries)} instance files to {out}")


@cli.command()
@click.option("--family", type=click.Choice(["knapsack", "capital"]), default="knapsack", show_default=True)
@click.option("--instances", type=int, default=10, show_default=True)
@click.option("--decisions", type=int, default=10, show_default=True)
@click.option("--scenarios", type=int, default=20, show_default=True)
@click.option("--sizes", default="10", show_default=True, help="Comma-separated instance sizes, cycled.")
@click.option("--target-mode", type=click.Choice(["sum", "second_only"]), default="sum", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None, help="JSON defaults merged under explicit flags.")
@click.pass_context
def data(ctx, **_kwargs):
    """Build a labeled training dataset and its manifest."""
    p = _merged(ctx)
    seed = _seeded(p["seed"])
    sizes = _parse_sizes(p["sizes"])
    try:
        spec = DatasetSpec(
            family=p["family"],
            instances=p["instances"],
            decisions=p["decisions"],
            scenarios=p["scenarios"],
            sizes=sizes,
            target_mode=p["target_mode"],
            seed=seed,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))
    out = Path(p["out"])
    t0 = time.perf_counter()
    manifest = build_dataset(spec, out / "records.jsonl", out / "manifest.json", threads=_threads())
    _write_run_config(out, "data", {**p, "seed": seed, "sizes": list(sizes)})
    click.echo(
        f"{manifest['record_count']} records "
        f"({manifest['dropped_infeasible']} infeasible dropped)"
    )
    click.echo(f"took {time.perf_counter() - t0:.1f}s", err=True)


@cli.command()
@click.option("--dataset", type=click.Path(), required=True, help="Directory with records.jsonl and manifest.json.")
@click.option("--profile", type=click.Choice(sorted(PROFILES)), default="desk", show_default=True)
@click.option("--epochs", type=int, default=500, show_default=True)
@click.option("--batch-size", type=int, default=256, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--val-fraction", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None, help="JSON defaults merged under explicit flags.")
@click.pass_context
def train(ctx, **_kwargs):
    """Train a value model; writes weights, curve files, and a summary."""
    p = _merged(ctx)
    seed = _seeded(p["seed"])
    dataset_dir = Path(p["dataset"])
    manifest = load_json(dataset_dir / "manifest.json")
    check_schema_version(manifest, SCHEMA_VERSION, "dataset manifest")
    spec_doc = manifest.get("spec") or {}
    family = spec_doc.get("family")
    if family not in ("knapsack", "capital"):
        raise SchemaError(f"dataset manifest: unusable spec.family {family!r}")
    samples = load_dataset(dataset_dir / "records.jsonl")
    if not samples:
        raise SchemaError("dataset holds no records")
    model = build_model(
        family,
        samples[0].x_rows.shape[1],
        samples[0].xi_rows.shape[1],
        target_mode=spec_doc.get("target_mode", "sum"),
        profile=p["profile"],
        seed=seed,
    )
    cfg = TrainConfig(
        epochs=p["epochs"],
        batch_size=p["batch_size"],
        lr=p["lr"],
        val_fraction=p["val_fraction"],
        seed=seed,
    )
    t0 = time.perf_counter()
    result = train_model(model, samples, cfg)
    wall = time.perf_counter() - t0
    out = Path(p["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_model(result.model, out / "model.json")
    with open(out / "curve.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mae", "val_mae"])
        for row in result.curve:
            writer.writerow([row["epoch"], row["train_mae"], row["val_mae"]])
    save_training_curve(out / "curve.png", result.curve)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "family": family,
        "record_count": len(samples),
        "epochs": p["epochs"],
        "best_epoch": result.best_epoch,
        "best_val_mae": result.best_val_mae,
        "label_std": result.label_std,
        "wall_time": wall,
    }
    dump_json(out / "summary.json", _gate_timing(summary))
    _write_run_config(out, "train", {**p, "seed": seed})
    click.echo(
        f"best validation MAE {result.best_val_mae:.4f} "
        f"(label std {result.label_std:.4f}) at epoch {result.best_epoch}"
    )
    click.echo(f"took {wall:.1f}s", err=True)


def _check_model_fits(model, inst):
    family = _family_of(inst)
    if model.family != family:
        raise SchemaError(
            f"model was trained for family {model.family!r}, instance is {family!r}"
        )


_CCG_ON_CAPITAL = (
    "the exact loop needs objective uncertainty; integer recourse under "
    "constraint uncertainty has no tractable adversarial solve here"
)


@cli.command()
@click.option("--instance", "instance_path", type=click.Path(), required=True)
@click.option("--method", type=click.Choice(list(_METHODS)), required=True)
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--epsilon", type=float, default=1e-3, show_default=True)
@click.option("--max-iterations", type=int, default=50, show_default=True)
@click.option("--time-limit", type=float, default=600.0, show_default=True)
@click.option("--mp-mode", type=click.Choice(["argmax", "max"]), default="argmax", show_default=True)
@click.option("--ap-mode", type=click.Choice(["milp", "sampling", "lp-relax"]), default="milp", show_default=True)
@click.option("--ap-samples", type=int, default=1000, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True, help="Exact-loop convergence gap.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None, help="JSON defaults merged under explicit flags.")
@click.pass_context
def solve(ctx, **_kwargs):
    """Solve one instance; writes the solution artifact and iteration log."""
    p = _merged(ctx)
    seed = _seeded(p["seed"])
    inst = load_instance(p["instance_path"])
    method = p["method"]
    out = Path(p["out"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    records = []
    extra = {}
    if method == "brute":
        if inst.n > _BRUTE_LIMIT:
            raise click.UsageError(f"brute enumeration is limited to n <= {_BRUTE_LIMIT}")
        x, objective = brute_force_2ro(inst)
        termination = "exact"
    elif method == "ccg":
        if not isinstance(inst, KnapsackInstance):
            raise click.UsageError(_CCG_ON_CAPITAL)
        res = classical_ccg(
            inst,
            tol=p["tol"],
            max_iterations=p["max_iterations"],
            time_limit=p["time_limit"],
        )
        x, objective, termination = res.x, res.objective, res.termination
        records = res.iterations
        extra = {"pool_size": len(res.pool)}
        save_bound_trace(out / "bounds.png", res.lower_bounds, res.upper_bounds)
    else:
        if not p["model_path"]:
            raise click.UsageError("method ml-ccg needs --model")
        model = load_model(p["model_path"])
        _check_model_fits(model, inst)
        cfg = MlCcgConfig(
            epsilon=p["epsilon"],
            max_iterations=p["max_iterations"],
            mp_mode=p["mp_mode"],
            ap_mode=p["ap_mode"],
            ap_samples=p["ap_samples"],
            time_limit=p["time_limit"],
            seed=seed,
        )
        res = ml_ccg(inst, model, cfg)
        x, objective, termination = res.x, res.objective, res.termination
        records = res.iterations
        extra = {"pool_size": len(res.pool)}
    wall = time.perf_counter() - t0
    if not np.isfinite(objective):
        raise CcgError(f"method {method} produced no finite objective")
    solution = {
        "schema_version": SCHEMA_VERSION,
        "instance": inst.name,
        "family": _family_of(inst),
        "method": method,
        "x": [float(v) for v in x],
        "objective": float(objective),
        "termination": termination,
        "iterations": len(records),
        "wall_time": wall,
        **extra,
    }
    dump_json(out / "solution.json", _gate_timing(solution))
    dump_jsonl(out / "iterations.jsonl", [_gate_timing(r) for r in records])
    _write_run_config(out, "solve", {**p, "seed": seed})
    click.echo(f"{method}: objective {objective:.6f} ({termination})")
    click.echo(f"took {wall:.1f}s", err=True)


@cli.command()
@click.option("--instances", "instances_dir", type=click.Path(), required=True)
@click.option("--methods", default="brute,ml-ccg", show_default=True, help="Comma-separated subset of brute, ml-ccg, ccg.")
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--epsilon", type=float, default=1e-3, show_default=True)
@click.option("--mp-mode", type=click.Choice(["argmax", "max"]), default="argmax", show_default=True)
@click.option("--ap-mode", type=click.Choice(["milp", "sampling", "lp-relax"]), default="sampling", show_default=True)
@click.option("--ap-samples", type=int, default=1000, show_default=True)
@click.option("--max-iterations", type=int, default=50, show_default=True)
@click.option("--time-limit", type=float, default=600.0, show_default=True)
@click.option("--grid-points", type=int, default=21, show_default=True, help="Risk-grid resolution for budgeting evaluation.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None, help="JSON defaults merged under explicit flags.")
@click.pass_context
def bench(ctx, **_kwargs):
    """Run methods across an instance directory and write the report files.

    Every returned decision is re-scored under the true worst case (exact
    cut loop for the degradation family, risk grid for budgeting), so rows
    compare decisions, not the methods' own claims.
    """
    p = _merged(ctx)
    seed = _seeded(p["seed"])
    methods = [tok.strip() for tok in str(p["methods"]).split(",") if tok.strip()]
    unknown = [m for m in methods if m not in _METHODS]
    if unknown or not methods:
        raise click.UsageError(f"methods must be a subset of {', '.join(_METHODS)}")
    insts = _load_instance_dir(p["instances_dir"])
    if "ml-ccg" in methods and not p["model_path"]:
        raise click.UsageError("method ml-ccg needs --model")
    if "ccg" in methods and any(not isinstance(i, KnapsackInstance) for i in insts):
        raise click.UsageError(_CCG_ON_CAPITAL)
    if ("brute" in methods or "ccg" in methods) and any(i.n > _BRUTE_LIMIT for i in insts):
        raise click.UsageError(f"exact scoring is limited to n <= {_BRUTE_LIMIT}")
    model = None
    if "ml-ccg" in methods:
        model = load_model(p["model_path"])
        for inst in insts:
            _check_model_fits(model, inst)
    grid = _cb_grid(p["grid_points"])

    def score(inst, x):
        if isinstance(inst, KnapsackInstance):
            value, _ = evaluate_exact_objective_uncertainty(inst, x)
            return value
        return cb_grid_worst_case(inst, x, grid)

    def run_instance(inst):
        rows = []
        for method in methods:
            t0 = time.perf_counter()
            if method == "brute":
                _, objective = brute_force_2ro(inst, grid_points=p["grid_points"])
            elif method == "ccg":
                res = classical_ccg(
                    inst, max_iterations=p["max_iterations"], time_limit=p["time_limit"]
                )
                objective = res.objective
            else:
                cfg = MlCcgConfig(
                    epsilon=p["epsilon"],
                    max_iterations=p["max_iterations"],
                    mp_mode=p["mp_mode"],
                    ap_mode=p["ap_mode"],
                    ap_samples=p["ap_samples"],
                    time_limit=p["time_limit"],
                    seed=seed,
                )
                res = ml_ccg(inst, model, cfg)
                objective = score(inst, res.x)
            rows.append(
                {
                    "instance_id": inst.name,
                    "method": method,
                    "objective": float(objective),
                    "wall_ms": (time.perf_counter() - t0) * 1000.0,
                }
            )
        return rows

    t_all = time.perf_counter()
    threads = _threads()
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            grouped = list(pool.map(run_instance, insts))
    else:
        grouped = [run_instance(inst) for inst in insts]
    rows = [_gate_timing(row) for group in grouped for row in group]
    report = build_report(rows)
    out = Path(p["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(out / "report.csv", report.rows)
    dump_json(
        out / "aggregate.json",
        {"schema_version": SCHEMA_VERSION, **report.aggregates},
    )
    save_re_boxplot(out / "re_boxplot.png", report.rows)
    _write_run_config(out, "bench", {**p, "seed": seed})
    for method, stats in report.aggregates["methods"].items():
        med = stats["median_re_pct"]
        med_text = "n/a" if med is None else f"{med:.2f}%"
        click.echo(f"{method}: median RE {med_text} over {stats['count']} instances")
    click.echo(f"took {time.perf_counter() - t_all:.1f}s", err=True)


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="ccgkit", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except SchemaError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (CcgError, EvaluationError, TrainingDiverged) as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
