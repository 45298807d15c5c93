from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gdkm.autodiff.tape import value_of
from gdkm.dataio.dataset import SchemaError, load_dataset
from gdkm.dataio.preprocessing import scale_features
from gdkm.dkm.forward import accuracy, head_features, predict_proba, sparse_forward
from gdkm.dkm.inducing import scheme_task_error
from gdkm.dkm.linear import LinearDemoData, closed_form_stack, linear_demo_data, linear_demo_subset
from gdkm.dkm.objective import TargetKernelLikelihood, full_rank_objective
from gdkm.errors import ConfigError
from gdkm.graphs.adjacency import build_adjacency
from gdkm.graphs.batching import mean_pool_matrix
from gdkm.kernels.alignment import DegenerateKernel, cka, label_kernel, normalize_kernel
from gdkm.nngp.recursion import NngpConfig, nngp_forward, nngp_on_nodes
from gdkm.numerics.random import stream
from gdkm.packaging.checkpoint import load_checkpoint, save_checkpoint, sidecar_path
from gdkm.project.config import DEFAULT_CONFIG_NAME, RunConfig, RunConfigLoader
from gdkm.runtime.jsonio import atomic_write_json
from gdkm.runtime.logging import LogLevel, log_message
from gdkm.services.pipeline import PreparedData, build_model, prepare_data, train_and_score
from gdkm.train.fit import Diverged, MetricsLog, fit_full_rank
from gdkm.train.sweep import CENTERING_FLAGS, SweepCell, SweepTable, sweep_nu
from gdkm.validators.dataset_validator import DatasetValidator

CHECKPOINT_NAME = "model.gdkmckpt"
METRICS_NAME = "metrics.jsonl"
FINAL_NAME = "final.json"
DEFAULT_LAMBDA_GRID = (0.1, 0.3, 0.5, 1.0)
DEFAULT_MAX_NODES = 400


INIT_CONFIG_TEMPLATE = """\
# gdkm run configuration
run:
  dataset:
    path: {dataset_path}
    feature_scaling: sum_squares
    fold: 0
  model:
    depth: 2
    nu: 1.0                  # a list gives one value per layer; inf = NNGP layer
    base_kernel: arccos
    scheme: inter
    num_inducing: 100
    adjacency: kipf
    lambda: 0.0
    gtt_mode: nystrom
    centering: false
    learn_affine: false
    residual: false
    mc_samples_train: 1
    mc_samples_eval: 16
  training:
    epochs: 300
    lr_base: 0.001
    lr_peak: 0.01
    lr_floor: 0.00001
    warm_fraction: 0.25
    clip_norm: 100.0
  seed: 0
  output_dir: runs
"""


def init_config(dataset_path: str = "data", target: Optional[Path] = None) -> Path:
    """Write a commented gdkm.yaml into the current directory."""
    target = target or Path(os.getcwd()).resolve() / DEFAULT_CONFIG_NAME

    if target.exists():
        raise ConfigError([f"config already exists: {target}"])

    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(INIT_CONFIG_TEMPLATE.format(dataset_path=dataset_path), encoding="utf-8")
    return target


@dataclass
class ValidationResult:
    ok: bool
    errors: List[str]
    warnings: List[str]
    info: List[str] = field(default_factory=list)


def validate_run(
    dataset_dir: Optional[Path] = None,
    config_path: Optional[Path] = None,
    overrides: Sequence[str] = (),
) -> ValidationResult:
    validator = DatasetValidator(dataset_dir=dataset_dir, config_path=config_path, overrides=overrides)
    ok, errors, warnings = validator.validate_all()
    return ValidationResult(ok=ok, errors=errors, warnings=warnings, info=validator.info)


def load_run_config(
    config_path: Optional[Path],
    overrides: Sequence[str] = (),
    require_dataset: bool = True,
) -> Tuple[RunConfig, Optional[Path]]:
    """The validated config and the directory relative dataset paths resolve against."""
    cfg = RunConfigLoader(config_path, overrides, require_dataset=require_dataset).load()
    base = config_path.resolve().parent if config_path is not None else None
    return cfg, base


def _run_mapping(cfg: RunConfig, base: Optional[Path]) -> Dict[str, Any]:
    mapping = cfg.to_mapping()["run"]
    path = cfg.dataset_dir(base)
    if path is not None:
        mapping["dataset"]["path"] = str(path.resolve())
    return mapping


@dataclass
class TrainOutcome:
    output_dir: Path
    checkpoint: Path
    metrics: Path
    final: Dict[str, Any]


def run_train(
    config_path: Optional[Path],
    overrides: Sequence[str] = (),
    output_dir: Optional[Path] = None,
    *,
    nngp: bool = False,
    prepared: Optional[PreparedData] = None,
) -> TrainOutcome:
    """Train the sparse graph DKM and write checkpoint, metrics.jsonl and final.json.

    With ``nngp`` every layer is frozen at ν = ∞, so only the head is fitted
    over the fixed NNGP kernel stack.
    """
    if nngp:
        overrides = list(overrides) + ["model.nu=inf"]
    cfg, base = load_run_config(config_path, overrides)
    out = output_dir or cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepared or prepare_data(cfg, base)
    model = build_model(cfg, prepared)
    metrics_path = out / METRICS_NAME
    metrics = MetricsLog(metrics_path)
    run = _run_mapping(cfg, base)
    dataset_info = {"name": prepared.dataset.name, "num_nodes": prepared.dataset.num_nodes, "task": prepared.dataset.task}

    log_message("training started", LogLevel.INFO, epochs=cfg.training.epochs, nu=model.nu, scheme=model.scheme.kind)
    try:
        result, test_acc = train_and_score(cfg, prepared, model, metrics=metrics)
    except Diverged as exc:
        saved = save_checkpoint(out / "model-last-good.gdkmckpt", exc.last_good, dataset=dataset_info, run=run)
        atomic_write_json(
            out / FINAL_NAME,
            {"status": "diverged", "epoch": exc.epoch, "message": str(exc), "checkpoint": str(saved)},
        )
        raise

    checkpoint = save_checkpoint(out / CHECKPOINT_NAME, result.model, dataset=dataset_info, run=run)
    last = result.final
    final = {
        "status": "ok",
        "dataset": prepared.dataset.name,
        "task": prepared.dataset.task,
        "fold": cfg.dataset.fold,
        "seed": cfg.seed,
        "depth": result.model.depth,
        "nu": list(result.model.nu),
        "scheme": result.model.scheme.kind,
        "epochs": cfg.training.epochs,
        "objective": last.objective,
        "kl_layers": last.kl_layers,
        "train_acc": last.train_acc,
        "val_acc": last.val_acc,
        "test_acc": test_acc,
        "checkpoint": str(checkpoint),
    }
    atomic_write_json(out / FINAL_NAME, final)
    log_message("training finished", LogLevel.INFO, val_acc=f"{last.val_acc:.4f}", test_acc=f"{test_acc:.4f}")
    return TrainOutcome(output_dir=out, checkpoint=checkpoint, metrics=metrics_path, final=final)


def _subsample(num: int, max_nodes: int, seed: int) -> np.ndarray:
    if num <= max_nodes:
        return np.arange(num)
    return np.sort(stream(seed, "split", 1).choice(num, size=max_nodes, replace=False))


def _write_matrix(path: Path, m: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, m, delimiter=",", fmt="%.10g")


def _write_table(path: Path, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])


def _safe_cka(k: np.ndarray, target: np.ndarray) -> Optional[float]:
    try:
        return cka(k, target)
    except DegenerateKernel as exc:
        log_message("cka undefined", LogLevel.WARN, reason=str(exc))
        return None


def export_nngp_kernels(cfg: RunConfig, prepared: PreparedData, out: Path, max_nodes: int = DEFAULT_MAX_NODES) -> Path:
    """Normalized NNGP layer kernels on a seeded node sample, ordered by label."""
    ds = prepared.dataset
    node_labels = ds.labels if ds.task == "node" else ds.labels[ds.graph_ids]
    nodes = _subsample(ds.num_nodes, max_nodes, cfg.seed)
    nodes = nodes[np.lexsort((nodes, node_labels[nodes]))]
    ncfg = NngpConfig(depth=cfg.model.depth, base_kernel=cfg.model.base_kernel, adjacency=prepared.adjacency, residual=cfg.model.residual)
    grams = nngp_on_nodes(ds.features, ncfg, np.sort(nodes))
    order = np.searchsorted(np.sort(nodes), nodes)
    target = label_kernel(node_labels[nodes], ds.num_classes)
    rows = []
    for ell, g in enumerate(grams, start=1):
        g = g[np.ix_(order, order)]
        _write_matrix(out / f"nngp_layer_{ell}.csv", normalize_kernel(g))
        rows.append([ell, _safe_cka(g, target)])
    _write_table(out / "nodes.csv", ["node", "label"], [[int(n), int(node_labels[n])] for n in nodes])
    _write_table(out / "cka.csv", ["layer", "cka_label"], rows)
    return out


def run_nngp(
    config_path: Optional[Path],
    overrides: Sequence[str] = (),
    output_dir: Optional[Path] = None,
    *,
    export_kernels: bool = False,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> TrainOutcome:
    cfg, base = load_run_config(config_path, overrides)
    prepared = prepare_data(cfg, base)
    outcome = run_train(config_path, overrides, output_dir, nngp=True, prepared=prepared)
    if export_kernels:
        export_nngp_kernels(cfg, prepared, outcome.output_dir / "kernels", max_nodes)
    return outcome


def _demo_data(
    num_nodes: int,
    seed: int,
    edge_prob: float,
    dataset_dir: Optional[Path],
) -> LinearDemoData:
    if dataset_dir is None:
        return linear_demo_data(num_nodes=num_nodes, edge_prob=edge_prob, seed=seed)
    ds = load_dataset(dataset_dir)
    if ds.task != "node":
        raise SchemaError("the linear demo needs a node-classification dataset")
    x = scale_features(ds.features, "sum_squares")
    return linear_demo_subset(x, ds.labels, ds.edges, num_nodes=num_nodes, seed=seed)


def run_linear_demo(
    output_dir: Path,
    *,
    num_nodes: int = 50,
    lam: float = 0.5,
    depth: int = 2,
    seed: int = 0,
    edge_prob: float = 0.1,
    lambdas: Sequence[float] = DEFAULT_LAMBDA_GRID,
    gd_epochs: int = 0,
    dataset_dir: Optional[Path] = None,
) -> Dict[str, Any]:
    """Closed-form linear graph DKM against the NNGP over a λ grid.

    Writes ``cka.csv`` (one row per λ), normalized per-layer kernels for
    ``lam`` under ``kernels/`` and ``summary.json``. When ``gd_epochs`` > 0
    the gradient ascent comparison goes under the summary's ``gd`` key and
    its trace into ``gd_metrics.jsonl``.
    """
    data = _demo_data(num_nodes, seed, edge_prob, dataset_dir)
    order = np.lexsort((np.arange(data.labels.shape[0]), data.labels))
    label_k = label_kernel(data.y)
    grid = sorted(set(float(v) for v in lambdas) | {float(lam)})

    rows = []
    for value in grid:
        a = build_adjacency(data.edges, "lambda_interp", value)
        dkm = closed_form_stack(data.g0, data.target, a, depth)
        nngp = nngp_forward(data.g0, NngpConfig(depth=depth, base_kernel="linear", adjacency=a))
        rows.append([value, _safe_cka(dkm[-1], label_k), _safe_cka(nngp[-1], label_k)])
        if value == float(lam):
            for ell in range(depth):
                _write_matrix(output_dir / "kernels" / f"dkm_layer_{ell + 1}.csv", normalize_kernel(dkm[ell])[np.ix_(order, order)])
                _write_matrix(output_dir / "kernels" / f"nngp_layer_{ell + 1}.csv", normalize_kernel(nngp[ell])[np.ix_(order, order)])
            chosen = (a, dkm)
    _write_table(output_dir / "cka.csv", ["lambda", "dkm_cka", "nngp_cka"], rows)
    _write_table(output_dir / "kernels" / "nodes.csv", ["node", "label"], [[int(n), int(data.labels[n])] for n in order])

    summary: Dict[str, Any] = {
        "num_nodes": int(data.labels.shape[0]),
        "num_edges": data.edges.num_edges,
        "depth": depth,
        "lambda": float(lam),
        "seed": seed,
        "cka": [{"lambda": r[0], "dkm": r[1], "nngp": r[2]} for r in rows],
    }

    if gd_epochs > 0:
        a, dkm = chosen
        nu = [1.0] * depth
        likelihood = TargetKernelLikelihood(data.target)
        gd = fit_full_rank(
            data.g0,
            a,
            nu,
            likelihood,
            gd_epochs,
            base_kernel="linear",
            seed=seed,
            metrics=MetricsLog(output_dir / "gd_metrics.jsonl"),
        )
        analytic = float(value_of(full_rank_objective(dkm, data.g0, a, nu, likelihood, base_kernel="linear")))
        diff = max(float(np.max(np.abs(normalize_kernel(g) - normalize_kernel(c)))) for g, c in zip(gd.grams, dkm))
        summary["gd"] = {
            "epochs": gd_epochs,
            "objective_gd": gd.objective,
            "objective_closed_form": analytic,
            "max_abs_kernel_diff": diff,
        }
        log_message("gradient ascent compared", LogLevel.INFO, max_abs_diff=f"{diff:.3e}", objective_gap=f"{analytic - gd.objective:.3e}")

    atomic_write_json(output_dir / "summary.json", summary)
    return summary


def sweep_cell(cfg: RunConfig, prepared: PreparedData, cell: SweepCell) -> Tuple[float, float]:
    """One sweep cell: train with the cell's settings and score it."""
    model = build_model(
        cfg,
        prepared,
        nu=cell.nu,
        scheme=cell.scheme,
        depth=cell.depth,
        seed=cell.seed,
        num_inducing=cell.num_inducing,
        centering=cell.centering,
    )
    result, test_acc = train_and_score(cfg, prepared, model, seed=cell.seed)
    return result.final.val_acc, test_acc


@dataclass
class SweepOutcome:
    table: SweepTable
    csv: Path
    summary: Path
    failures: Optional[Path]


def run_sweep(
    config_path: Optional[Path],
    overrides: Sequence[str] = (),
    output_dir: Optional[Path] = None,
    *,
    nu_grid: Sequence[float],
    schemes: Sequence[str],
    seeds: Sequence[int],
    depths: Optional[Sequence[int]] = None,
    num_inducing: Optional[Sequence[int]] = None,
    centering: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> SweepOutcome:
    cfg, base = load_run_config(config_path, overrides)
    bad = [s for s in schemes if s not in ("inter", "intra")]
    errors = [f"unknown scheme: {s}" for s in bad]
    errors += [f"{name} grid is empty" for name, grid in (("nu", nu_grid), ("scheme", schemes), ("seed", seeds)) if not grid]
    errors += [f"nu values must be >= 0, got {v}" for v in nu_grid if math.isnan(v) or v < 0]
    errors += [f"depths must be >= 1, got {d}" for d in depths or [] if d < 1]
    errors += [f"num_inducing values must be >= 1, got {p}" for p in num_inducing or [] if p < 1]
    errors += [f"unknown centering mode: {c}" for c in centering or [] if c not in CENTERING_FLAGS]
    if errors:
        raise ConfigError(errors)
    out = output_dir or cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepare_data(cfg, base)
    problems = sorted({p for p in (scheme_task_error(s, prepared.dataset.task) for s in schemes) if p})
    if problems:
        raise ConfigError(problems)
    table = sweep_nu(
        partial(sweep_cell, cfg, prepared),
        nu_grid,
        schemes,
        seeds,
        dataset=prepared.dataset.name,
        depths=depths,
        num_inducing=num_inducing,
        centering=centering,
        jobs=jobs,
    )
    csv_path = out / "sweep.csv"
    table.write_csv(csv_path)
    summary_path = out / "sweep_summary.json"
    table.write_summary(summary_path)
    failures = None
    if table.failures():
        failures = out / "sweep_failures.jsonl"
        table.write_failures(failures)
        log_message("sweep had failures", LogLevel.WARN, failed=len(table.failures()), total=len(table.rows))
    return SweepOutcome(table=table, csv=csv_path, summary=summary_path, failures=failures)


def run_eval(
    checkpoint_path: Path,
    dataset_dir: Optional[Path] = None,
    config_path: Optional[Path] = None,
    overrides: Sequence[str] = (),
    *,
    mc_samples: Optional[int] = None,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """Test accuracy, per-class accuracy and top-layer CKA of a checkpoint.

    The dataset comes from ``dataset_dir``, else from the config, else from
    the run recorded next to the checkpoint.
    """
    side = sidecar_path(checkpoint_path)
    base_run = None
    if config_path is None and side.exists():
        base_run = json.loads(side.read_text(encoding="utf-8")).get("run")
    if dataset_dir is not None:
        overrides = list(overrides) + [f"dataset.path={dataset_dir.resolve()}", "dataset.synthetic="]
    cfg = RunConfigLoader(config_path, overrides, require_dataset=True, base=base_run).load()
    base = config_path.resolve().parent if config_path is not None else None
    prepared = prepare_data(cfg, base)
    ckpt = load_checkpoint(checkpoint_path, prepared.adjacency, prepared.dataset.num_features)
    model = ckpt.model
    if model.num_classes != prepared.num_classes:
        raise SchemaError(f"checkpoint has {model.num_classes} classes, dataset has {prepared.num_classes}")

    blocks = replace(prepared.blocks, input_scale=ckpt.input_scale)
    seed = cfg.seed if seed is None else seed
    samples = mc_samples or cfg.model.mc_samples_eval
    stack = sparse_forward(model, blocks)
    probs = predict_proba(model, blocks, mc_samples=samples, seed=seed, stack=stack)
    test = prepared.split.test
    labels = prepared.blocks.labels

    per_class = {}
    for c in range(prepared.num_classes):
        members = test[labels[test] == c]
        per_class[str(c)] = accuracy(probs, labels, members) if members.size else None

    z = value_of(head_features(stack.top))
    if blocks.task == "graph":
        z = mean_pool_matrix(blocks.graph_offsets) @ z
    zt = z[test]
    top_cka = _safe_cka(zt @ zt.T, label_kernel(labels[test], prepared.num_classes)) if test.size > 1 else None

    return {
        "checkpoint": str(checkpoint_path),
        "dataset": prepared.dataset.name,
        "mc_samples": samples,
        "seed": seed,
        "test_acc": accuracy(probs, labels, test),
        "per_class_acc": per_class,
        "top_cka": top_cka,
    }
