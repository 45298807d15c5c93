"""Dataset → DataBlocks → model plumbing shared by the commands."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from gdkm.dataio.dataset import GraphDataset, Splits, load_dataset
from gdkm.dataio.preprocessing import scale_features
from gdkm.dataio.synthetic import synthetic_dataset
from gdkm.dkm.forward import DataBlocks, accuracy, predict_proba
from gdkm.dkm.inducing import scheme_task_error
from gdkm.dkm.model import DkmModel, init_model
from gdkm.errors import ConfigError
from gdkm.graphs.adjacency import NormalizedAdjacency, build_adjacency
from gdkm.project.config import RunConfig
from gdkm.runtime.logging import LogLevel, log_message
from gdkm.train.fit import FitResult, MetricsLog, fit
from gdkm.train.schedule import LrSchedule
from gdkm.train.sweep import CENTERING_FLAGS


@dataclass(frozen=True)
class PreparedData:
    dataset: GraphDataset
    adjacency: NormalizedAdjacency
    blocks: DataBlocks
    split: Splits
    candidates: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.dataset.num_classes


def load_run_dataset(cfg: RunConfig, base_dir: Optional[Path] = None) -> GraphDataset:
    if cfg.dataset.synthetic:
        return synthetic_dataset(cfg.dataset.synthetic, seed=cfg.seed)
    return load_dataset(cfg.dataset_dir(base_dir))


def prepare_data(cfg: RunConfig, base_dir: Optional[Path] = None, dataset: Optional[GraphDataset] = None) -> PreparedData:
    """Scale features, normalize the adjacency and pick the fold."""
    ds = dataset if dataset is not None else load_run_dataset(cfg, base_dir)
    ds = ds.with_features(scale_features(ds.features, cfg.dataset.feature_scaling))
    adjacency = build_adjacency(ds.edges, cfg.model.adjacency, cfg.model.lam)
    split = ds.split(cfg.dataset.fold)
    if ds.task == "graph":
        offsets = ds.graph_offsets()
        blocks = DataBlocks(
            features=ds.features,
            labels=ds.labels,
            train_index=split.train,
            task="graph",
            graph_offsets=offsets,
        )
        candidates = np.flatnonzero(np.isin(ds.graph_ids, split.train))
    else:
        blocks = DataBlocks(features=ds.features, labels=ds.labels, train_index=split.train)
        candidates = split.train
    log_message(
        "dataset ready",
        LogLevel.INFO,
        name=ds.name,
        nodes=ds.num_nodes,
        edges=ds.edges.num_edges,
        classes=ds.num_classes,
        task=ds.task,
    )
    return PreparedData(dataset=ds, adjacency=adjacency, blocks=blocks, split=split, candidates=candidates)


def build_model(
    cfg: RunConfig,
    prepared: PreparedData,
    *,
    nu: Optional[float | Sequence[float]] = None,
    scheme: Optional[str] = None,
    depth: Optional[int] = None,
    seed: Optional[int] = None,
    num_inducing: Optional[int] = None,
    centering: Optional[str] = None,
) -> DkmModel:
    """Model at the NNGP point from the config; keyword arguments override single settings.

    ``centering`` is one of ``none``, ``fixed`` or ``learned`` (centering
    with a trained scale and bias).
    """
    m = cfg.model
    depth = depth or m.depth
    scheme = scheme or m.scheme
    problem = scheme_task_error(scheme, prepared.dataset.task)
    if problem:
        raise ConfigError([problem])
    if nu is None:
        nu = m.nu_per_layer() if depth == m.depth else m.nu[0]
    if centering is None:
        use_centering, learn_affine = m.centering, m.learn_affine
    else:
        use_centering, learn_affine = CENTERING_FLAGS[centering]
    return init_model(
        prepared.blocks.features,
        prepared.adjacency,
        prepared.num_classes,
        depth=depth,
        nu=nu,
        base_kernel=m.base_kernel,
        scheme=scheme,
        num_inducing=num_inducing or m.num_inducing,
        candidates=prepared.candidates,
        seed=cfg.seed if seed is None else seed,
        centering=use_centering,
        learn_affine=learn_affine,
        gtt_mode=m.gtt_mode,
        residual=m.residual,
        mc_samples=m.mc_samples_train,
    )


def schedule_for(cfg: RunConfig) -> LrSchedule:
    t = cfg.training
    return LrSchedule(
        total_epochs=t.epochs,
        base=t.lr_base,
        peak=t.lr_peak,
        floor=t.lr_floor,
        warm_fraction=t.warm_fraction,
    )


def train_and_score(
    cfg: RunConfig,
    prepared: PreparedData,
    model: DkmModel,
    *,
    seed: Optional[int] = None,
    metrics: Optional[MetricsLog] = None,
) -> Tuple[FitResult, float]:
    """Fit ``model`` and return the result with its test accuracy."""
    seed = cfg.seed if seed is None else seed
    result = fit(
        model,
        prepared.blocks,
        prepared.split.val,
        schedule_for(cfg),
        cfg.training.epochs,
        seed=seed,
        clip_norm=cfg.training.clip_norm,
        mc_samples_eval=cfg.model.mc_samples_eval,
        metrics=metrics,
    )
    probs = predict_proba(result.model, prepared.blocks, mc_samples=cfg.model.mc_samples_eval, seed=seed)
    return result, accuracy(probs, prepared.blocks.labels, prepared.split.test)
