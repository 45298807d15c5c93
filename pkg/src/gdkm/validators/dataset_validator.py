from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from gdkm.dataio.dataset import (
    EDGES_FILE,
    FEATURES_FILE,
    GRAPH_ID_FILE,
    LABELS_FILE,
    SPLITS_FILE,
    GraphDataset,
    load_dataset,
)
from gdkm.dkm.inducing import scheme_task_error
from gdkm.errors import ConfigError, DataError
from gdkm.graphs.homophily import edge_homophily
from gdkm.project.config import RunConfig, RunConfigLoader

REQUIRED_FILES = (FEATURES_FILE, EDGES_FILE, LABELS_FILE)


class DatasetValidator:
    """Collects every config and dataset problem before a run, without raising."""

    def __init__(
        self,
        dataset_dir: Optional[Path] = None,
        config_path: Optional[Path] = None,
        overrides: Sequence[str] = (),
    ):
        self.dataset_dir = Path(dataset_dir) if dataset_dir is not None else None
        self.config_path = config_path
        self.overrides = list(overrides)
        self.errors: List[str] = []
        self.warnings: List[str] = []
        self.info: List[str] = []

    def validate_all(self) -> Tuple[bool, List[str], List[str]]:
        self.errors = []
        self.warnings = []
        self.info = []

        config = self._validate_config()
        directory = self.dataset_dir
        if directory is None and config is not None:
            directory = config.dataset_dir(self.config_path.parent if self.config_path else None)
        if directory is None:
            if config is not None and config.dataset.synthetic:
                self.info.append(f"dataset is synthetic ({config.dataset.synthetic})")
                return len(self.errors) == 0, self.errors, self.warnings
            if config is not None or self.config_path is None:
                self.errors.append("ERROR: no dataset directory given (pass --dataset or set dataset.path)")
            return False, self.errors, self.warnings

        self._validate_file_existence(directory)
        if self.errors:
            return False, self.errors, self.warnings

        dataset = self._validate_dataset(directory)
        if dataset is not None:
            self._validate_contents(dataset, config)

        return len(self.errors) == 0, self.errors, self.warnings

    # --- individual checks ---
    def _validate_config(self) -> Optional[RunConfig]:
        if self.config_path is None and not self.overrides:
            return None
        try:
            cfg = RunConfigLoader(self.config_path, self.overrides, require_dataset=self.dataset_dir is None).load()
        except ConfigError as exc:
            self.errors.extend(f"ERROR: config: {e}" for e in exc.errors)
            return None
        m = cfg.model
        if m.learn_affine and not m.centering:
            self.warnings.append("WARNING: model.learn_affine has no effect without model.centering")
        if m.adjacency == "lambda_interp" and m.lam == 0.0:
            self.warnings.append("WARNING: model.lambda is 0, lambda_interp equals the kipf adjacency")
        if m.adjacency == "kipf" and m.lam != 0.0:
            self.warnings.append("WARNING: model.lambda is ignored by the kipf adjacency")
        if m.gtt_mode == "exact":
            self.warnings.append("WARNING: model.gtt_mode exact builds the dense test-test block (P x P)")
        return cfg

    def _validate_file_existence(self, directory: Path) -> None:
        if not directory.is_dir():
            self.errors.append(f"ERROR: dataset directory not found: {directory}")
            return
        for name in REQUIRED_FILES:
            if not (directory / name).exists():
                self.errors.append(f"ERROR: {name} not found in {directory}")
        if not (directory / SPLITS_FILE).exists():
            if (directory / GRAPH_ID_FILE).exists():
                self.warnings.append(f"WARNING: {SPLITS_FILE} missing; 10 stratified folds will be generated")
            else:
                self.errors.append(f"ERROR: {SPLITS_FILE} not found in {directory}")

    def _validate_dataset(self, directory: Path) -> Optional[GraphDataset]:
        try:
            return load_dataset(directory)
        except DataError as exc:
            self.errors.append(f"ERROR: {exc}")
            return None

    def _validate_contents(self, ds: GraphDataset, config: Optional[RunConfig]) -> None:
        self.info.append(
            f"{ds.name}: {ds.num_nodes} nodes, {ds.edges.num_edges} edges, "
            f"{ds.num_features} features, {ds.num_classes} classes, {len(ds.folds)} fold(s), task {ds.task}"
        )
        if ds.edges.num_edges == 0:
            self.warnings.append("WARNING: graph has no edges; graph convolutions reduce to the identity")
        elif ds.task == "node":
            self.info.append(f"edge homophily {edge_homophily(ds.edges, ds.labels):.4f}")
        degree = np.bincount(ds.edges.edges.ravel(), minlength=ds.num_nodes) if ds.edges.num_edges else np.zeros(ds.num_nodes)
        isolated = int(np.sum(degree == 0))
        if isolated and ds.edges.num_edges:
            self.warnings.append(f"WARNING: {isolated} isolated node(s)")
        zero_rows = int(np.sum(~np.any(ds.features != 0.0, axis=1)))
        if zero_rows:
            self.warnings.append(f"WARNING: {zero_rows} all-zero feature row(s) are left unscaled")
        present = np.unique(ds.labels)
        if present.size != ds.num_classes:
            self.warnings.append("WARNING: some label values in 0..max have no examples")

        fold = config.dataset.fold if config is not None else 0
        if fold >= len(ds.folds):
            self.errors.append(f"ERROR: dataset.fold {fold} does not exist ({len(ds.folds)} available)")
            return
        split = ds.folds[fold]
        if split.train.size == 0:
            self.errors.append("ERROR: training split is empty")
        else:
            missing = np.setdiff1d(present, ds.labels[split.train])
            if missing.size:
                self.warnings.append(f"WARNING: classes {missing.tolist()} have no training examples")
        if split.val.size == 0:
            self.warnings.append("WARNING: validation split is empty; validation accuracy will be NaN")
        problem = scheme_task_error(config.model.scheme, ds.task) if config is not None else None
        if problem:
            self.errors.append(f"ERROR: config: {problem}")
        if config is not None and config.model.scheme == "intra" and ds.task == "node":
            if config.model.num_inducing > split.train.size:
                self.warnings.append(
                    f"WARNING: model.num_inducing {config.model.num_inducing} exceeds the "
                    f"{split.train.size} training nodes; all of them become inducing points"
                )
