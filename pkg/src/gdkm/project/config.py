from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, MutableMapping, Optional, Sequence

import yaml

from gdkm.dataio.preprocessing import SCALING_MODES
from gdkm.dataio.synthetic import SYNTHETIC_KINDS
from gdkm.dkm.inducing import SCHEME_KINDS
from gdkm.dkm.model import GTT_MODES
from gdkm.errors import ConfigError
from gdkm.kernels.nonlinearity import BASE_KERNELS

DEFAULT_CONFIG_NAME = "gdkm.yaml"
ADJACENCY_KINDS = ("kipf", "lambda_interp")

# (key, default, description); rendered into the --help text of config-driven commands.
CONFIG_KEYS = [
    ("dataset.path", None, "dataset directory (features.csv, edges.txt, labels.csv, splits.json)"),
    ("dataset.synthetic", None, "heterophilous | homophilous, generated instead of reading dataset.path"),
    ("dataset.feature_scaling", "sum_squares", "sum_squares | norm | none"),
    ("dataset.fold", 0, "cross-validation fold (graph tasks)"),
    ("model.depth", 2, "number of Gram layers L"),
    ("model.nu", 1.0, "KL weight, one value or one per layer; inf freezes a layer at the NNGP"),
    ("model.base_kernel", "arccos", "arccos | linear"),
    ("model.scheme", "inter", "inter | intra inducing points"),
    ("model.num_inducing", 100, "number of inducing points"),
    ("model.adjacency", "kipf", "kipf | lambda_interp"),
    ("model.lambda", 0.0, "identity weight for lambda_interp, in [0, 1]"),
    ("model.gtt_mode", "nystrom", "nystrom | exact test-test block"),
    ("model.centering", False, "center kernels before the graph convolution"),
    ("model.learn_affine", False, "learn the centering scale and shift"),
    ("model.residual", False, "average each convolved kernel with its input Gram"),
    ("model.mc_samples_train", 1, "weight samples per training step"),
    ("model.mc_samples_eval", 16, "weight samples for predictions"),
    ("training.epochs", 300, "full-batch epochs"),
    ("training.lr_base", 1e-3, "learning rate at epoch 0"),
    ("training.lr_peak", 1e-2, "learning rate after warm-up"),
    ("training.lr_floor", 1e-5, "learning rate at the last epoch"),
    ("training.warm_fraction", 0.25, "share of epochs spent warming up"),
    ("training.clip_norm", 100.0, "global gradient-norm clip"),
    ("seed", 0, "master seed for every random stream"),
    ("output_dir", "runs", "where checkpoints and metrics are written"),
]


def config_keys_help() -> str:
    lines = ["Config keys (YAML file, or --set key=value):"]
    for key, default, text in CONFIG_KEYS:
        shown = "" if default is None else f" [default: {default}]"
        lines.append(f"  {key}: {text}{shown}")
    return "\n\n".join(lines)


@dataclass
class DatasetSection:
    path: Optional[Path] = None
    synthetic: Optional[str] = None
    feature_scaling: str = "sum_squares"
    fold: int = 0


@dataclass
class ModelSection:
    depth: int = 2
    nu: List[float] = field(default_factory=lambda: [1.0])
    base_kernel: str = "arccos"
    scheme: str = "inter"
    num_inducing: int = 100
    adjacency: str = "kipf"
    lam: float = 0.0
    gtt_mode: str = "nystrom"
    centering: bool = False
    learn_affine: bool = False
    residual: bool = False
    mc_samples_train: int = 1
    mc_samples_eval: int = 16

    def nu_per_layer(self) -> List[float]:
        if len(self.nu) == 1:
            return list(self.nu) * self.depth
        return list(self.nu)


@dataclass
class TrainingSection:
    epochs: int = 300
    lr_base: float = 1e-3
    lr_peak: float = 1e-2
    lr_floor: float = 1e-5
    warm_fraction: float = 0.25
    clip_norm: float = 100.0


@dataclass
class RunConfig:
    """One experiment: dataset, model, schedule, seed and output directory."""

    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    seed: int = 0
    output_dir: Path = Path("runs")

    def validate(self, require_dataset: bool = True) -> None:
        errors: List[str] = []
        d, m, t = self.dataset, self.model, self.training

        if require_dataset and d.path is None and d.synthetic is None:
            errors.append("dataset.path or dataset.synthetic is required")
        if d.path is not None and d.synthetic is not None:
            errors.append("dataset.path and dataset.synthetic are mutually exclusive")
        if d.synthetic is not None and d.synthetic not in SYNTHETIC_KINDS:
            errors.append(f"dataset.synthetic must be one of: {', '.join(SYNTHETIC_KINDS)}")
        if d.feature_scaling not in SCALING_MODES:
            errors.append(f"dataset.feature_scaling must be one of: {', '.join(SCALING_MODES)}")
        if d.fold < 0:
            errors.append("dataset.fold must be >= 0")

        if m.depth < 1:
            errors.append("model.depth must be >= 1")
        if not m.nu:
            errors.append("model.nu needs at least one value")
        elif len(m.nu) not in (1, m.depth):
            errors.append(f"model.nu has {len(m.nu)} values for depth {m.depth}")
        if any(math.isnan(v) or v < 0 for v in m.nu):
            errors.append("model.nu values must be >= 0 (inf allowed)")
        if m.base_kernel not in BASE_KERNELS:
            errors.append(f"model.base_kernel must be one of: {', '.join(BASE_KERNELS)}")
        if m.scheme not in SCHEME_KINDS:
            errors.append(f"model.scheme must be one of: {', '.join(SCHEME_KINDS)}")
        if m.num_inducing < 1:
            errors.append("model.num_inducing must be >= 1")
        if m.adjacency not in ADJACENCY_KINDS:
            errors.append(f"model.adjacency must be one of: {', '.join(ADJACENCY_KINDS)}")
        if not 0.0 <= m.lam <= 1.0:
            errors.append("model.lambda must lie in [0, 1]")
        if m.gtt_mode not in GTT_MODES:
            errors.append(f"model.gtt_mode must be one of: {', '.join(GTT_MODES)}")
        if m.mc_samples_train < 1:
            errors.append("model.mc_samples_train must be >= 1")
        if m.mc_samples_eval < 1:
            errors.append("model.mc_samples_eval must be >= 1")

        if t.epochs < 0:
            errors.append("training.epochs must be >= 0")
        for key in ("lr_base", "lr_peak", "lr_floor", "clip_norm"):
            if not getattr(t, key) > 0:
                errors.append(f"training.{key} must be > 0")
        if t.lr_floor > t.lr_peak:
            errors.append("training.lr_floor must not exceed training.lr_peak")
        if not 0.0 <= t.warm_fraction <= 1.0:
            errors.append("training.warm_fraction must lie in [0, 1]")

        if self.seed < 0:
            errors.append("seed must be >= 0")
        if not str(self.output_dir):
            errors.append("output_dir is required")
        if errors:
            raise ConfigError(errors)

    def dataset_dir(self, base: Optional[Path] = None) -> Optional[Path]:
        """dataset.path, resolved against ``base`` (the config file's directory) when relative."""
        path = self.dataset.path
        if path is None or path.is_absolute() or base is None:
            return path
        return base / path

    def to_mapping(self) -> Mapping:
        d, m, t = self.dataset, self.model, self.training
        dataset: Dict[str, Any] = {"feature_scaling": d.feature_scaling, "fold": d.fold}
        if d.path is not None:
            dataset["path"] = str(d.path)
        if d.synthetic is not None:
            dataset["synthetic"] = d.synthetic
        return {
            "run": {
                "dataset": dataset,
                "model": {
                    "depth": m.depth,
                    "nu": m.nu[0] if len(m.nu) == 1 else list(m.nu),
                    "base_kernel": m.base_kernel,
                    "scheme": m.scheme,
                    "num_inducing": m.num_inducing,
                    "adjacency": m.adjacency,
                    "lambda": m.lam,
                    "gtt_mode": m.gtt_mode,
                    "centering": m.centering,
                    "learn_affine": m.learn_affine,
                    "residual": m.residual,
                    "mc_samples_train": m.mc_samples_train,
                    "mc_samples_eval": m.mc_samples_eval,
                },
                "training": {
                    "epochs": t.epochs,
                    "lr_base": t.lr_base,
                    "lr_peak": t.lr_peak,
                    "lr_floor": t.lr_floor,
                    "warm_fraction": t.warm_fraction,
                    "clip_norm": t.clip_norm,
                },
                "seed": self.seed,
                "output_dir": str(self.output_dir),
            }
        }


def parse_nu(value: Any) -> List[float]:
    """A scalar or list of KL weights; the strings "inf"/".inf" mean ∞."""
    items = value if isinstance(value, (list, tuple)) else [value]
    out = []
    for v in items:
        if isinstance(v, bool):
            raise ValueError(f"invalid nu value: {v!r}")
        out.append(float(v))
    return out


def apply_overrides(raw: MutableMapping, overrides: Sequence[str]) -> None:
    """Apply ``section.key=value`` assignments; values are parsed as YAML scalars."""
    for item in overrides:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError([f"override '{item}' must look like section.key=value"])
        parts = key.split(".")
        target = raw
        for part in parts[:-1]:
            nxt = target.get(part)
            if not isinstance(nxt, MutableMapping):
                nxt = {}
                target[part] = nxt
            target = nxt
        target[parts[-1]] = yaml.safe_load(value) if value.strip() else None


class _Fields:
    """Typed reads from a raw mapping; conversion failures are collected, not raised."""

    def __init__(self, errors: List[str]) -> None:
        self.errors = errors

    def get(self, section: Mapping, prefix: str, key: str, kind, default):
        if not isinstance(section, Mapping) or section.get(key) is None:
            return default
        raw = section[key]
        try:
            if kind is bool:
                if isinstance(raw, bool):
                    return raw
                text = str(raw).strip().lower()
                if text in ("true", "yes", "1", "on"):
                    return True
                if text in ("false", "no", "0", "off"):
                    return False
                raise ValueError(raw)
            if kind is int:
                if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                    raise ValueError(raw)
                return int(raw)
            if kind is float:
                if isinstance(raw, bool):
                    raise ValueError(raw)
                return float(raw)
            return kind(raw)
        except (TypeError, ValueError):
            self.errors.append(f"{prefix}{key} must be {kind.__name__}, got {raw!r}")
            return default


class RunConfigLoader:
    """Load gdkm.yaml plus --set overrides.

    Without a path the starting point is ``base`` (a run mapping, e.g. a
    checkpoint sidecar) or the built-in defaults.
    """

    def __init__(
        self,
        config_path: Optional[Path] = None,
        overrides: Sequence[str] = (),
        require_dataset: bool = True,
        base: Optional[Mapping] = None,
    ) -> None:
        self.config_path = config_path
        self.base = base
        self.overrides = list(overrides)
        self.require_dataset = require_dataset

    def load_raw(self) -> Dict[str, Any]:
        raw: Any = self.base or {}
        if self.config_path is not None:
            if not self.config_path.exists():
                raise ConfigError([f"config not found at {self.config_path}"])
            try:
                with self.config_path.open("r", encoding="utf-8") as handle:
                    raw = yaml.safe_load(handle) or {}
            except yaml.YAMLError as exc:
                raise ConfigError([f"config is not valid YAML: {exc}"]) from exc
        if not isinstance(raw, Mapping):
            raise ConfigError(["configuration root must be a mapping"])

        # Support both flat and 'run:' nested structure
        run = raw.get("run")
        if not isinstance(run, Mapping):
            run = raw
        run = _deep_copy(run)
        apply_overrides(run, self.overrides)
        return run

    def load(self) -> RunConfig:
        run = self.load_raw()
        errors: List[str] = []
        f = _Fields(errors)
        for name in ("dataset", "model", "training"):
            if run.get(name) is not None and not isinstance(run.get(name), Mapping):
                errors.append(f"{name} must be a mapping")
        ds = run.get("dataset") if isinstance(run.get("dataset"), Mapping) else {}
        md = run.get("model") if isinstance(run.get("model"), Mapping) else {}
        tr = run.get("training") if isinstance(run.get("training"), Mapping) else {}

        nu = [1.0]
        if md.get("nu") is not None:
            try:
                nu = parse_nu(md["nu"])
            except (TypeError, ValueError):
                errors.append(f"model.nu must be a number, 'inf' or a list of them, got {md['nu']!r}")

        path = f.get(ds, "dataset.", "path", str, None)
        cfg = RunConfig(
            dataset=DatasetSection(
                path=Path(path) if path else None,
                synthetic=f.get(ds, "dataset.", "synthetic", str, None),
                feature_scaling=f.get(ds, "dataset.", "feature_scaling", str, "sum_squares"),
                fold=f.get(ds, "dataset.", "fold", int, 0),
            ),
            model=ModelSection(
                depth=f.get(md, "model.", "depth", int, 2),
                nu=nu,
                base_kernel=f.get(md, "model.", "base_kernel", str, "arccos"),
                scheme=f.get(md, "model.", "scheme", str, "inter"),
                num_inducing=f.get(md, "model.", "num_inducing", int, 100),
                adjacency=f.get(md, "model.", "adjacency", str, "kipf"),
                lam=f.get(md, "model.", "lambda", float, 0.0),
                gtt_mode=f.get(md, "model.", "gtt_mode", str, "nystrom"),
                centering=f.get(md, "model.", "centering", bool, False),
                learn_affine=f.get(md, "model.", "learn_affine", bool, False),
                residual=f.get(md, "model.", "residual", bool, False),
                mc_samples_train=f.get(md, "model.", "mc_samples_train", int, 1),
                mc_samples_eval=f.get(md, "model.", "mc_samples_eval", int, 16),
            ),
            training=TrainingSection(
                epochs=f.get(tr, "training.", "epochs", int, 300),
                lr_base=f.get(tr, "training.", "lr_base", float, 1e-3),
                lr_peak=f.get(tr, "training.", "lr_peak", float, 1e-2),
                lr_floor=f.get(tr, "training.", "lr_floor", float, 1e-5),
                warm_fraction=f.get(tr, "training.", "warm_fraction", float, 0.25),
                clip_norm=f.get(tr, "training.", "clip_norm", float, 100.0),
            ),
            seed=f.get(run, "", "seed", int, 0),
            output_dir=Path(f.get(run, "", "output_dir", str, "runs")),
        )
        known = {"dataset", "model", "training", "seed", "output_dir"}
        for key in run:
            if key not in known:
                errors.append(f"unknown config key: {key}")
        for prefix, section in (("dataset", ds), ("model", md), ("training", tr)):
            allowed = {k.split(".", 1)[1] for k, _, _ in CONFIG_KEYS if k.startswith(prefix + ".")}
            for key in section:
                if key not in allowed:
                    errors.append(f"unknown config key: {prefix}.{key}")
        try:
            cfg.validate(require_dataset=self.require_dataset)
        except ConfigError as exc:
            errors.extend(exc.errors)
        if errors:
            raise ConfigError(errors)
        return cfg


def _deep_copy(m: Mapping) -> Dict[str, Any]:
    return {k: _deep_copy(v) if isinstance(v, Mapping) else v for k, v in m.items()}

