from __future__ import annotations

import math
from pathlib import Path

import pytest
import yaml

from gdkm.errors import ConfigError
from gdkm.project.config import RunConfig, RunConfigLoader, apply_overrides, config_keys_help, parse_nu


def _write_config(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def test_nested_config_loads(tmp_path) -> None:
    path = _write_config(
        tmp_path / "gdkm.yaml",
        """
run:
  dataset:
    path: data/toy
  model:
    depth: 3
    nu: [1.0, inf, 0.5]
    scheme: intra
    lambda: 0.3
    adjacency: lambda_interp
  training:
    epochs: 10
  seed: 4
""",
    )
    cfg = RunConfigLoader(path).load()
    assert cfg.model.depth == 3
    assert cfg.model.nu[1] == math.inf
    assert cfg.model.nu_per_layer() == [1.0, math.inf, 0.5]
    assert cfg.model.lam == 0.3
    assert cfg.training.epochs == 10
    assert cfg.seed == 4
    assert cfg.dataset_dir(tmp_path) == tmp_path / "data" / "toy"


def test_flat_config_and_scalar_nu(tmp_path) -> None:
    path = _write_config(tmp_path / "gdkm.yaml", "dataset:\n  synthetic: homophilous\nmodel:\n  nu: 2\n")
    cfg = RunConfigLoader(path).load()
    assert cfg.dataset.synthetic == "homophilous"
    assert cfg.model.nu_per_layer() == [2.0, 2.0]
    assert cfg.dataset_dir(tmp_path) is None


def test_overrides_win_over_file(tmp_path) -> None:
    path = _write_config(tmp_path / "gdkm.yaml", "dataset:\n  path: toy\nmodel:\n  depth: 2\n")
    cfg = RunConfigLoader(path, ["model.depth=4", "model.nu=inf", "training.epochs=5"]).load()
    assert cfg.model.depth == 4
    assert cfg.model.nu == [math.inf]
    assert cfg.training.epochs == 5


def test_apply_overrides_creates_sections() -> None:
    raw: dict = {}
    apply_overrides(raw, ["model.scheme=intra", "seed=3", "dataset.path="])
    assert raw == {"model": {"scheme": "intra"}, "seed": 3, "dataset": {"path": None}}
    with pytest.raises(ConfigError) as e:
        apply_overrides(raw, ["no-equals-sign"])
    assert "section.key=value" in str(e.value)


def test_all_errors_are_collected(tmp_path) -> None:
    path = _write_config(
        tmp_path / "gdkm.yaml",
        """
dataset:
  path: toy
model:
  depth: abc
  base_kernel: rbf
  colour: blue
training:
  epochs: -1
extra: 1
""",
    )
    with pytest.raises(ConfigError) as e:
        RunConfigLoader(path).load()
    message = str(e.value)
    assert "model.depth must be int, got 'abc'" in message
    assert "model.base_kernel must be one of: arccos, linear" in message
    assert "unknown config key: model.colour" in message
    assert "unknown config key: extra" in message
    assert "training.epochs must be >= 0" in message
    assert message.startswith("Run configuration validation failed:")


def test_nu_count_must_match_depth(tmp_path) -> None:
    path = _write_config(tmp_path / "gdkm.yaml", "dataset:\n  path: toy\nmodel:\n  depth: 3\n  nu: [1, 2]\n")
    with pytest.raises(ConfigError) as e:
        RunConfigLoader(path).load()
    assert "model.nu has 2 values for depth 3" in str(e.value)


def test_dataset_required_unless_disabled(tmp_path) -> None:
    with pytest.raises(ConfigError) as e:
        RunConfigLoader().load()
    assert "dataset.path or dataset.synthetic is required" in str(e.value)
    assert RunConfigLoader(require_dataset=False).load().model.depth == 2


def test_missing_and_invalid_files(tmp_path) -> None:
    with pytest.raises(ConfigError) as e:
        RunConfigLoader(tmp_path / "absent.yaml").load()
    assert "config not found at" in str(e.value)
    bad = _write_config(tmp_path / "bad.yaml", "run: [unclosed\n")
    with pytest.raises(ConfigError) as e:
        RunConfigLoader(bad).load()
    assert "config is not valid YAML" in str(e.value)


def test_to_mapping_reloads_identically(tmp_path) -> None:
    path = _write_config(tmp_path / "gdkm.yaml", "dataset:\n  path: toy\nmodel:\n  nu: [1, inf]\n  centering: true\n")
    cfg = RunConfigLoader(path).load()
    again = RunConfigLoader(base=cfg.to_mapping()).load()
    assert again == cfg
    dumped = _write_config(tmp_path / "dumped.yaml", yaml.safe_dump(cfg.to_mapping()))
    assert RunConfigLoader(dumped).load() == cfg


def test_parse_nu() -> None:
    assert parse_nu("inf") == [math.inf]
    assert parse_nu([1, "0.5"]) == [1.0, 0.5]
    with pytest.raises(ValueError):
        parse_nu(True)


def test_defaults_validate() -> None:
    RunConfig().validate(require_dataset=False)
    assert "model.nu" in config_keys_help()
