from __future__ import annotations

import io
import json
import math
import zipfile
from pathlib import Path

import numpy as np
import pytest

from gdkm.dataio.dataset import SchemaError
from gdkm.dkm.forward import DataBlocks, predict_proba
from gdkm.dkm.model import init_model
from gdkm.graphs.adjacency import build_adjacency
from gdkm.graphs.generators import erdos_renyi
from gdkm.packaging.checkpoint import load_checkpoint, save_checkpoint, sidecar_path
from gdkm.packaging.checkpoint_validator import CheckpointContractError, validate_checkpoint_contract


def _model(scheme: str = "inter", n: int = 12):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, 4))
    a = build_adjacency(erdos_renyi(n, 0.3, seed=0), "lambda_interp", 0.5)
    model = init_model(x, a, 3, depth=2, nu=[1.0, math.inf], num_inducing=4, scheme=scheme, seed=0)
    params = model.parameters()
    params["layer_1"] = params["layer_1"] + 0.1 * np.tril(rng.standard_normal((4, 4)), -1)
    params["head_mu"] = rng.standard_normal((4, 3))
    return model.with_parameters(params), x, a


def _npy(value: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    np.save(buffer, value, allow_pickle=False)
    return buffer.getvalue()


def _write_zip(path: Path, members: dict) -> Path:
    with zipfile.ZipFile(path, "w") as zf:
        for name, data in members.items():
            zf.writestr(name, data)
    return path


@pytest.mark.parametrize("scheme", ["inter", "intra"])
def test_checkpoint_round_trip(tmp_path: Path, scheme: str) -> None:
    model, x, a = _model(scheme)
    path = save_checkpoint(tmp_path / "model", model, input_scale=0.25, dataset={"num_nodes": 12, "name": "toy"})
    assert path.name == "model.gdkmckpt"
    ckpt = load_checkpoint(path, a, num_features=4)
    back = ckpt.model
    assert back.nu == [1.0, math.inf]
    assert back.scheme.descriptor() == model.scheme.descriptor()
    assert np.array_equal(back.layer_params[0], model.layer_params[0])
    assert np.array_equal(back.head.mu, model.head.mu)
    assert ckpt.input_scale == 0.25
    assert ckpt.dataset["name"] == "toy"
    assert ckpt.run is None

    data = DataBlocks(features=x, labels=np.arange(12) % 3, train_index=np.arange(4))
    assert np.allclose(predict_proba(back, data, mc_samples=3, seed=1), predict_proba(model, data, mc_samples=3, seed=1))


def test_checkpoint_bytes_are_deterministic(tmp_path: Path) -> None:
    model, _, _ = _model()
    first = save_checkpoint(tmp_path / "a.gdkmckpt", model).read_bytes()
    second = save_checkpoint(tmp_path / "b.gdkmckpt", model).read_bytes()
    assert first == second


def test_run_mapping_goes_to_sidecar(tmp_path: Path) -> None:
    model, _, a = _model()
    path = save_checkpoint(tmp_path / "m.gdkmckpt", model, run={"seed": 3})
    side = sidecar_path(path)
    assert side.name == "m.gdkmckpt.json"
    assert json.loads(side.read_text(encoding="utf-8")) == {"run": {"seed": 3}}
    assert load_checkpoint(path, a).run == {"seed": 3}


def test_checkpoint_rejects_other_datasets(tmp_path: Path) -> None:
    model, _, _ = _model()
    path = save_checkpoint(tmp_path / "m.gdkmckpt", model)
    other = build_adjacency(erdos_renyi(10, 0.3, seed=1))
    with pytest.raises(SchemaError) as e:
        load_checkpoint(path, other)
    assert "expects 12 nodes" in str(e.value)
    _, _, a = _model()
    with pytest.raises(SchemaError) as e:
        load_checkpoint(path, a, num_features=5)
    assert "expects 4 features" in str(e.value)


def test_contract_rejects_bad_archives(tmp_path: Path) -> None:
    with pytest.raises(CheckpointContractError) as e:
        validate_checkpoint_contract(str(tmp_path / "model.zip"))
    assert "Not a checkpoint" in str(e.value)

    with pytest.raises(CheckpointContractError) as e:
        validate_checkpoint_contract(str(tmp_path / "absent.gdkmckpt"))
    assert "File not found" in str(e.value)

    junk = tmp_path / "junk.gdkmckpt"
    junk.write_bytes(b"not a zip")
    with pytest.raises(CheckpointContractError) as e:
        validate_checkpoint_contract(str(junk))
    assert "Invalid ZIP archive" in str(e.value)

    empty = _write_zip(tmp_path / "empty.gdkmckpt", {"arrays/layer_1.npy": _npy(np.eye(2))})
    with pytest.raises(CheckpointContractError) as e:
        validate_checkpoint_contract(str(empty))
    assert "Missing manifest.json at archive root" in str(e.value)


def _tampered(tmp_path: Path, edit) -> Path:
    model, _, _ = _model()
    path = save_checkpoint(tmp_path / "m.gdkmckpt", model)
    with zipfile.ZipFile(path) as zf:
        members = {n: zf.read(n) for n in zf.namelist()}
    edit(members)
    return _write_zip(tmp_path / "tampered.gdkmckpt", members)


def test_contract_flags_undeclared_and_misshapen_arrays(tmp_path: Path) -> None:
    def add_extra(members: dict) -> None:
        members["arrays/bonus.npy"] = _npy(np.zeros(2))

    with pytest.raises(CheckpointContractError) as e:
        validate_checkpoint_contract(str(_tampered(tmp_path, add_extra)))
    assert "Archive contains arrays not declared in manifest.json: arrays/bonus.npy" in str(e.value)

    def shrink_head(members: dict) -> None:
        members["arrays/head_mu.npy"] = _npy(np.zeros((4, 2)))

    with pytest.raises(CheckpointContractError) as e:
        validate_checkpoint_contract(str(_tampered(tmp_path, shrink_head)))
    assert "Array 'head_mu' has shape (4, 2), expected (4, 3)" in str(e.value)


def test_contract_flags_missing_required_array(tmp_path: Path) -> None:
    def drop_layer(members: dict) -> None:
        manifest = json.loads(members["manifest.json"])
        manifest["arrays"].remove("layer_2")
        members["manifest.json"] = json.dumps(manifest)
        del members["arrays/layer_2.npy"]

    with pytest.raises(CheckpointContractError) as e:
        validate_checkpoint_contract(str(_tampered(tmp_path, drop_layer)))
    assert "Missing required array 'layer_2'" in str(e.value)


def test_contract_flags_bad_manifest(tmp_path: Path) -> None:
    def break_manifest(members: dict) -> None:
        manifest = json.loads(members["manifest.json"])
        manifest["format_version"] = 9
        manifest["model"]["nu"] = [1.0]
        members["manifest.json"] = json.dumps(manifest)

    with pytest.raises(CheckpointContractError) as e:
        validate_checkpoint_contract(str(_tampered(tmp_path, break_manifest)))
    assert "unsupported 'format_version' 9" in str(e.value)
    assert "model.nu has 1 entries for depth 2" in str(e.value)
