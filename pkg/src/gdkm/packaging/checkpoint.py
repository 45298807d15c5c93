from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from gdkm.dataio.dataset import SchemaError
from gdkm.dkm.inducing import inter_domain, intra_domain
from gdkm.dkm.model import DkmModel, VariationalHead
from gdkm.graphs.adjacency import NormalizedAdjacency
from gdkm.kernels.centering import CenteringParams
from gdkm.packaging.checkpoint_validator import (
    CHECKPOINT_FORMAT,
    CHECKPOINT_SUFFIX,
    CHECKPOINT_VERSION,
    MANIFEST_NAME,
    CheckpointContents,
    array_member,
    validate_checkpoint_contract,
)
from gdkm.project.config import parse_nu
from gdkm.runtime.jsonio import atomic_write_json, jsonable


@dataclass(frozen=True)
class Checkpoint:
    """A trained model plus what is needed to rebuild it against a dataset."""

    model: DkmModel
    input_scale: Optional[float] = None
    dataset: Optional[Dict[str, Any]] = None
    run: Optional[Dict[str, Any]] = None


class CheckpointWriter:
    """Writes a .gdkmckpt archive: manifest.json plus one .npy per parameter."""

    def write(self, output_path: Path, checkpoint: Checkpoint) -> Path:
        if not output_path.name.endswith(CHECKPOINT_SUFFIX):
            output_path = output_path.with_name(output_path.name + CHECKPOINT_SUFFIX)
        arrays = self._arrays(checkpoint.model)
        manifest = self._manifest(checkpoint, list(arrays))

        output_path.parent.mkdir(parents=True, exist_ok=True)
        tmp_output = output_path.with_suffix(".tmp")
        if tmp_output.exists():
            tmp_output.unlink()

        try:
            with zipfile.ZipFile(tmp_output, mode="w", compression=zipfile.ZIP_DEFLATED) as archive:
                self._write_bytes(archive, MANIFEST_NAME, json.dumps(jsonable(manifest), indent=2).encode("utf-8"))
                for name, value in arrays.items():
                    self._write_bytes(archive, array_member(name), self._npy(value))
            tmp_output.replace(output_path)
        except Exception:
            if tmp_output.exists():
                tmp_output.unlink()
            raise

        if checkpoint.run is not None:
            atomic_write_json(sidecar_path(output_path), {"run": checkpoint.run})
        return output_path

    def _write_bytes(self, archive: zipfile.ZipFile, arcname: str, content: bytes) -> None:
        info = zipfile.ZipInfo(arcname)
        info.date_time = (2020, 1, 1, 0, 0, 0)
        info.compress_type = zipfile.ZIP_DEFLATED
        archive.writestr(info, content)

    @staticmethod
    def _npy(value: np.ndarray) -> bytes:
        buffer = io.BytesIO()
        np.save(buffer, np.ascontiguousarray(value, dtype=np.float64), allow_pickle=False)
        return buffer.getvalue()

    @staticmethod
    def _arrays(model: DkmModel) -> Dict[str, np.ndarray]:
        arrays = {"inducing_inputs": model.inducing_inputs}
        for ell, l in enumerate(model.layer_params, start=1):
            arrays[f"layer_{ell}"] = np.tril(l)
        arrays["head_mu"] = model.head.mu
        arrays["head_sigma_chol"] = np.tril(model.head.sigma_chol)
        return arrays

    @staticmethod
    def _manifest(checkpoint: Checkpoint, array_names: List[str]) -> dict:
        model = checkpoint.model
        return {
            "format": CHECKPOINT_FORMAT,
            "format_version": CHECKPOINT_VERSION,
            "model": {
                "depth": model.depth,
                "nu": [float(v) for v in model.nu],
                "base_kernel": model.base_kernel,
                "gtt_mode": model.gtt_mode,
                "residual": model.residual,
                "num_inducing": model.num_inducing,
                "num_classes": model.num_classes,
                "num_features": int(model.inducing_inputs.shape[1]),
                "mc_samples": model.head.mc_samples,
                "scheme": model.scheme.descriptor(),
                "centering": [
                    {"enabled": c.enabled, "learn_affine": c.learn_affine, "gamma": c.gamma, "beta": c.beta}
                    for c in model.centering
                ],
            },
            "input_scale": checkpoint.input_scale,
            "dataset": dict(checkpoint.dataset or {"num_nodes": model.scheme.num_test}),
            "arrays": array_names,
        }


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_checkpoint(
    path: Path,
    model: DkmModel,
    *,
    input_scale: Optional[float] = None,
    dataset: Optional[Mapping[str, Any]] = None,
    run: Optional[Mapping[str, Any]] = None,
) -> Path:
    ckpt = Checkpoint(
        model=model,
        input_scale=input_scale,
        dataset=dict(dataset) if dataset is not None else None,
        run=dict(run) if run is not None else None,
    )
    return CheckpointWriter().write(path, ckpt)


def load_checkpoint(path: Path, adjacency: NormalizedAdjacency, num_features: Optional[int] = None) -> Checkpoint:
    """Read a checkpoint and rebuild its model over ``adjacency``.

    Raises SchemaError when the dataset does not match the one the model was
    trained on (node count, feature width or inducing indices).
    """
    contents = validate_checkpoint_contract(str(path))
    m = contents.manifest["model"]
    expected_nodes = contents.manifest["dataset"]["num_nodes"]
    if adjacency.num_nodes != expected_nodes:
        raise SchemaError(f"checkpoint expects {expected_nodes} nodes, dataset has {adjacency.num_nodes}")
    if num_features is not None and num_features != m["num_features"]:
        raise SchemaError(f"checkpoint expects {m['num_features']} features, dataset has {num_features}")
    model = _model(contents, adjacency)
    run = None
    side = sidecar_path(Path(path))
    if side.exists():
        run = json.loads(side.read_text(encoding="utf-8")).get("run")
    return Checkpoint(
        model=model,
        input_scale=contents.manifest.get("input_scale"),
        dataset=contents.manifest.get("dataset"),
        run=run,
    )


def _model(contents: CheckpointContents, adjacency: NormalizedAdjacency) -> DkmModel:
    m = contents.manifest["model"]
    a = contents.arrays
    scheme_desc = m["scheme"]
    if scheme_desc["kind"] == "intra":
        indices = np.asarray(scheme_desc["indices"], dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= adjacency.num_nodes):
            raise SchemaError("checkpoint inducing indices fall outside the dataset")
        scheme = intra_domain(adjacency, indices)
    else:
        scheme = inter_domain(adjacency, m["num_inducing"])
    return DkmModel(
        depth=m["depth"],
        nu=parse_nu(m["nu"]),
        base_kernel=m["base_kernel"],
        scheme=scheme,
        inducing_inputs=a["inducing_inputs"],
        layer_params=[a[f"layer_{ell}"] for ell in range(1, m["depth"] + 1)],
        head=VariationalHead(mu=a["head_mu"], sigma_chol=a["head_sigma_chol"], mc_samples=m["mc_samples"]),
        centering=[CenteringParams(**c) for c in m.get("centering") or []],
        gtt_mode=m["gtt_mode"],
        residual=bool(m.get("residual", False)),
    )
