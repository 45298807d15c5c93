from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import PurePosixPath
from typing import Any, Dict, Iterable

import numpy as np

from gdkm.dataio.dataset import SchemaError

CHECKPOINT_SUFFIX = ".gdkmckpt"
CHECKPOINT_FORMAT = "gdkm-checkpoint"
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"
ARRAY_DIR = "arrays/"


class CheckpointContractError(SchemaError):
    def __init__(self, errors: list[str]):
        super().__init__("checkpoint contract validation failed")
        self.errors = errors

    def __str__(self) -> str:
        lines = ["checkpoint contract validation failed:"]
        lines.extend(f"- {e}" for e in self.errors)
        return "\n".join(lines)


@dataclass(frozen=True)
class CheckpointContents:
    manifest: Dict[str, Any]
    arrays: Dict[str, np.ndarray]

    @property
    def depth(self) -> int:
        return int(self.manifest["model"]["depth"])


def is_checkpoint_path(path: str) -> bool:
    return str(path).lower().endswith(CHECKPOINT_SUFFIX)


def array_member(name: str) -> str:
    return f"{ARRAY_DIR}{name}.npy"


def validate_checkpoint_contract(path: str) -> CheckpointContents:
    """Validate a .gdkmckpt archive and return its manifest and arrays.

    Raises:
        CheckpointContractError: if any contract violations are found.
    """

    errors: list[str] = []

    if not is_checkpoint_path(path):
        raise CheckpointContractError([f"Not a checkpoint: {str(path)!r} (expected a path ending in {CHECKPOINT_SUFFIX})"])

    try:
        with zipfile.ZipFile(path) as zf:
            members = [n for n in zf.namelist() if not n.endswith("/")]
            _validate_forbidden_paths(members, errors)
            if MANIFEST_NAME not in members:
                errors.append(f"Missing {MANIFEST_NAME} at archive root")
            if errors:
                raise CheckpointContractError(errors)
            manifest_raw = zf.read(MANIFEST_NAME).decode("utf-8")
            payloads = {n: zf.read(n) for n in members if n.startswith(ARRAY_DIR)}
    except zipfile.BadZipFile:
        raise CheckpointContractError([f"Invalid ZIP archive: {str(path)!r}"])
    except FileNotFoundError:
        raise CheckpointContractError([f"File not found: {str(path)!r}"])

    manifest = _parse_manifest(manifest_raw, errors)
    arrays = _load_arrays(manifest, payloads, errors)
    if not errors:
        _validate_shapes(manifest, arrays, errors)

    if errors:
        raise CheckpointContractError(errors)
    return CheckpointContents(manifest=manifest, arrays=arrays)


def _validate_forbidden_paths(members: Iterable[str], errors: list[str]) -> None:
    for name in members:
        p = PurePosixPath(name)
        if p.is_absolute() or ".." in p.parts:
            errors.append(f"Forbidden path entry: {name!r} (must be relative and not escape root)")


def _parse_manifest(raw: str, errors: list[str]) -> dict[str, Any]:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        errors.append(f"{MANIFEST_NAME} is not valid JSON: {e}")
        return {}

    if not isinstance(data, dict):
        errors.append(f"{MANIFEST_NAME} must be a JSON object")
        return {}

    if data.get("format") != CHECKPOINT_FORMAT:
        errors.append(f"{MANIFEST_NAME}: 'format' must be {CHECKPOINT_FORMAT!r} (got {data.get('format')!r})")
    if data.get("format_version") != CHECKPOINT_VERSION:
        errors.append(
            f"{MANIFEST_NAME}: unsupported 'format_version' {data.get('format_version')!r} (expected {CHECKPOINT_VERSION})"
        )

    model = data.get("model")
    if not isinstance(model, dict):
        errors.append(f"{MANIFEST_NAME}: 'model' must be an object")
        return data

    for key in ("depth", "num_inducing", "num_classes", "num_features", "mc_samples"):
        value = model.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            errors.append(f"{MANIFEST_NAME}: model.{key} must be a positive integer")
    for key in ("base_kernel", "gtt_mode"):
        if not isinstance(model.get(key), str):
            errors.append(f"{MANIFEST_NAME}: model.{key} must be a string")

    nu = model.get("nu")
    if not isinstance(nu, list) or not all(isinstance(v, (int, float)) or v == "inf" for v in nu):
        errors.append(f"{MANIFEST_NAME}: model.nu must be a list of numbers or 'inf'")
    elif isinstance(model.get("depth"), int) and len(nu) != model["depth"]:
        errors.append(f"{MANIFEST_NAME}: model.nu has {len(nu)} entries for depth {model['depth']}")

    scheme = model.get("scheme")
    if not isinstance(scheme, dict) or scheme.get("kind") not in ("inter", "intra"):
        errors.append(f"{MANIFEST_NAME}: model.scheme.kind must be 'inter' or 'intra'")
    elif scheme["kind"] == "intra" and not isinstance(scheme.get("indices"), list):
        errors.append(f"{MANIFEST_NAME}: intra-domain scheme needs model.scheme.indices")

    centering = model.get("centering", [])
    if not isinstance(centering, list):
        errors.append(f"{MANIFEST_NAME}: model.centering must be a list")

    dataset = data.get("dataset")
    if not isinstance(dataset, dict) or not isinstance(dataset.get("num_nodes"), int):
        errors.append(f"{MANIFEST_NAME}: dataset.num_nodes is required")

    if not isinstance(data.get("arrays"), list) or not data["arrays"]:
        errors.append(f"{MANIFEST_NAME}: 'arrays' must be a non-empty list")

    return data


def _load_arrays(manifest: dict[str, Any], payloads: Dict[str, bytes], errors: list[str]) -> Dict[str, np.ndarray]:
    declared = manifest.get("arrays") if isinstance(manifest.get("arrays"), list) else []
    arrays: Dict[str, np.ndarray] = {}
    expected_members = set()
    for name in declared:
        member = array_member(str(name))
        expected_members.add(member)
        raw = payloads.get(member)
        if raw is None:
            errors.append(f"Missing array {member!r} declared in {MANIFEST_NAME}")
            continue
        try:
            arrays[str(name)] = np.load(io.BytesIO(raw), allow_pickle=False)
        except (ValueError, OSError) as e:
            errors.append(f"Array {member!r} is not a valid .npy file: {e}")
    extra = sorted(set(payloads) - expected_members)
    if extra:
        errors.append("Archive contains arrays not declared in manifest.json: " + ", ".join(extra))
    return arrays


def _validate_shapes(manifest: dict[str, Any], arrays: Dict[str, np.ndarray], errors: list[str]) -> None:
    model = manifest["model"]
    depth = model["depth"]
    p_i = model["num_inducing"]
    required = {
        "inducing_inputs": (p_i, model["num_features"]),
        "head_mu": (p_i, model["num_classes"]),
        "head_sigma_chol": (p_i, p_i),
    }
    required.update({f"layer_{ell}": (p_i, p_i) for ell in range(1, depth + 1)})
    for name, shape in required.items():
        arr = arrays.get(name)
        if arr is None:
            errors.append(f"Missing required array {name!r}")
            continue
        if arr.shape != shape:
            errors.append(f"Array {name!r} has shape {arr.shape}, expected {shape}")
        elif arr.dtype != np.float64:
            errors.append(f"Array {name!r} must be float64 (got {arr.dtype})")
        elif not np.all(np.isfinite(arr)):
            errors.append(f"Array {name!r} contains non-finite values")
    for ell in range(1, depth + 1):
        arr = arrays.get(f"layer_{ell}")
        if arr is not None and arr.shape == (p_i, p_i) and np.any(np.diag(arr) <= 0.0):
            errors.append(f"Array 'layer_{ell}' must have a positive diagonal")
    scheme = model["scheme"]
    if scheme["kind"] == "intra" and len(scheme["indices"]) != p_i:
        errors.append(f"model.scheme.indices has {len(scheme['indices'])} entries for {p_i} inducing points")
