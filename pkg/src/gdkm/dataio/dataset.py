"""On-disk graph datasets: features.csv, edges.txt, labels.csv, splits.json, graph_id.csv."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np

from gdkm.errors import DataError
from gdkm.graphs.adjacency import EdgeList, GraphError
from gdkm.numerics.random import stream

FEATURES_FILE = "features.csv"
EDGES_FILE = "edges.txt"
LABELS_FILE = "labels.csv"
SPLITS_FILE = "splits.json"
GRAPH_ID_FILE = "graph_id.csv"

Task = Literal["node", "graph"]


class ParseError(DataError):
    """A line of a dataset file could not be parsed."""

    def __init__(self, message: str, path: str, line: int, field: Optional[int] = None):
        self.path = path
        self.line = line
        self.field = field
        where = f"{path} line {line}" + (f" field {field}" if field is not None else "")
        super().__init__(f"{where}: {message}")


class SchemaError(DataError):
    pass


@dataclass(frozen=True)
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, size: int, what: str = "nodes") -> None:
        parts = {"train": self.train, "val": self.val, "test": self.test}
        for name, idx in parts.items():
            if idx.size and (idx.min() < 0 or idx.max() >= size):
                raise SchemaError(f"{name} split refers to {what} outside 0..{size - 1}")
            if np.unique(idx).size != idx.size:
                raise SchemaError(f"{name} split has duplicate entries")
        names = list(parts)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                if np.intersect1d(parts[a], parts[b]).size:
                    raise SchemaError(f"{a} and {b} splits overlap")

    def to_mapping(self) -> Dict[str, List[int]]:
        return {k: [int(i) for i in getattr(self, k)] for k in ("train", "val", "test")}

    @classmethod
    def from_mapping(cls, data: Dict[str, object]) -> "Splits":
        missing = [k for k in ("train", "val", "test") if k not in data]
        if missing:
            raise SchemaError(f"split is missing {', '.join(missing)}")
        try:
            return cls(**{k: np.asarray(data[k], dtype=np.int64).reshape(-1) for k in ("train", "val", "test")})
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"split indices must be integers: {exc}") from exc


@dataclass(frozen=True)
class GraphDataset:
    """Features, labels, graph structure and splits of one dataset.

    For the graph task nodes are ordered so every graph is a contiguous
    block; ``labels`` and the splits then refer to graphs.
    """

    name: str
    features: np.ndarray
    labels: np.ndarray
    edges: EdgeList
    folds: List[Splits]
    task: Task = "node"
    graph_ids: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise SchemaError("features must be a matrix")
        if not np.all(np.isfinite(self.features)):
            raise SchemaError("features contain non-finite values")
        if self.edges.num_nodes != self.features.shape[0]:
            raise SchemaError("edge list and features disagree on the number of nodes")
        if self.labels.size and self.labels.min() < 0:
            raise SchemaError("labels must be non-negative")
        if not self.folds:
            raise SchemaError("dataset needs at least one split")
        if self.task == "node":
            if self.labels.shape[0] != self.num_nodes:
                raise SchemaError(f"{self.labels.shape[0]} labels for {self.num_nodes} nodes")
        else:
            if self.graph_ids is None or self.graph_ids.shape[0] != self.num_nodes:
                raise SchemaError("graph task needs one graph id per node")
            if np.any(np.diff(self.graph_ids) < 0):
                raise SchemaError("graph ids must be sorted so graphs are contiguous")
            if self.graph_ids[-1] + 1 != self.labels.shape[0]:
                raise SchemaError("graph ids must cover 0..num_graphs-1")
        for s in self.folds:
            s.validate(self.num_items, "graphs" if self.task == "graph" else "nodes")

    @property
    def num_nodes(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def num_items(self) -> int:
        """Nodes for the node task, graphs for the graph task."""
        return int(self.labels.shape[0])

    def graph_offsets(self) -> np.ndarray:
        if self.graph_ids is None:
            raise SchemaError("dataset has no graphs")
        counts = np.bincount(self.graph_ids, minlength=self.num_items)
        if np.any(counts == 0):
            raise SchemaError("every graph needs at least one node")
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def split(self, fold: int = 0) -> Splits:
        if not 0 <= fold < len(self.folds):
            raise SchemaError(f"fold {fold} does not exist ({len(self.folds)} available)")
        return self.folds[fold]

    def with_features(self, features: np.ndarray) -> "GraphDataset":
        return replace(self, features=np.asarray(features, dtype=np.float64))


def _lines(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise SchemaError(f"missing dataset file: {path.name}") from exc
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield number, line


def _read_features(path: Path) -> np.ndarray:
    rows: List[List[float]] = []
    width = None
    for number, line in _lines(path):
        values = []
        for j, token in enumerate(line.split(","), start=1):
            try:
                v = float(token)
            except ValueError:
                raise ParseError(f"not a number: {token.strip()!r}", path.name, number, j) from None
            if not np.isfinite(v):
                raise ParseError("non-finite value", path.name, number, j)
            values.append(v)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(f"expected {width} values, found {len(values)}", path.name, number)
        rows.append(values)
    if not rows:
        raise SchemaError(f"{path.name} has no rows")
    return np.asarray(rows, dtype=np.float64)


def _read_edges(path: Path, num_nodes: int) -> EdgeList:
    pairs: List[Tuple[int, int]] = []
    for number, line in _lines(path):
        tokens = line.replace(",", " ").split()
        if len(tokens) != 2:
            raise ParseError(f"expected 'u v', found {len(tokens)} fields", path.name, number)
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ParseError("node ids must be integers", path.name, number) from None
        for node in (u, v):
            if not 0 <= node < num_nodes:
                raise SchemaError(f"{path.name} line {number}: node {node} is out of range for {num_nodes} nodes")
        pairs.append((u, v))
    try:
        return EdgeList.from_pairs(pairs, num_nodes)
    except GraphError as exc:
        raise SchemaError(str(exc)) from exc


def _parse_int(token: str, path: Path, number: int, field_no: int) -> int:
    try:
        return int(token.strip())
    except ValueError:
        raise ParseError(f"not an integer: {token.strip()!r}", path.name, number, field_no) from None


def _is_header(line: str) -> bool:
    try:
        for token in line.split(","):
            int(token.strip())
    except ValueError:
        return True
    return False


def _read_labels(path: Path) -> Tuple[Task, np.ndarray, Optional[np.ndarray]]:
    """Node labels, or (graph ids, graph labels) for ``graph_id,label`` rows."""
    entries = list(_lines(path))
    if entries and _is_header(entries[0][1]):
        entries = entries[1:]
    if not entries:
        raise SchemaError(f"{path.name} has no rows")
    width = len(entries[0][1].split(","))
    if width == 1:
        return "node", np.asarray([_parse_int(line, path, n, 1) for n, line in entries], dtype=np.int64), None
    if width != 2:
        raise ParseError("expected 'label' or 'graph_id,label'", path.name, entries[0][0])
    ids, labels = [], []
    for number, line in entries:
        tokens = line.split(",")
        if len(tokens) != 2:
            raise ParseError("expected 'graph_id,label'", path.name, number)
        ids.append(_parse_int(tokens[0], path, number, 1))
        labels.append(_parse_int(tokens[1], path, number, 2))
    return "graph", np.asarray(labels, dtype=np.int64), np.asarray(ids, dtype=np.int64)


def _read_splits(path: Path) -> List[Splits]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path.name, exc.lineno) from exc
    if isinstance(data, dict) and "folds" in data:
        data = data["folds"]
    if isinstance(data, dict):
        return [Splits.from_mapping(data)]
    if isinstance(data, list) and data and all(isinstance(d, dict) for d in data):
        return [Splits.from_mapping(d) for d in data]
    raise SchemaError(f"{path.name} must be a split mapping or a list of folds")


def stratified_folds(labels: np.ndarray, k: int = 10, seed: int = 0) -> List[Splits]:
    """k stratified folds: fold j tests on part j, validates on part (j+1) mod k, trains on the rest."""
    labels = np.asarray(labels, dtype=np.int64)
    if k < 3:
        raise ValueError("stratified_folds needs k >= 3")
    rng = stream(seed, "split")
    part = np.empty(labels.shape[0], dtype=np.int64)
    offset = 0
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        part[members] = (offset + np.arange(members.size)) % k
        offset += members.size
    folds = []
    for j in range(k):
        test = np.flatnonzero(part == j)
        val = np.flatnonzero(part == (j + 1) % k)
        train = np.flatnonzero((part != j) & (part != (j + 1) % k))
        folds.append(Splits(train=train, val=val, test=test))
    return folds


def load_dataset(directory: Path, name: Optional[str] = None) -> GraphDataset:
    """Read and validate a dataset directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise SchemaError(f"dataset directory not found: {directory}")
    features = _read_features(directory / FEATURES_FILE)
    num_nodes = features.shape[0]
    edges = _read_edges(directory / EDGES_FILE, num_nodes)
    task, labels, label_graph_ids = _read_labels(directory / LABELS_FILE)
    splits_path = directory / SPLITS_FILE

    if task == "node":
        if labels.shape[0] != num_nodes:
            raise SchemaError(f"{LABELS_FILE} has {labels.shape[0]} labels for {num_nodes} nodes")
        if not splits_path.exists():
            raise SchemaError(f"missing dataset file: {SPLITS_FILE}")
        return GraphDataset(
            name=name or directory.name,
            features=features,
            labels=labels,
            edges=edges,
            folds=_read_splits(splits_path),
        )

    gid_path = directory / GRAPH_ID_FILE
    if not gid_path.exists():
        raise SchemaError(f"graph labels need {GRAPH_ID_FILE}")
    node_gids = np.asarray([_parse_int(line, gid_path, n, 1) for n, line in _lines(gid_path)], dtype=np.int64)
    if node_gids.shape[0] != num_nodes:
        raise SchemaError(f"{GRAPH_ID_FILE} has {node_gids.shape[0]} rows for {num_nodes} nodes")
    if np.unique(label_graph_ids).size != label_graph_ids.size:
        raise SchemaError(f"{LABELS_FILE} lists a graph id twice")
    order_ids = np.argsort(label_graph_ids, kind="stable")
    known = label_graph_ids[order_ids]
    pos = np.searchsorted(known, node_gids)
    if np.any(pos >= known.size) or np.any(known[np.minimum(pos, known.size - 1)] != node_gids):
        raise SchemaError(f"{GRAPH_ID_FILE} refers to graphs without a label")
    dense_gid = pos
    graph_labels = labels[order_ids]

    perm = np.argsort(dense_gid, kind="stable")
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size)
    remapped = inverse[edges.edges] if edges.num_edges else edges.edges
    sorted_gid = dense_gid[perm]
    if remapped.size and np.any(sorted_gid[remapped[:, 0]] != sorted_gid[remapped[:, 1]]):
        raise SchemaError("edges must not connect nodes of different graphs")
    folds = _read_splits(splits_path) if splits_path.exists() else stratified_folds(graph_labels, k=10, seed=0)
    return GraphDataset(
        name=name or directory.name,
        features=features[perm],
        labels=graph_labels,
        edges=EdgeList.from_pairs(remapped, num_nodes),
        folds=folds,
        task="graph",
        graph_ids=sorted_gid,
    )


def _write_lines(path: Path, lines) -> None:
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def save_dataset(ds: GraphDataset, directory: Path) -> None:
    """Write ``ds`` in the format :func:`load_dataset` reads (floats are written losslessly)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_lines(directory / FEATURES_FILE, (",".join(repr(float(v)) for v in row) for row in ds.features))
    _write_lines(directory / EDGES_FILE, (f"{u} {v}" for u, v in ds.edges.edges))
    if ds.task == "node":
        _write_lines(directory / LABELS_FILE, (str(int(y)) for y in ds.labels))
    else:
        _write_lines(directory / LABELS_FILE, ["graph_id,label"] + [f"{g},{int(y)}" for g, y in enumerate(ds.labels)])
        _write_lines(directory / GRAPH_ID_FILE, (str(int(g)) for g in ds.graph_ids))
    payload = ds.folds[0].to_mapping() if len(ds.folds) == 1 else {"folds": [s.to_mapping() for s in ds.folds]}
    (directory / SPLITS_FILE).write_text(json.dumps(payload) + "\n", encoding="utf-8")
