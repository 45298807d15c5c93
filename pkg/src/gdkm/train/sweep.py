"""ν × scheme × seed grids run as independent cells.

Depth, inducing-point count and centering are optional extra axes; each adds
a CSV column only when it is swept.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gdkm.runtime.jsonio import atomic_write_json, jsonable
from gdkm.runtime.logging import LogLevel, log_message

CSV_COLUMNS = ["dataset", "nu", "scheme", "seed", "val_acc", "test_acc"]
OPTIONAL_AXES = ("depth", "num_inducing", "centering")
# centering mode -> (centering, learn_affine)
CENTERING_FLAGS: Dict[str, Tuple[bool, bool]] = {
    "none": (False, False),
    "fixed": (True, False),
    "learned": (True, True),
}


@dataclass(frozen=True)
class SweepCell:
    nu: float
    scheme: str
    seed: int
    depth: Optional[int] = None
    num_inducing: Optional[int] = None
    centering: Optional[str] = None

    def axes(self) -> Dict[str, object]:
        """Optional axes this cell sets."""
        return {name: getattr(self, name) for name in OPTIONAL_AXES if getattr(self, name) is not None}


@dataclass
class SweepRow:
    dataset: str
    nu: float
    scheme: str
    seed: int
    val_acc: float
    test_acc: float
    depth: Optional[int] = None
    num_inducing: Optional[int] = None
    centering: Optional[str] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


CellFn = Callable[[SweepCell], Tuple[float, float]]


def _run_cell(cell_fn: CellFn, dataset: str, cell: SweepCell) -> SweepRow:
    axes = cell.axes()
    try:
        val_acc, test_acc = cell_fn(cell)
    except Exception as exc:  # a failed cell is recorded, the sweep goes on
        log_message("sweep cell failed", LogLevel.WARN, nu=cell.nu, scheme=cell.scheme, seed=cell.seed, reason=str(exc), **axes)
        return SweepRow(
            dataset, cell.nu, cell.scheme, cell.seed, math.nan, math.nan, error=f"{type(exc).__name__}: {exc}", **axes
        )
    return SweepRow(dataset, cell.nu, cell.scheme, cell.seed, float(val_acc), float(test_acc), **axes)


def grid_cells(
    nu_grid: Sequence[float],
    schemes: Sequence[str],
    seeds: Sequence[int],
    depths: Optional[Sequence[int]] = None,
    num_inducing: Optional[Sequence[int]] = None,
    centering: Optional[Sequence[str]] = None,
) -> List[SweepCell]:
    if not nu_grid or not schemes or not seeds:
        raise ValueError("sweep grids must be non-empty")
    unknown = [c for c in centering or [] if c not in CENTERING_FLAGS]
    if unknown:
        raise ValueError(f"unknown centering mode: {unknown[0]!r}")
    depth_axis: Sequence[Optional[int]] = list(depths) if depths else [None]
    inducing_axis: Sequence[Optional[int]] = list(num_inducing) if num_inducing else [None]
    centering_axis: Sequence[Optional[str]] = list(centering) if centering else [None]
    return [
        SweepCell(
            nu=float(nu),
            scheme=scheme,
            seed=int(seed),
            depth=depth,
            num_inducing=None if p_i is None else int(p_i),
            centering=mode,
        )
        for depth, p_i, mode, nu, scheme, seed in product(
            depth_axis, inducing_axis, centering_axis, nu_grid, schemes, seeds
        )
    ]


@dataclass
class SweepTable:
    rows: List[SweepRow]

    def swept_axes(self) -> List[str]:
        return [name for name in OPTIONAL_AXES if any(getattr(r, name) is not None for r in self.rows)]

    def columns(self) -> List[str]:
        return CSV_COLUMNS[:1] + self.swept_axes() + CSV_COLUMNS[1:]

    def write_csv(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        columns = self.columns()
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for r in self.rows:
                record = asdict(r)
                writer.writerow([_fmt(record[c]) for c in columns])

    def failures(self) -> List[SweepRow]:
        return [r for r in self.rows if r.failed]

    def write_failures(self, path: Path) -> None:
        with path.open("w", encoding="utf-8") as fh:
            for r in self.failures():
                fh.write(json.dumps(jsonable({k: v for k, v in asdict(r).items() if k not in ("val_acc", "test_acc")})) + "\n")

    def aggregate(self) -> List[Dict[str, object]]:
        """Mean and (population) std of accuracies per grid point over seeds, failed cells excluded."""
        groups: Dict[Tuple, List[SweepRow]] = {}
        for r in self.rows:
            key = (r.dataset, r.depth, r.num_inducing, r.centering, r.nu, r.scheme)
            groups.setdefault(key, []).append(r)
        out = []
        for (dataset, depth, num_inducing, centering, nu, scheme), rows in groups.items():
            ok = [r for r in rows if not r.failed]
            val = np.array([r.val_acc for r in ok], dtype=np.float64)
            test = np.array([r.test_acc for r in ok], dtype=np.float64)
            out.append(
                {
                    "dataset": dataset,
                    "depth": depth,
                    "num_inducing": num_inducing,
                    "centering": centering,
                    "nu": nu,
                    "scheme": scheme,
                    "runs": len(ok),
                    "failed": len(rows) - len(ok),
                    "val_mean": float(val.mean()) if val.size else math.nan,
                    "val_std": float(val.std()) if val.size else math.nan,
                    "test_mean": float(test.mean()) if test.size else math.nan,
                    "test_std": float(test.std()) if test.size else math.nan,
                }
            )
        return out

    def best(self) -> Dict[str, Dict[str, object]]:
        """Best grid point per dataset by mean validation accuracy."""
        best: Dict[str, Dict[str, object]] = {}
        for entry in self.aggregate():
            if math.isnan(entry["val_mean"]):
                continue
            current = best.get(entry["dataset"])
            if current is None or entry["val_mean"] > current["val_mean"]:
                best[entry["dataset"]] = entry
        return best

    def write_summary(self, path: Path) -> None:
        payload = {"groups": self.aggregate(), "best": self.best()}
        atomic_write_json(path, payload)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def sweep_nu(
    cell_fn: CellFn,
    nu_grid: Sequence[float],
    schemes: Sequence[str],
    seeds: Sequence[int],
    *,
    dataset: str = "",
    depths: Optional[Sequence[int]] = None,
    num_inducing: Optional[Sequence[int]] = None,
    centering: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> SweepTable:
    """Run ``cell_fn`` on every grid cell; ``cell_fn`` returns (val_acc, test_acc).

    With ``jobs > 1`` cells run in worker processes, so ``cell_fn`` must be
    picklable (a module-level function or a partial of one). Row order
    follows the grid regardless of completion order.
    """
    cells = grid_cells(nu_grid, schemes, seeds, depths, num_inducing, centering)
    log_message("sweep started", LogLevel.INFO, cells=len(cells), jobs=jobs)
    if jobs <= 1 or len(cells) == 1:
        rows = [_run_cell(cell_fn, dataset, c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, [cell_fn] * len(cells), [dataset] * len(cells), cells))
    return SweepTable(rows=rows)
