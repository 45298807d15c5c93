"""Full-batch training loops: the sparse DKM and the full-rank linear solver."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from gdkm.autodiff import ops
from gdkm.autodiff.tape import NonFiniteGradient, evaluate, value_and_grad, value_of
from gdkm.dkm.forward import DataBlocks, accuracy, objective_terms, predict_proba
from gdkm.dkm.linear import wishart_gram
from gdkm.dkm.model import DkmModel
from gdkm.dkm.objective import full_rank_objective
from gdkm.errors import NumericError
from gdkm.graphs.adjacency import NormalizedAdjacency
from gdkm.kernels.convolution import graph_conv
from gdkm.kernels.nonlinearity import apply_kernel_dense
from gdkm.nngp.recursion import NngpConfig, nngp_forward
from gdkm.numerics import linalg
from gdkm.runtime.jsonio import jsonable
from gdkm.runtime.logging import LogLevel, log_message
from gdkm.train.optim import Adam, clip_by_global_norm
from gdkm.train.schedule import LrSchedule, PolynomialSchedule

DEFAULT_CLIP_NORM = 100.0


class Diverged(NumericError):
    """Training hit a non-finite objective; ``last_good`` is the model before the failing epoch."""

    def __init__(self, message: str, last_good, epoch: int, records: Optional[list] = None):
        super().__init__(message)
        self.last_good = last_good
        self.epoch = epoch
        self.records = list(records or [])


@dataclass
class EpochRecord:
    epoch: int
    objective: float
    loglik: float
    kl_layers: List[float]
    lr: float
    train_acc: float
    val_acc: float
    wall_ms: float

    def to_mapping(self) -> dict:
        return asdict(self)


class MetricsLog:
    """Append-only JSON-lines metrics file (in-memory when ``path`` is None)."""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path is not None else None
        self.records: List[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def append(self, record: Mapping[str, object]) -> None:
        payload = dict(record)
        self.records.append(payload)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(jsonable(payload)) + "\n")


@dataclass
class FitResult:
    model: DkmModel
    records: List[EpochRecord] = field(default_factory=list)

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]


def evaluate_model(
    model: DkmModel,
    data: DataBlocks,
    val_index: np.ndarray,
    *,
    seed: int,
    epoch: int,
    lr: float,
    mc_samples_eval: int = 16,
) -> EpochRecord:
    terms = objective_terms(model, data, None, seed=seed, epoch=epoch)
    probs = predict_proba(model, data, mc_samples=mc_samples_eval, seed=seed)
    return EpochRecord(
        epoch=epoch,
        objective=float(terms.objective),
        loglik=float(terms.loglik),
        kl_layers=[float(k) for k in terms.kl_layers],
        lr=float(lr),
        train_acc=accuracy(probs, data.labels, data.train_index),
        val_acc=accuracy(probs, data.labels, val_index),
        wall_ms=0.0,
    )


def fit(
    model: DkmModel,
    data: DataBlocks,
    val_index: np.ndarray,
    schedule: LrSchedule,
    epochs: int,
    seed: int = 0,
    *,
    clip_norm: float = DEFAULT_CLIP_NORM,
    mc_samples_eval: int = 16,
    metrics: Optional[MetricsLog] = None,
) -> FitResult:
    """Maximize the sparse objective with Adam, one full-batch step per epoch.

    Record 0 evaluates the initial model; record e evaluates the parameters
    after step e, so the log holds ``epochs + 1`` records.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    metrics = metrics if metrics is not None else MetricsLog()
    records: List[EpochRecord] = []

    def _emit(rec: EpochRecord) -> None:
        records.append(rec)
        metrics.append(rec.to_mapping())
        log_message(
            "epoch done",
            LogLevel.TRACE,
            epoch=rec.epoch,
            objective=f"{rec.objective:.6g}",
            train_acc=f"{rec.train_acc:.4f}",
            val_acc=f"{rec.val_acc:.4f}",
        )

    _emit(evaluate_model(model, data, val_index, seed=seed, epoch=0, lr=schedule(0), mc_samples_eval=mc_samples_eval))

    trainable = model.trainable()
    params: Dict[str, np.ndarray] = model.parameters()
    optimizer = Adam()
    state = optimizer.init({n: params[n] for n in trainable})

    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        lr = schedule(epoch - 1)
        current = model
        try:
            _, grads = value_and_grad(
                lambda p, e=epoch: objective_terms(current, data, p, seed=seed, epoch=e).objective,
                params,
                trainable,
            )
            ascent, norm, clipped = clip_by_global_norm({n: -g for n, g in grads.items()}, clip_norm)
            if clipped:
                log_message("gradient clipped", LogLevel.WARN, epoch=epoch, norm=f"{norm:.4g}", max_norm=clip_norm)
            updated, state = optimizer.update({n: params[n] for n in trainable}, ascent, state, lr)
            bad = [n for n, v in updated.items() if not np.all(np.isfinite(v))]
            if bad:
                raise NonFiniteGradient(f"non-finite parameters after the update: {', '.join(bad)}")
            params = {**params, **updated}
            candidate = model.with_parameters(params)
            rec = evaluate_model(
                candidate, data, val_index, seed=seed, epoch=epoch, lr=lr, mc_samples_eval=mc_samples_eval
            )
            if not math.isfinite(rec.objective):
                raise NumericError(f"objective is {rec.objective}")
        except NumericError as exc:
            log_message("training diverged", LogLevel.WARN, epoch=epoch, reason=str(exc))
            raise Diverged(f"training diverged at epoch {epoch}: {exc}", last_good=model, epoch=epoch, records=records) from exc
        model = candidate
        rec.wall_ms = (time.perf_counter() - started) * 1000.0
        _emit(rec)

    return FitResult(model=model, records=records)


@dataclass
class FullRankResult:
    grams: List[np.ndarray]
    objective: float
    records: List[dict] = field(default_factory=list)


def init_full_rank(
    g0: np.ndarray,
    a: NormalizedAdjacency,
    depth: int,
    init: str = "nngp",
    base_kernel: str = "linear",
    seed: int = 0,
    wishart_dof: Optional[int] = None,
) -> List[np.ndarray]:
    """Starting Gram matrices: the NNGP recursion, or Wishart draws around it."""
    nngp = nngp_forward(g0, NngpConfig(depth=depth, base_kernel=base_kernel, adjacency=a))
    if init == "nngp":
        return nngp
    if init == "wishart":
        dof = wishart_dof or 2 * g0.shape[0]
        return [wishart_gram(g, dof, seed, key=ell) for ell, g in enumerate(nngp, start=1)]
    raise ValueError(f"unknown init: {init!r}")


def fit_full_rank(
    g0: np.ndarray,
    a: NormalizedAdjacency,
    nu: Sequence[float],
    likelihood,
    epochs: int,
    *,
    base_kernel: str = "linear",
    init: str = "nngp",
    seed: int = 0,
    schedule: Optional[Callable[[float], float]] = None,
    clip_norm: float = DEFAULT_CLIP_NORM,
    wishart_dof: Optional[int] = None,
    metrics: Optional[MetricsLog] = None,
) -> FullRankResult:
    """Gradient ascent on the full-rank objective over Cholesky factors of G¹..G^L."""
    depth = len(nu)
    schedule = schedule or PolynomialSchedule(total_epochs=epochs)
    metrics = metrics if metrics is not None else MetricsLog()
    start = init_full_rank(g0, a, depth, init=init, base_kernel=base_kernel, seed=seed, wishart_dof=wishart_dof)
    params = {f"gram_{ell}": linalg.cholesky(g).factor for ell, g in enumerate(start, start=1)}
    trainable = [f"gram_{ell}" for ell in range(1, depth + 1) if not math.isinf(nu[ell - 1])]

    def objective(p):
        grams = []
        for ell in range(1, depth + 1):
            v = ops.tril(p[f"gram_{ell}"])
            grams.append(ops.matmul(v, ops.transpose(v)))
        return full_rank_objective(grams, g0, a, nu, likelihood, base_kernel=base_kernel)

    optimizer = Adam()
    state = optimizer.init({n: params[n] for n in trainable})
    value = evaluate(objective, params)
    metrics.append({"epoch": 0, "objective": value, "lr": float(schedule(0)), "wall_ms": 0.0})
    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        lr = schedule(epoch - 1)
        _, grads = value_and_grad(objective, params, trainable)
        ascent, norm, clipped = clip_by_global_norm({n: -g for n, g in grads.items()}, clip_norm)
        if clipped:
            log_message("gradient clipped", LogLevel.WARN, epoch=epoch, norm=f"{norm:.4g}", max_norm=clip_norm)
        updated, state = optimizer.update({n: params[n] for n in trainable}, ascent, state, lr)
        params = {**params, **updated}
        value = evaluate(objective, params)
        if not math.isfinite(value):
            raise Diverged(f"full-rank objective diverged at epoch {epoch}", last_good=None, epoch=epoch)
        metrics.append(
            {"epoch": epoch, "objective": value, "lr": float(lr), "wall_ms": (time.perf_counter() - started) * 1000.0}
        )

    grams: List[np.ndarray] = []
    prev = g0
    for ell in range(1, depth + 1):
        if math.isinf(nu[ell - 1]):
            g = value_of(graph_conv(apply_kernel_dense(prev, base_kernel), a))
        else:
            v = np.tril(params[f"gram_{ell}"])
            g = v @ v.T
        prev = linalg.symmetrize(g)
        grams.append(prev)
    return FullRankResult(grams=grams, objective=value, records=metrics.records)
