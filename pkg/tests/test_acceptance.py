"""End-to-end checks that take minutes; run with ``pytest -m slow``."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from gdkm.autodiff.tape import value_of
from gdkm.dataio.dataset import load_dataset
from gdkm.dkm.linear import closed_form_stack, linear_demo_data
from gdkm.dkm.objective import TargetKernelLikelihood, full_rank_objective
from gdkm.graphs.adjacency import build_adjacency
from gdkm.graphs.homophily import edge_homophily
from gdkm.kernels.alignment import cka, label_kernel, normalize_kernel
from gdkm.nngp.recursion import NngpConfig, nngp_forward
from gdkm.project.config import RunConfigLoader
from gdkm.services.pipeline import build_model, prepare_data, train_and_score
from gdkm.train.fit import fit_full_rank
from gdkm.train.schedule import PolynomialSchedule

pytestmark = pytest.mark.slow


def test_gradient_ascent_reaches_closed_form() -> None:
    data = linear_demo_data(num_nodes=100, edge_prob=0.1, seed=0)
    a = build_adjacency(data.edges, "lambda_interp", 0.5)
    likelihood = TargetKernelLikelihood(data.target)
    optimum = closed_form_stack(data.g0, data.target, a, 2)
    gd = fit_full_rank(
        data.g0, a, [1.0, 1.0], likelihood, 4000, schedule=PolynomialSchedule(total_epochs=4000, init=0.01)
    )
    analytic = float(value_of(full_rank_objective(optimum, data.g0, a, [1.0, 1.0], likelihood)))
    diff = max(float(np.max(np.abs(normalize_kernel(g) - normalize_kernel(c)))) for g, c in zip(gd.grams, optimum))
    assert diff < 1e-3
    assert abs(gd.objective - analytic) < 1e-3


@pytest.mark.parametrize("lam", [0.1, 0.3, 0.5, 1.0])
def test_dkm_aligns_better_with_labels_than_nngp(lam: float) -> None:
    data = linear_demo_data(num_nodes=50, edge_prob=0.1, seed=0)
    a = build_adjacency(data.edges, "lambda_interp", lam)
    target = label_kernel(data.y)
    dkm = closed_form_stack(data.g0, data.target, a, 2)[-1]
    nngp = nngp_forward(data.g0, NngpConfig(depth=2, base_kernel="linear", adjacency=a))[-1]
    assert cka(dkm, target) > cka(nngp, target)


def _mean_val_acc(kind: str, nu: float, seeds=(0, 1, 2)) -> float:
    accs = []
    for seed in seeds:
        base = {
            "dataset": {"synthetic": kind},
            "model": {"depth": 2, "num_inducing": 50, "mc_samples_eval": 8},
            "training": {"epochs": 150},
            "seed": seed,
        }
        cfg = RunConfigLoader(base=base).load()
        prepared = prepare_data(cfg)
        model = build_model(cfg, prepared, nu=nu)
        result, _ = train_and_score(cfg, prepared, model)
        accs.append(result.final.val_acc)
    return float(np.mean(accs))


def test_small_nu_helps_heterophilous_data() -> None:
    gap = _mean_val_acc("heterophilous", 1e-2) - _mean_val_acc("heterophilous", 1e3)
    assert gap >= 0.05


def test_small_nu_is_neutral_on_homophilous_data() -> None:
    gap = _mean_val_acc("homophilous", 1e-2) - _mean_val_acc("homophilous", 1e3)
    assert abs(gap) <= 0.02


def _cora_dir() -> Path:
    raw = os.environ.get("GDKM_CORA_DIR")
    if not raw:
        pytest.skip("set GDKM_CORA_DIR to a Cora dataset directory")
    return Path(raw)


def test_cora_loader_statistics() -> None:
    ds = load_dataset(_cora_dir())
    assert ds.num_nodes == 2708
    assert ds.edges.num_edges == 5278
    assert ds.num_classes == 7
    assert edge_homophily(ds.edges, ds.labels) == pytest.approx(0.81, abs=0.01)


def test_cora_end_to_end_accuracy() -> None:
    root = _cora_dir()
    best = 0.0
    for scheme in ("inter", "intra"):
        base = {"dataset": {"path": str(root)}, "model": {"depth": 2, "scheme": scheme}, "training": {"epochs": 300}}
        cfg = RunConfigLoader(base=base).load()
        prepared = prepare_data(cfg)
        _, test_acc = train_and_score(cfg, prepared, build_model(cfg, prepared))
        best = max(best, test_acc)
    assert best >= 0.76
