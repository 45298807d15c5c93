"""Sparse graph DKM forward pass, variational head and ELBO."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np

from gdkm.autodiff import ops
from gdkm.autodiff.tape import Var, value_of
from gdkm.dkm.model import DkmModel
from gdkm.dkm.objective import DegenerateSigma, kl_from_factor
from gdkm.errors import DimensionMismatch
from gdkm.graphs.batching import mean_pool_matrix
from gdkm.kernels.blocks import BlockGram, add_blocks, input_blocks
from gdkm.kernels.centering import center_block
from gdkm.kernels.convolution import graph_conv_block
from gdkm.kernels.nonlinearity import apply_kernel
from gdkm.numerics.random import stream

# Stream key for evaluation-time Monte-Carlo draws; epochs use their own index.
EVAL_STREAM_KEY = 2**31 - 1


@dataclass(frozen=True)
class DataBlocks:
    """Inputs of the sparse forward pass.

    ``features`` rows are the scheme's test nodes (all nodes unless the
    scheme says otherwise). For the graph task, ``labels`` and
    ``train_index`` refer to graphs and ``graph_offsets`` delimits them.
    """

    features: np.ndarray
    labels: np.ndarray
    train_index: np.ndarray
    task: Literal["node", "graph"] = "node"
    graph_offsets: Optional[np.ndarray] = None
    input_scale: Optional[float] = None

    def __post_init__(self) -> None:
        if self.task == "graph" and self.graph_offsets is None:
            raise ValueError("graph task needs graph_offsets")


@dataclass(frozen=True)
class KernelStack:
    grams: List[BlockGram]
    kl_layers: List[Var]
    top: BlockGram


@dataclass(frozen=True)
class ObjectiveTerms:
    objective: Var
    loglik: Var
    weight_kl: Var
    kl_layers: List[Var]

    def summary(self) -> Dict[str, object]:
        return {
            "objective": float(self.objective),
            "loglik": float(self.loglik),
            "weight_kl": float(self.weight_kl),
            "kl_layers": [float(k) for k in self.kl_layers],
        }


def _resolve(model: DkmModel, params: Optional[Mapping[str, object]]) -> Dict[str, object]:
    base: Dict[str, object] = dict(model.parameters())
    if params:
        base.update(params)
    return base


def propagate_layer(k: BlockGram, l_param, gtt_mode: str = "nystrom") -> Tuple[BlockGram, Var]:
    """One Gram layer from the convolved kernel K and the factor L.

    F_i = H L and F_t = K_ti H⁻ᵀ L with H = chol(K_ii) give G_ii = F_i F_iᵀ
    and G_ti = F_t F_iᵀ. The Nyström G_tt keeps only diag(F_t F_tᵀ); the
    exact mode adds the Schur complement K_tt − K_ti K_ii⁻¹ K_it.
    """
    h = ops.cholesky(k.ii)
    a = ops.tri_solve(h, ops.transpose(k.ti), side="left")
    l = ops.tril(l_param)
    f_i = ops.matmul(h, l)
    f_t = ops.matmul(ops.transpose(a), l)
    g_ii = ops.matmul(f_i, ops.transpose(f_i))
    g_ti = ops.matmul(f_t, ops.transpose(f_i))
    if gtt_mode == "nystrom":
        g = BlockGram(ii=g_ii, ti=g_ti, tt=ops.row_sum_squares(f_t), tt_full=False)
    elif gtt_mode == "exact":
        if k.tt is None or not k.tt_full:
            raise ValueError("exact G_tt propagation needs the full test-test kernel block")
        schur = ops.sub(k.tt, ops.matmul(ops.transpose(a), a))
        g = BlockGram(ii=g_ii, ti=g_ti, tt=ops.add(schur, ops.matmul(f_t, ops.transpose(f_t))), tt_full=True)
    else:
        raise ValueError(f"unknown gtt_mode: {gtt_mode!r}")
    return g, kl_from_factor(l)


def sparse_forward(model: DkmModel, data: DataBlocks, params: Optional[Mapping[str, object]] = None) -> KernelStack:
    """Run every Gram layer; ``params`` may hold tracked Vars overriding the model's values."""
    p = _resolve(model, params)
    scheme = model.scheme
    x = np.asarray(data.features, dtype=np.float64)
    if x.shape[0] != scheme.num_test:
        raise DimensionMismatch(f"features have {x.shape[0]} rows but the scheme has {scheme.num_test} test nodes")
    if x.shape[1] != model.inducing_inputs.shape[1]:
        raise DimensionMismatch("feature width differs from the inducing inputs")
    g = input_blocks(model.inducing_inputs, x, full_tt=model.gtt_mode == "exact", scale=data.input_scale)
    grams: List[BlockGram] = []
    kls: List[Var] = []
    for ell in range(1, model.depth + 1):
        k = apply_kernel(g, model.base_kernel)
        centering = model.layer_centering(ell)
        if centering.enabled:
            k = center_block(k, centering, p.get(f"gamma_{ell}"), p.get(f"beta_{ell}"))
        k = graph_conv_block(k, scheme.a_ii, scheme.a_ti, scheme.a_tt)
        if model.residual:
            k = add_blocks(k, g)
        g, kl = propagate_layer(k, p[f"layer_{ell}"], model.gtt_mode)
        grams.append(g)
        kls.append(kl)
    return KernelStack(grams=grams, kl_layers=kls, top=apply_kernel(g, model.base_kernel))


def head_features(kernel_top: BlockGram) -> Var:
    """K_ti H⁻ᵀ with H = chol(K_ii); logits are this times W."""
    h = ops.cholesky(kernel_top.ii)
    return ops.transpose(ops.tri_solve(h, ops.transpose(kernel_top.ti), side="left"))


def weight_kl(mu, sigma_chol) -> Var:
    """Σ_λ KL(N(μ_λ, S Sᵀ) || N(0, I)) in closed form."""
    s = ops.tril(sigma_chol)
    if np.any(np.diag(value_of(s)) == 0.0):
        raise DegenerateSigma("head covariance factor has a zero on its diagonal")
    p_i, c = np.shape(mu)
    per_column = ops.sub(ops.sub(ops.sum_squares(s), float(p_i)), ops.mul(ops.sum_log_abs_diag(s), 2.0))
    return ops.mul(ops.add(ops.mul(per_column, float(c)), ops.sum_squares(mu)), 0.5)


def _logits(z, mu, s, rng: np.random.Generator, data: DataBlocks, graphs: Optional[np.ndarray]) -> Var:
    eps = rng.standard_normal(np.shape(mu))
    w = ops.add(mu, ops.matmul(s, eps))
    logits = ops.matmul(z, w)
    if data.task == "graph":
        logits = ops.spmatmul(mean_pool_matrix(data.graph_offsets, graphs), logits)
    return logits


def head_log_likelihood(
    kernel_top: BlockGram,
    mu,
    sigma_chol,
    data: DataBlocks,
    mc_samples: int = 1,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Var, Var]:
    """(Monte-Carlo expected log-likelihood over the training rows, weight KL)."""
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    rng = rng if rng is not None else stream(0, "mc", 0)
    kl = weight_kl(mu, sigma_chol)
    s = ops.tril(sigma_chol)
    z = head_features(kernel_top)
    train = np.asarray(data.train_index, dtype=np.int64)
    labels = np.asarray(data.labels, dtype=np.int64)[train]
    if data.task == "node":
        z = ops.take_rows(z, train)
        graphs = None
    else:
        graphs = train
    samples = [
        ops.log_softmax_likelihood(_logits(z, mu, s, rng, data, graphs), labels)
        for _ in range(mc_samples)
    ]
    return ops.mean(samples), kl


def objective_terms(
    model: DkmModel,
    data: DataBlocks,
    params: Optional[Mapping[str, object]] = None,
    seed: int = 0,
    epoch: int = 0,
    mc_samples: Optional[int] = None,
) -> ObjectiveTerms:
    """E_Q[log P(Y | K, W)] − KL(weights) − Σ_ℓ ν_ℓ KL(G_ii^ℓ || A_ii K(G_ii^{ℓ−1}) A_iiᵀ)."""
    p = _resolve(model, params)
    stack = sparse_forward(model, data, p)
    loglik, wkl = head_log_likelihood(
        stack.top,
        p["head_mu"],
        p["head_sigma_chol"],
        data,
        mc_samples=mc_samples or model.head.mc_samples,
        rng=stream(seed, "mc", epoch),
    )
    objective = ops.sub(loglik, wkl)
    for ell, kl in enumerate(stack.kl_layers, start=1):
        nu = model.nu[ell - 1]
        if model.is_frozen(ell) or nu == 0.0:
            continue
        objective = ops.sub(objective, ops.mul(kl, nu))
    return ObjectiveTerms(objective=objective, loglik=loglik, weight_kl=wkl, kl_layers=stack.kl_layers)


def sparse_objective(
    model: DkmModel,
    data: DataBlocks,
    params: Optional[Mapping[str, object]] = None,
    seed: int = 0,
    epoch: int = 0,
) -> Var:
    return objective_terms(model, data, params, seed=seed, epoch=epoch).objective


def predict_proba(
    model: DkmModel,
    data: DataBlocks,
    mc_samples: Optional[int] = None,
    seed: int = 0,
    stack: Optional[KernelStack] = None,
) -> np.ndarray:
    """Class probabilities averaged over weight samples, one row per node (or graph)."""
    stack = stack or sparse_forward(model, data)
    z = head_features(stack.top)
    s = ops.tril(model.head.sigma_chol)
    rng = stream(seed, "mc", EVAL_STREAM_KEY)
    n = mc_samples or model.head.mc_samples
    total = None
    for _ in range(n):
        probs = ops.softmax(_logits(z, model.head.mu, s, rng, data, None))
        total = probs if total is None else total + probs
    return total / n


def accuracy(probs: np.ndarray, labels: np.ndarray, index: np.ndarray) -> float:
    index = np.asarray(index, dtype=np.int64)
    if index.size == 0:
        return float("nan")
    pred = np.argmax(probs[index], axis=1)
    return float(np.mean(pred == np.asarray(labels)[index]))
