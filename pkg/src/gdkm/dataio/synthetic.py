from __future__ import annotations

from typing import Literal

import numpy as np

from gdkm.dataio.dataset import GraphDataset, Splits
from gdkm.graphs.generators import erdos_renyi, planted_partition
from gdkm.numerics.random import stream

SyntheticKind = Literal["heterophilous", "homophilous"]
SYNTHETIC_KINDS = ("heterophilous", "homophilous")


def random_splits(n: int, seed: int, train: float = 0.5, val: float = 0.25) -> Splits:
    perm = stream(seed, "split").permutation(n)
    n_train = int(round(train * n))
    n_val = int(round(val * n))
    return Splits(
        train=np.sort(perm[:n_train]),
        val=np.sort(perm[n_train : n_train + n_val]),
        test=np.sort(perm[n_train + n_val :]),
    )


def synthetic_dataset(
    kind: SyntheticKind,
    num_nodes: int = 200,
    num_features: int = 16,
    num_classes: int = 2,
    seed: int = 0,
    *,
    edge_prob: float = 0.05,
    p_in: float = 0.1,
    p_out: float = 0.005,
    noise: float = 1.0,
) -> GraphDataset:
    """Seeded node-classification dataset.

    ``homophilous``: planted partition whose communities are the classes,
    features are noisy class means. ``heterophilous``: Erdős–Rényi structure
    that carries no label information, labels are the argmax of a random
    linear map of the features.
    """
    rng = stream(seed, "features")
    if kind == "homophilous":
        edges, labels = planted_partition(num_nodes, num_classes, p_in, p_out, seed)
        means = rng.standard_normal((num_classes, num_features))
        features = means[labels] + noise * rng.standard_normal((num_nodes, num_features))
    elif kind == "heterophilous":
        edges = erdos_renyi(num_nodes, edge_prob, seed)
        features = rng.standard_normal((num_nodes, num_features))
        weights = rng.standard_normal((num_features, num_classes))
        labels = np.argmax(features @ weights, axis=1).astype(np.int64)
    else:
        raise ValueError(f"unknown synthetic dataset: {kind!r}")
    return GraphDataset(
        name=f"synthetic-{kind}",
        features=features,
        labels=labels,
        edges=edges,
        folds=[random_splits(num_nodes, seed)],
    )
