from __future__ import annotations

import numpy as np

# Stream splitting rule: one child SeedSequence per purpose, further keyed by
# integers such as the epoch or sweep cell. Adding a purpose never shifts the
# streams of the existing ones.
PURPOSES = {
    "graph": 0,
    "features": 1,
    "init": 2,
    "weights": 3,
    "mc": 4,
    "split": 5,
    "inducing": 6,
}


def stream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """Named PCG64 stream for ``purpose`` derived from the run seed."""
    if purpose not in PURPOSES:
        raise KeyError(f"unknown random stream purpose: {purpose!r}")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(PURPOSES[purpose], *(int(k) for k in keys)))
    return np.random.Generator(np.random.PCG64(seq))
