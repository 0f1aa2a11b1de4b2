"""Row-wise vector helpers with batch-independent rounding."""

import numpy as np


def sqnorm(v) -> np.ndarray:
    """Squared Euclidean norm over the last axis.

    Coordinates are accumulated left to right with plain elementwise ops, so a
    row yields the same bits whether evaluated alone or inside a batch.
    """
    v = np.asarray(v, dtype=float)
    s = v[..., 0] * v[..., 0]
    for i in range(1, v.shape[-1]):
        s = s + v[..., i] * v[..., i]
    return s


def norm(v) -> np.ndarray:
    return np.sqrt(sqnorm(v))


def dot(u, v) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    s = u[..., 0] * v[..., 0]
    for i in range(1, u.shape[-1]):
        s = s + u[..., i] * v[..., i]
    return s
