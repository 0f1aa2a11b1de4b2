"""Counter-derived per-trajectory random streams.

Every trajectory owns one :class:`RandomStream`.  Its seed is derived from
``(master_seed, trajectory_index)`` through :class:`numpy.random.SeedSequence`
with ``spawn_key=(index,)``, so a trajectory's draws do not depend on how many
other trajectories exist or in which order they are executed.

Normal variates come from Box-Muller on pairs of uniforms.  One pair of
uniforms gives one pair of normals; a point of odd dimension ``d`` consumes
``d + 1`` normals and discards the last one.  The stream precomputes normals
for a whole buffer of uniforms at a time, so a single ``normals(d)`` call and a
``normals_block(n, d)`` call return bit-identical values for the same draws.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "draws_per_point", "RandomStream", "FixedNoise"]

_BUFFER_PAIRS = 2048


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trajectory ``index`` under ``master_seed``."""
    if master_seed < 0 or index < 0:
        raise ValueError("master_seed and index must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def draws_per_point(dim: int) -> int:
    """Number of uniforms (equivalently normals) consumed per ``dim``-vector."""
    return 2 * ((dim + 1) // 2)


def _box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    # u1 in (0, 1] so the log is finite
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * u1.size)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out


class RandomStream:
    """Single-owner stream of uniforms and standard normals."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))
        self._buf = np.empty(0)
        self._pos = 0
        self.draws = 0

    def _refill(self) -> None:
        u = self._gen.random(2 * _BUFFER_PAIRS)
        self._buf = _box_muller(1.0 - u[0::2], u[1::2])
        self._pos = 0

    def _take(self, k: int) -> np.ndarray:
        out = np.empty(k)
        filled = 0
        while filled < k:
            if self._pos == self._buf.size:
                self._refill()
            m = min(k - filled, self._buf.size - self._pos)
            out[filled:filled + m] = self._buf[self._pos:self._pos + m]
            self._pos += m
            filled += m
        self.draws += k
        return out

    def normals(self, dim: int) -> np.ndarray:
        """One standard normal vector of length ``dim``."""
        return self._take(draws_per_point(dim))[:dim]

    def normals_block(self, n: int, dim: int) -> np.ndarray:
        """``n`` consecutive normal vectors, shape ``(n, dim)``."""
        k = draws_per_point(dim)
        return self._take(n * k).reshape(n, k)[:, :dim]


class FixedNoise:
    """Test hook returning a prescribed normal draw at every request.

    ``values`` is either one vector reused forever or a 2-D array whose rows
    are served in order (the last row repeats once exhausted).
    """

    def __init__(self, values=0.0, dim: int | None = None):
        arr = np.atleast_1d(np.asarray(values, dtype=float))
        if arr.ndim == 1:
            if dim is not None and arr.size == 1 and dim > 1:
                arr = np.full(dim, arr[0])
            arr = arr[None, :]
        self._rows = arr
        self._i = 0
        self.seed = -1
        self.draws = 0

    def normals(self, dim: int) -> np.ndarray:
        row = self._rows[min(self._i, len(self._rows) - 1)]
        self._i += 1
        self.draws += draws_per_point(dim)
        if row.size == 1 and dim > 1:
            return np.full(dim, row[0])
        return row[:dim].copy()

    def normals_block(self, n: int, dim: int) -> np.ndarray:
        return np.stack([self.normals(dim) for _ in range(n)]) if n else np.empty((0, dim))
