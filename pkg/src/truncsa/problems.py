"""Synthetic stochastic root-finding problems with known mean field and root.

A problem bundles the noisy oracle ``U(x, z)``, its exact expectation ``u(x)``
and the root ``x*``.  All callables act on the last axis so they accept a
single point ``(d,)`` or a batch ``(B, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._vec import dot, sqnorm

__all__ = [
    "NoiseModel",
    "StochasticProblem",
    "H1Report",
    "H3Report",
    "make_linear",
    "make_cubic",
    "make_convex_potential",
    "make_repulsive",
    "make_problem",
    "sample_oracle",
    "sphere_directions",
    "check_h1",
    "check_h3",
    "PROBLEM_NAMES",
]

ROOT_TOL = 1e-12


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian measurement noise added to the mean field.

    ``additive``: ``sigma * g``.  ``state_scaled``: ``sigma * (1 + |x|^2) * g``.
    ``g`` is a standard normal vector.  ``sigma = 0`` gives a noiseless oracle
    that still consumes draws.
    """

    kind: str = "additive"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("additive", "state_scaled"):
            raise ValueError(f"noise.kind must be 'additive' or 'state_scaled', got {self.kind!r}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError(f"noise.sigma must be a finite nonnegative number, got {self.sigma!r}")

    def term(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.kind == "additive":
            return self.sigma * g
        scale = self.sigma * (1.0 + sqnorm(x))
        return scale[..., None] * g

    def second_moment(self, x: np.ndarray) -> np.ndarray:
        """``E|term(x, g)|^2``."""
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        if self.kind == "additive":
            return np.full(x.shape[:-1], self.sigma ** 2 * d)
        return (self.sigma * (1.0 + sqnorm(x))) ** 2 * d


class LinearField:
    def __init__(self, matrix, x_star):
        self.matrix = np.asarray(matrix, dtype=float)
        self.x_star = np.asarray(x_star, dtype=float)

    def __call__(self, x):
        e = np.asarray(x, dtype=float) - self.x_star
        return np.stack([dot(e, row) for row in self.matrix], axis=-1)


class CubicField:
    def __init__(self, x_star):
        self.x_star = np.asarray(x_star, dtype=float)

    def __call__(self, x):
        e = np.asarray(x, dtype=float) - self.x_star
        return sqnorm(e)[..., None] * e


class ConvexPotentialField:
    """Gradient of ``|x|^4 / 4 + |x|^2 / 2``."""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (sqnorm(x) + 1.0)[..., None] * x


class RepulsiveField:
    """``u(x) = -(x - x*)``: has a root but the drift points away from it."""

    def __init__(self, x_star):
        self.x_star = np.asarray(x_star, dtype=float)

    def __call__(self, x):
        return -(np.asarray(x, dtype=float) - self.x_star)


@dataclass(frozen=True, eq=False)
class StochasticProblem:
    """Oracle ``U(x, g) = u(x) + noise.term(x, g)`` with exact ``u`` and root.

    Pass ``mean_field=None`` together with ``oracle_fn`` for a black-box
    problem; such problems run but are refused by the decomposition
    diagnostics.
    """

    name: str
    dim: int
    mean_field: Optional[Callable]
    root: Optional[np.ndarray]
    noise: NoiseModel = field(default_factory=NoiseModel)
    oracle_fn: Optional[Callable] = None
    growth: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"problem.dim must be >= 1, got {self.dim}")
        if self.mean_field is None and self.oracle_fn is None:
            raise ValueError("a problem needs a mean field or an oracle function")
        if self.root is not None:
            root = np.asarray(self.root, dtype=float).reshape(self.dim)
            object.__setattr__(self, "root", root)
            if self.mean_field is not None:
                resid = float(np.sqrt(sqnorm(self.mean_field(root))))
                if not resid <= ROOT_TOL:
                    raise ValueError(f"|u(x*)| = {resid:.3g} exceeds {ROOT_TOL:g}")

    @property
    def is_black_box(self) -> bool:
        return self.mean_field is None

    def u(self, x) -> np.ndarray:
        if self.mean_field is None:
            raise ValueError(f"problem {self.name!r} has no exact mean field")
        return self.mean_field(np.asarray(x, dtype=float))

    def oracle(self, x, g) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.oracle_fn is not None:
            return self.oracle_fn(x, g)
        return self.mean_field(x) + self.noise.term(x, g)

    def second_moment(self, x) -> np.ndarray:
        """Exact ``E|U(x, Z)|^2`` (requires the mean field)."""
        x = np.asarray(x, dtype=float)
        return sqnorm(self.u(x)) + self.noise.second_moment(x)


def _root(dim, x_star):
    if x_star is None:
        return np.zeros(dim)
    arr = np.asarray(x_star, dtype=float)
    if arr.size == 1 and dim > 1:
        arr = np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise ValueError(f"problem.x_star must have {dim} coordinates, got {arr.tolist()}")
    return arr


def _spd_matrix(dim, matrix_spec) -> np.ndarray:
    if matrix_spec is None or (isinstance(matrix_spec, str) and matrix_spec == "identity"):
        return np.eye(dim)
    arr = np.asarray(matrix_spec, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(dim)
    elif arr.ndim == 1:
        arr = np.diag(arr)
    if arr.shape != (dim, dim):
        raise ValueError(f"linear matrix must be {dim}x{dim}, got shape {arr.shape}")
    if not np.allclose(arr, arr.T, rtol=0, atol=1e-12 * max(1.0, np.abs(arr).max())):
        raise ValueError("linear matrix must be symmetric")
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        raise ValueError("linear matrix must be positive definite") from None
    return arr


def make_linear(dim: int, matrix_spec=None, x_star=None, noise: NoiseModel | None = None) -> StochasticProblem:
    """``u(x) = A (x - x*)`` for a symmetric positive-definite ``A``.

    ``matrix_spec`` may be ``None``/``"identity"``, a scalar multiple of the
    identity, a diagonal given as a vector, or a full matrix.
    """
    A = _spd_matrix(dim, matrix_spec)
    root = _root(dim, x_star)
    return StochasticProblem("linear", dim, LinearField(A, root), root, noise or NoiseModel(), growth="linear")


def make_cubic(dim: int, x_star=None, noise: NoiseModel | None = None) -> StochasticProblem:
    """``u(x) = |x - x*|^2 (x - x*)``; E|U|^2 grows like |x|^6."""
    root = _root(dim, x_star)
    return StochasticProblem("cubic", dim, CubicField(root), root, noise or NoiseModel(), growth="cubic")


def make_convex_potential(dim: int, noise: NoiseModel | None = None) -> StochasticProblem:
    """``u(x) = (|x|^2 + 1) x``, the gradient of a strictly convex potential."""
    return StochasticProblem(
        "convex_potential", dim, ConvexPotentialField(), np.zeros(dim), noise or NoiseModel(), growth="cubic"
    )


def make_repulsive(dim: int, x_star=None, noise: NoiseModel | None = None) -> StochasticProblem:
    """Adversarial fixture ``u(x) = -(x - x*)`` violating the monotonicity condition."""
    root = _root(dim, x_star)
    return StochasticProblem("repulsive", dim, RepulsiveField(root), root, noise or NoiseModel(), growth="linear")


PROBLEM_NAMES = ("linear", "cubic", "convex_potential", "repulsive")


def make_problem(name: str, dim: int, x_star=None, noise: NoiseModel | None = None, matrix=None) -> StochasticProblem:
    if name == "linear":
        return make_linear(dim, matrix, x_star, noise)
    if name == "cubic":
        return make_cubic(dim, x_star, noise)
    if name == "convex_potential":
        if x_star is not None and np.any(np.asarray(x_star, dtype=float) != 0):
            raise ValueError("convex_potential has its root at the origin; x_star must be 0")
        return make_convex_potential(dim, noise)
    if name == "repulsive":
        return make_repulsive(dim, x_star, noise)
    raise ValueError(f"problem.name must be one of {', '.join(PROBLEM_NAMES)}, got {name!r}")


def sample_oracle(problem: StochasticProblem, x, rng, forced_g=None) -> np.ndarray:
    """One evaluation of ``U(x, z)``; consumes one normal vector from ``rng``.

    ``forced_g`` replaces the normal draw (nothing is consumed then).
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(forced_g, dtype=float) if forced_g is not None else rng.normals(problem.dim)
    if g.shape != x.shape:
        g = np.broadcast_to(g, x.shape)
    return problem.oracle(x, g)


def sphere_directions(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic unit directions used by the hypothesis samplers.

    d=1 gives ``{+1, -1}``; d=2 gives ``count`` equally spaced angles starting
    at 0; higher dimensions give the ``2d`` signed axes followed by
    seeded Gaussian directions up to ``count``.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        theta = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(theta), np.sin(theta)])
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    extra = max(count - len(axes), 0)
    g = np.random.default_rng(seed).standard_normal((extra, dim))
    g /= np.sqrt(sqnorm(g))[:, None]
    return np.vstack([axes, g])


@dataclass
class H1Report:
    min_inner_product: float
    argmin: np.ndarray
    violations: list
    n_points: int

    @property
    def passed(self) -> bool:
        return not self.violations


def check_h1(
    problem: StochasticProblem,
    radii: Sequence[float] = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0),
    points_per_radius: int = 64,
) -> H1Report:
    """Sample ``(u(x) | x - x*)`` on spheres around the root.

    Any nonpositive value is reported as a violation.  Passing is evidence,
    not proof.
    """
    dirs = sphere_directions(problem.dim, points_per_radius)
    root = problem.root
    pts = np.concatenate([root + r * dirs for r in radii if r > 0])
    inner = dot(problem.u(pts), pts - root)
    k = int(np.argmin(inner))
    bad = [pts[i].copy() for i in np.flatnonzero(~(inner > 0))]
    return H1Report(float(inner[k]), pts[k].copy(), bad, len(pts))


@dataclass
class H3Report:
    max_second_moment_estimate: float
    standard_error: float
    argmax: np.ndarray
    points: np.ndarray
    estimates: np.ndarray
    standard_errors: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(np.isfinite(self.estimates)))


def check_h3(
    problem: StochasticProblem,
    compact_radius: float,
    n_samples: int,
    rng,
    points=None,
    directions: int = 16,
) -> H3Report:
    """Monte Carlo estimate of ``E|U(x, Z)|^2`` over points of a ball around the root.

    Default points: the root and spheres at 1/4, 1/2, 3/4 and 1 of the radius.
    """
    if n_samples < 1000:
        raise ValueError("check_h3 needs at least 1000 samples per point")
    if points is None:
        dirs = sphere_directions(problem.dim, directions)
        shells = [problem.root + f * compact_radius * dirs for f in (0.25, 0.5, 0.75, 1.0)]
        points = np.vstack([problem.root[None, :]] + shells)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    est = np.empty(len(points))
    se = np.empty(len(points))
    for i, x in enumerate(points):
        g = rng.normals_block(n_samples, problem.dim)
        sq = sqnorm(problem.oracle(np.broadcast_to(x, g.shape), g))
        est[i] = sq.mean()
        se[i] = sq.std(ddof=1) / math.sqrt(n_samples)
    k = int(np.argmax(est))
    return H3Report(float(est[k]), float(se[k]), points[k].copy(), points, est, se)
