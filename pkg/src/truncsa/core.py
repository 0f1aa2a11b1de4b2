"""Robbins-Monro and randomly truncated stepping engines.

The truncated recursion takes the plain Robbins-Monro half-step

    x_half = X_n - gamma_{n+1} U(X_n, Z_{n+1})

and accepts it when it stays in the active ball ``K_{sigma_n}``; otherwise the
iterate is reset and the active ball grows by one index.  Each step is also
written in Robbins-Monro form

    X_{n+1} = X_n - gamma u(X_n) - gamma dM_{n+1} + gamma p_{n+1}

with ``dM = U - u`` and ``p = u + dM + (reset - X_n) / gamma`` on truncated
steps (zero otherwise).  :class:`StepRecord` carries that decomposition.

The same array kernel drives single steps and whole batches of trajectories,
so a trajectory gives bit-identical output whether it runs alone or inside an
ensemble of any size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._vec import norm
from .diagnostics import MartingaleMonitor
from .problems import StochasticProblem
from .rng import RandomStream, derive_seed
from .schedules import CompactFamily

__all__ = [
    "ChenState",
    "StepRecord",
    "Trajectory",
    "NonFiniteError",
    "step_chen",
    "step_rm",
    "run_trajectory",
    "run_batch",
    "ALGORITHMS",
    "RECORD_POLICIES",
    "DIVERGENCE_THRESHOLD",
]

ALGORITHMS = ("chen", "rm")
RECORD_POLICIES = ("full", "thinned", "final_only")
DIVERGENCE_THRESHOLD = 1e6
_BLOCK_STEPS = 1024


class NonFiniteError(ArithmeticError):
    """The oracle or the half-step produced NaN or infinity."""


@dataclass
class ChenState:
    x: np.ndarray
    sigma: int = 0
    n: int = 0
    x_reset: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float).reshape(-1)
        if self.x_reset is None:
            self.x_reset = self.x.copy()
        else:
            self.x_reset = np.array(self.x_reset, dtype=float).reshape(-1)


@dataclass(frozen=True)
class StepRecord:
    """Decomposition of one step ``n -> n + 1``."""

    x_half: np.ndarray
    drift: np.ndarray
    delta_m: np.ndarray
    p: np.ndarray
    truncated: bool
    gamma: float


def _project_into(compacts: CompactFamily, x: np.ndarray) -> np.ndarray:
    """Scale ``x`` toward the center until it lies in ``K_0``."""
    c = np.asarray(compacts.center)
    dist = norm(x - c)
    r0 = compacts.r0
    scale = np.where(dist > r0, r0 / np.where(dist > 0, dist, 1.0), 1.0)
    y = c + (x - c) * scale[..., None]
    # rounding can leave y a few ulps outside; shrink until contained
    out = norm(y - c) > r0
    while np.any(out):
        scale = np.where(out, np.nextafter(scale, 0.0), scale)
        y = np.where(out[..., None], c + (x - c) * scale[..., None], y)
        out = norm(y - c) > r0
    return y


def _evaluate(problem: StochasticProblem, x: np.ndarray, g: np.ndarray):
    """Return ``(U, u, dM)`` for a batch of points."""
    if problem.mean_field is None:
        U = problem.oracle(x, g)
        nan = np.full_like(U, np.nan)
        return U, nan, nan
    drift = problem.mean_field(x)
    U = drift + problem.noise.term(x, g)
    return U, drift, U - drift


def _chen_kernel(problem, compacts, x, sigma, x_reset, g, gamma, radius, reset):
    U, drift, dm = _evaluate(problem, x, g)
    x_half = x - gamma * U
    finite = np.isfinite(U).all(axis=-1) & np.isfinite(x_half).all(axis=-1)
    dist_half = norm(x_half - np.asarray(compacts.center))
    inside = dist_half <= radius
    target = x_reset if reset == "x0" else _project_into(compacts, x)
    x_new = np.where(inside[:, None], x_half, target)
    p = np.where(inside[:, None], 0.0, drift + dm + (target - x) / gamma)
    return U, drift, dm, x_half, p, x_new, ~inside, finite


def _rm_kernel(problem, x, g, gamma):
    U, drift, dm = _evaluate(problem, x, g)
    x_new = x - gamma * U
    finite = np.isfinite(U).all(axis=-1) & np.isfinite(x_new).all(axis=-1)
    return U, drift, dm, x_new, finite


def _check_reset(compacts: CompactFamily, x_reset) -> None:
    if not compacts.contains(0, x_reset):
        raise ValueError(
            f"reset point {np.asarray(x_reset).tolist()} lies outside K_0 (radius {compacts.r0:g})"
        )


def step_chen(state: ChenState, problem, schedule, compacts: CompactFamily, rng, reset: str = "x0"):
    """One truncated step; returns ``(new_state, StepRecord)``.

    Raises :class:`NonFiniteError` when the oracle output is not finite.
    """
    gamma = schedule.gain(state.n + 1)
    x = state.x[None, :]
    g = np.asarray(rng.normals(problem.dim), dtype=float)[None, :]
    radius = compacts.radius(state.sigma)
    U, drift, dm, x_half, p, x_new, trunc, finite = _chen_kernel(
        problem, compacts, x, np.array([state.sigma]), state.x_reset[None, :], g, gamma, radius, reset
    )
    if not finite[0]:
        raise NonFiniteError(f"nonfinite oracle output at step {state.n + 1}")
    truncated = bool(trunc[0])
    new = ChenState(x_new[0], state.sigma + truncated, state.n + 1, state.x_reset)
    return new, StepRecord(x_half[0], drift[0], dm[0], p[0], truncated, gamma)


def step_rm(state: ChenState, problem, schedule, rng):
    """One plain Robbins-Monro step; consumes the same draws as :func:`step_chen`."""
    gamma = schedule.gain(state.n + 1)
    g = np.asarray(rng.normals(problem.dim), dtype=float)[None, :]
    U, drift, dm, x_new, finite = _rm_kernel(problem, state.x[None, :], g, gamma)
    if not finite[0]:
        raise NonFiniteError(f"nonfinite iterate at step {state.n + 1}")
    new = ChenState(x_new[0], 0, state.n + 1, state.x_reset)
    return new, StepRecord(x_new[0], drift[0], dm[0], np.zeros(problem.dim), False, gamma)


@dataclass
class Trajectory:
    """Outcome of one run.

    ``status`` is ``"completed"``, ``"diverged"`` (Robbins-Monro iterate left
    the divergence threshold or became nonfinite) or ``"aborted"`` (nonfinite
    oracle output in the truncated scheme).  Trace arrays hold the recorded
    steps, always including step 0 and the last step reached.
    """

    algorithm: str
    index: int
    seed: int
    n_steps: int
    steps_done: int
    status: str
    final_state: ChenState
    truncation_steps: list
    trace_steps: np.ndarray
    trace_x: np.ndarray
    trace_sigma: np.ndarray
    monitors: list = field(default_factory=list)
    sup_distance: float = 0.0
    root: Optional[np.ndarray] = None
    step_arrays: Optional[dict] = None
    final_radius: Optional[float] = None
    wall_time_ms: float = 0.0

    @property
    def bounded(self) -> Optional[bool]:
        """Whether every iterate stayed inside the final active ball."""
        if self.final_radius is None:
            return None
        return self.sup_distance <= self.final_radius

    @property
    def last_truncation_step(self) -> Optional[int]:
        return self.truncation_steps[-1] if self.truncation_steps else None

    @property
    def final_sigma(self) -> int:
        return self.final_state.sigma

    @property
    def final_error(self) -> float:
        if self.status != "completed" or self.root is None:
            return math.inf
        return float(norm(self.final_state.x - self.root))

    @property
    def errors(self) -> np.ndarray:
        if self.root is None:
            raise ValueError("error series needs a known root")
        return norm(self.trace_x - self.root)

    @property
    def records(self) -> Optional[list]:
        a = self.step_arrays
        if a is None:
            return None
        return [
            StepRecord(a["x_half"][i], a["drift"][i], a["delta_m"][i], a["p"][i], bool(a["truncated"][i]), float(a["gamma"][i]))
            for i in range(len(a["gamma"]))
        ]

    def sigma_trace(self) -> np.ndarray:
        """Per-step ``sigma_n`` for ``n = 0..steps_done`` rebuilt from truncation steps."""
        sig = np.zeros(self.steps_done + 1, dtype=int)
        for s in self.truncation_steps:
            sig[s:] += 1
        return sig


def _thin_default(n_steps: int) -> int:
    return max(1, math.ceil(n_steps / 1000))


def run_batch(
    problem: StochasticProblem,
    algorithm: str,
    schedule,
    compacts: Optional[CompactFamily],
    n_steps: int,
    seeds: Sequence[int],
    x0,
    *,
    record: str = "final_only",
    thin: Optional[int] = None,
    q_values: Sequence[float] = (),
    window: Optional[int] = None,
    reset: str = "x0",
    divergence_threshold: float = DIVERGENCE_THRESHOLD,
    indices: Optional[Sequence[int]] = None,
    streams: Optional[Sequence] = None,
) -> list:
    """Run one trajectory per seed in lockstep and return their :class:`Trajectory`.

    Trajectories never interact: each row of the batch only reads its own
    stream, so the output of a given seed does not depend on the batch.
    ``streams`` overrides the seeded streams (test hook).  Martingale monitors
    are kept for every ``q`` in ``q_values``; ``window`` is the tail length for
    their oscillation (default: last 10% of the steps).
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    if record not in RECORD_POLICIES:
        raise ValueError(f"record policy must be one of {RECORD_POLICIES}, got {record!r}")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if reset not in ("x0", "last_valid"):
        raise ValueError(f"reset must be 'x0' or 'last_valid', got {reset!r}")
    d = problem.dim
    x0 = np.asarray(x0, dtype=float).reshape(d)
    if algorithm == "chen":
        if compacts is None:
            raise ValueError("the truncated algorithm needs a compact family")
        if compacts.dim != d:
            raise ValueError(f"compact center has {compacts.dim} coordinates, problem has {d}")
        _check_reset(compacts, x0)
    if q_values and problem.is_black_box:
        raise ValueError("martingale monitors need an exact mean field")
    if streams is None:
        streams = [RandomStream(s) for s in seeds]
    B = len(streams)
    if indices is None:
        indices = list(range(B))
    thin = thin or _thin_default(n_steps)
    window = window if window is not None else max(1, math.ceil(0.1 * n_steps))
    window = min(window, n_steps)
    anchor_step = n_steps - window
    q_arr = np.asarray(list(q_values), dtype=float)
    nq = len(q_arr)
    root = problem.root
    center = np.asarray(compacts.center) if compacts is not None else None

    x = np.tile(x0, (B, 1))
    x_reset = np.tile(x0, (B, 1))
    sigma = np.zeros(B, dtype=np.int64)
    active = np.ones(B, dtype=bool)
    status = np.array(["completed"] * B, dtype=object)
    steps_done = np.zeros(B, dtype=np.int64)
    truncs = [[] for _ in range(B)]
    radii = compacts.radii(64) if compacts is not None else None
    sup_dist = norm(x0 - center) * np.ones(B) if center is not None else np.zeros(B)

    partial = np.zeros((B, nq, d))
    run_sup = np.zeros((B, nq))
    anchor = np.zeros((B, nq, d))
    tail_osc = np.zeros((B, nq))

    rec_steps = [[0] for _ in range(B)]
    rec_x = [[x0.copy()] for _ in range(B)]
    rec_sig = [[0] for _ in range(B)]
    full = {k: [] for k in ("x_half", "drift", "delta_m", "p", "truncated", "gamma")} if record == "full" else None

    k = 0
    g_block = None
    with np.errstate(over="ignore", invalid="ignore"):
        while k < n_steps and active.any():
            if k % _BLOCK_STEPS == 0:
                S = min(_BLOCK_STEPS, n_steps - k)
                g_block = np.stack([s.normals_block(S, d) for s in streams], axis=1)
            g = g_block[k % _BLOCK_STEPS]
            gamma = schedule.gain(k + 1)
            if nq:
                inside_q = norm(x - root)[:, None] <= q_arr[None, :]

            if algorithm == "chen":
                if sigma.max() >= len(radii):
                    radii = compacts.radii(int(sigma.max()) + 64)
                U, drift, dm, x_half, p, x_new, trunc, finite = _chen_kernel(
                    problem, compacts, x, sigma, x_reset, g, gamma, radii[sigma], reset
                )
                bad = active & ~finite
                status[bad] = "aborted"
                live = active & finite
                trunc = trunc & live
            else:
                U, drift, dm, x_new, finite = _rm_kernel(problem, x, g, gamma)
                x_half = x_new
                p = np.zeros_like(x_new)
                trunc = np.zeros(B, dtype=bool)
                big = norm(np.where(finite[:, None], x_new, 0.0)) > divergence_threshold
                blown = active & (~finite | big)
                live = active.copy()
                status[blown] = "diverged"

            if full is not None:
                full["x_half"].append(x_half)
                full["drift"].append(drift)
                full["delta_m"].append(dm)
                full["p"].append(p)
                full["truncated"].append(trunc)
                full["gamma"].append(gamma)

            if nq:
                upd = (inside_q & live[:, None])[:, :, None]
                partial += np.where(upd, gamma * dm[:, None, :], 0.0)
                run_sup = np.maximum(run_sup, norm(partial))
                if k + 1 > anchor_step:
                    tail_osc = np.maximum(tail_osc, norm(partial - anchor))

            x = np.where(live[:, None], x_new, x)
            sigma = sigma + trunc
            steps_done[live] = k + 1
            if center is not None:
                sup_dist = np.where(live, np.maximum(sup_dist, norm(x - center)), sup_dist)
            for i in np.flatnonzero(trunc):
                truncs[i].append(k + 1)

            if algorithm == "rm":
                active = active & ~blown
            else:
                active = live

            if record != "final_only":
                if (k + 1) % thin == 0 or record == "full":
                    rows = np.flatnonzero(live)
                else:
                    rows = np.flatnonzero(trunc)
                for i in rows:
                    rec_steps[i].append(k + 1)
                    rec_x[i].append(x[i].copy())
                    rec_sig[i].append(int(sigma[i]))

            if nq and k + 1 == anchor_step:
                anchor = partial.copy()
            k += 1

    out = []
    for i in range(B):
        if rec_steps[i][-1] != steps_done[i]:
            rec_steps[i].append(int(steps_done[i]))
            rec_x[i].append(x[i].copy())
            rec_sig[i].append(int(sigma[i]))
        monitors = [
            MartingaleMonitor(
                q=float(q_arr[j]),
                partial_sum=partial[i, j].copy(),
                running_sup=float(run_sup[i, j]),
                tail_oscillation=float(tail_osc[i, j]),
                n=int(steps_done[i]),
                window_start=anchor_step,
                anchor=anchor[i, j].copy(),
            )
            for j in range(nq)
        ]
        step_arrays = None
        if full is not None:
            m = int(steps_done[i])
            step_arrays = {}
            for key, seq in full.items():
                if key == "gamma":
                    step_arrays[key] = np.asarray(seq[:m], dtype=float)
                elif m:
                    step_arrays[key] = np.stack([a[i] for a in seq[:m]])
                else:
                    step_arrays[key] = np.empty((0,) if key == "truncated" else (0, d))
        out.append(
            Trajectory(
                algorithm=algorithm,
                index=int(indices[i]),
                seed=int(streams[i].seed),
                n_steps=n_steps,
                steps_done=int(steps_done[i]),
                status=str(status[i]),
                final_state=ChenState(x[i].copy(), int(sigma[i]), int(steps_done[i]), x0.copy()),
                truncation_steps=truncs[i],
                trace_steps=np.asarray(rec_steps[i], dtype=np.int64),
                trace_x=np.asarray(rec_x[i]),
                trace_sigma=np.asarray(rec_sig[i], dtype=np.int64),
                monitors=monitors,
                sup_distance=float(sup_dist[i]),
                root=None if root is None else root.copy(),
                step_arrays=step_arrays,
                final_radius=compacts.radius(int(sigma[i])) if algorithm == "chen" else None,
            )
        )
    return out


def run_trajectory(
    problem,
    algorithm: str,
    schedule,
    compacts,
    n_steps: int,
    seed: int,
    x0,
    record: str = "final_only",
    **kwargs,
) -> Trajectory:
    """Single trajectory; ``seed`` is used as the stream seed directly."""
    return run_batch(problem, algorithm, schedule, compacts, n_steps, [seed], x0, record=record, **kwargs)[0]


def trajectory_seeds(master_seed: int, indices: Sequence[int]) -> list:
    return [derive_seed(master_seed, i) for i in indices]
