"""Online monitors and ensemble statistics for truncated stochastic approximation.

Almost-sure statements cannot be observed on finite runs; they are replaced
here by frequencies over ensembles of independent trajectories, reported with
Wilson confidence intervals.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from ._vec import norm

__all__ = [
    "MartingaleMonitor",
    "monitor_update",
    "predicted_bracket_bound",
    "oscillation_tolerance",
    "default_q_values",
    "StabilizationReport",
    "stabilization_report",
    "ConvergenceReport",
    "convergence_report",
    "EnsembleReport",
    "aggregate",
    "wilson_interval",
]


@dataclass
class MartingaleMonitor:
    """Localized noise series ``sum_i gamma_i dM_i 1{|X_{i-1} - x*| <= q}``.

    ``tail_oscillation`` is ``max |M_n - M_{window_start}|`` over the steps
    ``n > window_start``; it measures how far the series still moves inside
    the final window.
    """

    q: float
    partial_sum: np.ndarray
    running_sup: float = 0.0
    tail_oscillation: float = 0.0
    n: int = 0
    window_start: int = 0
    anchor: Optional[np.ndarray] = None

    @classmethod
    def new(cls, q: float, dim: int, window_start: int = 0) -> "MartingaleMonitor":
        return cls(q=float(q), partial_sum=np.zeros(dim), window_start=window_start, anchor=np.zeros(dim))

    @property
    def sum_norm(self) -> float:
        return float(norm(self.partial_sum))


def monitor_update(monitor: MartingaleMonitor, step_record, x_prev, x_star) -> MartingaleMonitor:
    """Fold one step into ``monitor`` (in place) and return it."""
    dm = np.asarray(step_record.delta_m, dtype=float)
    if not np.all(np.isfinite(dm)):
        raise ValueError("martingale monitor needs the exact mean field (delta_m is not finite)")
    n = monitor.n + 1
    if norm(np.asarray(x_prev, dtype=float) - np.asarray(x_star, dtype=float)) <= monitor.q:
        monitor.partial_sum = monitor.partial_sum + step_record.gamma * dm
    monitor.running_sup = max(monitor.running_sup, float(norm(monitor.partial_sum)))
    if monitor.anchor is None:
        monitor.anchor = np.zeros_like(monitor.partial_sum)
    if n > monitor.window_start:
        monitor.tail_oscillation = max(monitor.tail_oscillation, float(norm(monitor.partial_sum - monitor.anchor)))
    if n == monitor.window_start:
        monitor.anchor = monitor.partial_sum.copy()
    monitor.n = n
    return monitor


def predicted_bracket_bound(schedule, second_moment_bound: float, from_n: int) -> float:
    """Upper bound on ``sum_{n > from_n} gamma_n^2 * second_moment_bound``.

    Power-law gains use the integral comparison
    ``sum_{n>N} a^2 (b+n)^{-2 alpha} <= a^2 (b+N)^{1-2 alpha} / (2 alpha - 1)``.
    """
    if second_moment_bound == 0:
        return 0.0
    return second_moment_bound * schedule.tail_square_sum_bound(from_n)


def oscillation_tolerance(schedule, second_moment_bound: float, from_n: int, factor: float = 3.0) -> float:
    """Tolerance on the tail oscillation: ``factor`` standard deviations of the tail bracket."""
    return factor * math.sqrt(predicted_bracket_bound(schedule, second_moment_bound, from_n))


def default_q_values(x0, x_star) -> tuple:
    """``q = 2 |X_0 - x*| + 1`` and its doublings ``2q``, ``4q``."""
    q = 2.0 * float(norm(np.asarray(x0, dtype=float) - np.asarray(x_star, dtype=float))) + 1.0
    return (q, 2 * q, 4 * q)


@dataclass(frozen=True)
class StabilizationReport:
    final_sigma: int
    last_truncation_step: Optional[int]
    stabilized: bool


def stabilization_report(sigma_trace, n_steps: Optional[int] = None, fraction: float = 0.1) -> StabilizationReport:
    """Whether the truncations stopped within the first ``fraction`` of the run.

    ``sigma_trace`` is the per-step sequence ``sigma_0 .. sigma_N`` or any
    object exposing ``final_sigma``, ``last_truncation_step`` and ``n_steps``
    (a trajectory or a stored summary row).
    """
    if hasattr(sigma_trace, "last_truncation_step"):
        final_sigma = int(sigma_trace.final_sigma)
        last = sigma_trace.last_truncation_step
        if n_steps is None:
            n_steps = sigma_trace.n_steps
    else:
        sig = np.asarray(sigma_trace)
        if n_steps is None:
            n_steps = len(sig) - 1
        jumps = np.flatnonzero(np.diff(sig) > 0)
        final_sigma = int(sig[-1])
        last = int(jumps[-1]) + 1 if jumps.size else None
    stabilized = last is None or last <= fraction * n_steps
    return StabilizationReport(final_sigma, last, bool(stabilized))


@dataclass
class ConvergenceReport:
    final_error: float
    first_hit_times: dict
    converged_flags: dict


def convergence_report(trajectory, x_star, tolerances: Sequence[float] = (0.05,)) -> ConvergenceReport:
    """Final error and, per tolerance, the first recorded step from which the
    error stays below it up to the end of the recorded trace."""
    if trajectory.status != "completed":
        return ConvergenceReport(math.inf, {t: None for t in tolerances}, {t: False for t in tolerances})
    errs = norm(np.asarray(trajectory.trace_x) - np.asarray(x_star, dtype=float))
    steps = np.asarray(trajectory.trace_steps)
    final = float(norm(trajectory.final_state.x - np.asarray(x_star, dtype=float)))
    hits, flags = {}, {}
    for tol in tolerances:
        above = np.flatnonzero(errs > tol)
        if above.size == 0:
            hits[tol] = int(steps[0])
        elif above[-1] + 1 < len(steps):
            hits[tol] = int(steps[above[-1] + 1])
        else:
            hits[tol] = None
        flags[tol] = final <= tol
    return ConvergenceReport(final, hits, flags)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    phat = successes / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


_QUANTILES = (0.5, 0.9, 0.95, 0.99)


@dataclass
class EnsembleReport:
    n_trajectories: int
    algorithm: str
    tolerance: float
    frac_converged: float
    converged_interval: tuple
    sigma_histogram: dict
    max_sigma: int
    frac_stabilized: float
    stabilized_interval: tuple
    martingale_tail_quantiles: dict
    status_counts: dict
    median_final_error: float
    frac_bounded: Optional[float] = None
    rm_divergence_fraction: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma_histogram"] = {str(k): v for k, v in self.sigma_histogram.items()}
        d["converged_interval"] = list(self.converged_interval)
        d["stabilized_interval"] = list(self.stabilized_interval)
        if not math.isfinite(self.median_final_error):
            d["median_final_error"] = None
        return d

    def table(self) -> str:
        lo, hi = self.converged_interval
        slo, shi = self.stabilized_interval
        rows = [
            ("algorithm", self.algorithm),
            ("trajectories", str(self.n_trajectories)),
            ("status", ", ".join(f"{k}={v}" for k, v in self.status_counts.items())),
            (f"converged (tol={self.tolerance:g})", f"{self.frac_converged:.4f}  [{lo:.4f}, {hi:.4f}]"),
            ("median final error", f"{self.median_final_error:.4g}"),
            ("stabilized", f"{self.frac_stabilized:.4f}  [{slo:.4f}, {shi:.4f}]"),
            ("max sigma", str(self.max_sigma)),
            ("sigma histogram", " ".join(f"{k}:{v}" for k, v in self.sigma_histogram.items())),
        ]
        if self.frac_bounded is not None:
            rows.append(("bounded by final compact", f"{self.frac_bounded:.4f}"))
        if self.rm_divergence_fraction is not None:
            rows.append(("rm divergence fraction", f"{self.rm_divergence_fraction:.4f}"))
        for q, qs in self.martingale_tail_quantiles.items():
            rows.append((f"tail oscillation q={q}", " ".join(f"{k}={v:.3g}" for k, v in qs.items())))
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def aggregate(
    trajectories: Sequence,
    tolerance: float = 0.05,
    stabilization_fraction: float = 0.1,
    rm_trajectories: Optional[Sequence] = None,
    confidence: float = 0.95,
) -> EnsembleReport:
    """Fold trajectories (or stored summary rows) into an :class:`EnsembleReport`.

    Items are sorted by ``index`` first so the result does not depend on the
    order in which trajectories finished.
    """
    trajs = sorted(trajectories, key=lambda t: t.index)
    n = len(trajs)
    if n == 0:
        raise ValueError("aggregate needs at least one trajectory")
    errors = np.array([t.final_error for t in trajs])
    conv = int(np.sum(errors <= tolerance))
    stab = [stabilization_report(t, t.n_steps, stabilization_fraction) for t in trajs]
    n_stab = sum(s.stabilized and t.status == "completed" for s, t in zip(stab, trajs))
    sigmas = [t.final_sigma for t in trajs]
    hist = {s: sigmas.count(s) for s in sorted(set(sigmas))}
    status_counts = {}
    for t in trajs:
        status_counts[t.status] = status_counts.get(t.status, 0) + 1

    tails = {}
    if trajs[0].monitors:
        for j, mon in enumerate(trajs[0].monitors):
            vals = np.array([t.monitors[j].tail_oscillation for t in trajs])
            qs = {f"p{int(round(100 * p))}": float(np.quantile(vals, p)) for p in _QUANTILES}
            qs["max"] = float(vals.max())
            tails[f"{mon.q:g}"] = qs

    flags = [t.bounded for t in trajs]
    bounded = None if any(f is None for f in flags) else float(np.mean(flags))

    rm_div = None
    if rm_trajectories is not None and len(rm_trajectories):
        rm_div = float(np.mean([t.status == "diverged" for t in rm_trajectories]))

    return EnsembleReport(
        n_trajectories=n,
        algorithm=trajs[0].algorithm,
        tolerance=tolerance,
        frac_converged=conv / n,
        converged_interval=wilson_interval(conv, n, confidence),
        sigma_histogram=hist,
        max_sigma=max(sigmas),
        frac_stabilized=n_stab / n,
        stabilized_interval=wilson_interval(n_stab, n, confidence),
        martingale_tail_quantiles=tails,
        status_counts=dict(sorted(status_counts.items())),
        median_final_error=float(np.median(errors)),
        frac_bounded=bounded,
        rm_divergence_fraction=rm_div,
    )
