"""Reproducible ensemble execution and result persistence.

Trajectory ``i`` always uses the stream seeded with ``derive_seed(master_seed, i)``
and trajectories are split into fixed-size chunks that do not depend on the
worker count, so every deterministic output file is byte-identical whatever
``workers`` is.  Wall-clock timings live in ``timings.csv`` only.

Output directory layout::

    summary.csv        one row per (trajectory, algorithm)
    monitors.csv       one row per (trajectory, algorithm, q)
    traces/traj_{i}.csv   recorded steps (thinned or full policies)
    ensemble.json      ensemble report(s)
    manifest.json      config hash, seeds, timestamps, file inventory
    timings.csv        per-trajectory wall time (not deterministic)
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .core import run_batch
from .diagnostics import EnsembleReport, MartingaleMonitor, aggregate
from .rng import derive_seed

__all__ = [
    "SUMMARY_SCHEMA",
    "SUMMARY_COLUMNS",
    "RunManifest",
    "SummaryRow",
    "EnsembleResult",
    "run_ensemble",
    "run_trajectories",
    "read_summary",
    "read_monitors",
    "reports_from_rows",
    "paired_table",
]

SUMMARY_SCHEMA = "truncsa-summary/1"
KNOWN_SCHEMAS = (SUMMARY_SCHEMA,)
SUMMARY_COLUMNS = (
    "trajectory_index",
    "algorithm",
    "seed",
    "status",
    "steps_done",
    "final_error",
    "final_sigma",
    "last_truncation_step",
    "stabilized",
    "sup_martingale",
    "tail_oscillation",
    "sup_distance",
    "final_radius",
)
MONITOR_COLUMNS = ("trajectory_index", "algorithm", "q", "partial_sum_norm", "sup_martingale", "tail_oscillation")
# rows per batch; results never depend on it, only speed does
MAX_CHUNK = 500


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class SummaryRow:
    """One stored trajectory summary, enough to rebuild an ensemble report."""

    index: int
    algorithm: str
    seed: int
    status: str
    steps_done: int
    n_steps: int
    final_error: float
    final_sigma: int
    last_truncation_step: Optional[int]
    sup_distance: float
    final_radius: Optional[float]
    monitors: list

    @property
    def bounded(self) -> Optional[bool]:
        if self.final_radius is None:
            return None
        return self.sup_distance <= self.final_radius


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    seeds: list
    started: str
    finished: str
    outputs: dict
    defaults_applied: list
    warnings: list
    workers: int

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "seeds": self.seeds,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
            "defaults_applied": self.defaults_applied,
            "warnings": self.warnings,
            "workers": self.workers,
        }


@dataclass
class EnsembleResult:
    reports: dict
    manifest: RunManifest
    trajectories: dict
    files: list

    @property
    def report(self) -> EnsembleReport:
        return self.reports["chen"] if "chen" in self.reports else next(iter(self.reports.values()))


def _algorithms(cfg: ExperimentConfig) -> tuple:
    return ("chen", "rm") if cfg.algorithm == "both_paired" else (cfg.algorithm,)


def _run_chunk(cfg: ExperimentConfig, algorithm: str, indices: list) -> list:
    t0 = time.perf_counter()
    problem = cfg.problem()
    trajs = run_batch(
        problem,
        algorithm,
        cfg.schedule(),
        cfg.compacts() if algorithm == "chen" else None,
        cfg.n_steps,
        [derive_seed(cfg.master_seed, i) for i in indices],
        cfg.x0,
        record=cfg.record_policy,
        thin=cfg.record_thin,
        q_values=cfg.q_values,
        window=cfg.window,
        reset=cfg.reset,
        divergence_threshold=cfg.divergence_threshold,
        indices=indices,
    )
    per = (time.perf_counter() - t0) * 1000.0 / max(len(indices), 1)
    for t in trajs:
        t.wall_time_ms = per
    return trajs


def run_trajectories(cfg: ExperimentConfig, algorithm: str, workers: int = 1) -> list:
    """All trajectories of ``cfg`` for one algorithm, sorted by index."""
    idx = list(range(cfg.n_trajectories))
    size = max(1, min(MAX_CHUNK, math.ceil(len(idx) / max(workers, 1))))
    chunks = [idx[i:i + size] for i in range(0, len(idx), size)]
    if workers <= 1 or len(chunks) == 1:
        results = [_run_chunk(cfg, algorithm, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, [cfg] * len(chunks), [algorithm] * len(chunks), chunks))
    trajs = [t for chunk in results for t in chunk]
    return sorted(trajs, key=lambda t: t.index)


def _summary_rows(trajs, cfg: ExperimentConfig):
    for t in trajs:
        stab = t.last_truncation_step is None or t.last_truncation_step <= cfg.stabilization_fraction * cfg.n_steps
        mon = t.monitors[0] if t.monitors else None
        yield (
            t.index,
            t.algorithm,
            t.seed,
            t.status,
            t.steps_done,
            t.final_error,
            t.final_sigma,
            t.last_truncation_step,
            bool(stab and t.status == "completed"),
            mon.running_sup if mon else None,
            mon.tail_oscillation if mon else None,
            t.sup_distance,
            t.final_radius,
        )


def _write_csv(path: Path, header, rows, comment: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_trace(path: Path, t, root) -> None:
    d = t.trace_x.shape[1]
    errs = np.sqrt(((t.trace_x - root) ** 2).sum(axis=1)) if root is not None else [None] * len(t.trace_steps)
    trunc = set(t.truncation_steps)
    rows = (
        [int(s), int(sig), float(e), int(s) in trunc] + [float(v) for v in x]
        for s, sig, e, x in zip(t.trace_steps, t.trace_sigma, errs, t.trace_x)
    )
    _write_csv(path, ["step", "sigma", "error", "truncated"] + [f"x{j}" for j in range(d)], rows)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def run_ensemble(cfg: ExperimentConfig, out_dir=None, workers: int = 1, write: bool = True) -> EnsembleResult:
    """Run every trajectory of ``cfg``, aggregate, and write the output files."""
    started = _now()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    trajs = {algo: run_trajectories(cfg, algo, workers) for algo in _algorithms(cfg)}
    tol = cfg.tolerances[0]
    reports = {}
    for algo, ts in trajs.items():
        rm = trajs.get("rm") if algo == "chen" and "rm" in trajs else None
        reports[algo] = aggregate(ts, tol, cfg.stabilization_fraction, rm_trajectories=rm)
    seeds = [derive_seed(cfg.master_seed, i) for i in range(cfg.n_trajectories)]

    files = []
    if write:
        out.mkdir(parents=True, exist_ok=True)
        all_trajs = [t for algo in trajs for t in trajs[algo]]
        all_trajs.sort(key=lambda t: (t.index, t.algorithm))
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, _summary_rows(all_trajs, cfg), SUMMARY_SCHEMA)
        files.append("summary.csv")
        mon_rows = (
            (t.index, t.algorithm, m.q, m.sum_norm, m.running_sup, m.tail_oscillation)
            for t in all_trajs
            for m in t.monitors
        )
        _write_csv(out / "monitors.csv", MONITOR_COLUMNS, mon_rows, SUMMARY_SCHEMA)
        files.append("monitors.csv")
        if cfg.record_policy != "final_only":
            (out / "traces").mkdir(exist_ok=True)
            root = np.asarray(cfg.x_star)
            for t in all_trajs:
                suffix = f"_{t.algorithm}" if len(trajs) > 1 else ""
                name = f"traces/traj_{t.index}{suffix}.csv"
                _write_trace(out / name, t, root)
                files.append(name)
        _write_csv(
            out / "timings.csv",
            ("trajectory_index", "algorithm", "wall_time_ms"),
            ((t.index, t.algorithm, round(t.wall_time_ms, 3)) for t in all_trajs),
        )
        files.append("timings.csv")
        doc = {
            "schema": "truncsa-ensemble/1",
            "config": cfg.canonical(),
            "reports": {algo: r.to_dict() for algo, r in reports.items()},
        }
        (out / "ensemble.json").write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")
        files.append("ensemble.json")
        (out / "config.toml").write_text(cfg.to_toml())
        files.append("config.toml")

    manifest = RunManifest(
        config_hash=cfg.config_hash(),
        tool_version=__version__,
        seeds=seeds,
        started=started,
        finished=_now(),
        outputs={f: _sha256(out / f) for f in files},
        defaults_applied=list(cfg.defaults_applied),
        warnings=list(cfg.warnings),
        workers=workers,
    )
    if write:
        manifest.outputs["manifest.json"] = None
        (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
        files.append("manifest.json")
    return EnsembleResult(reports, manifest, trajs, files)


def _opt_int(s: str) -> Optional[int]:
    return int(s) if s != "" else None


def _opt_float(s: str) -> Optional[float]:
    return float(s) if s != "" else None


def read_summary(path) -> list:
    """Load ``summary.csv`` (and ``monitors.csv`` beside it) into :class:`SummaryRow`."""
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        schema = first[1:].strip() if first.startswith("#") else None
        if schema not in KNOWN_SCHEMAS:
            raise ValueError(f"{path}: unknown summary schema {schema!r}")
        reader = csv.DictReader(fh)
        missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        raw = list(reader)
    mons = read_monitors(path.parent / "monitors.csv") if (path.parent / "monitors.csv").exists() else {}
    cfg_path = path.parent / "config.toml"
    n_steps = None
    if cfg_path.exists():
        from .config import load_config

        n_steps = load_config(cfg_path).n_steps
    rows = []
    for r in raw:
        key = (int(r["trajectory_index"]), r["algorithm"])
        rows.append(
            SummaryRow(
                index=key[0],
                algorithm=key[1],
                seed=int(r["seed"]),
                status=r["status"],
                steps_done=int(r["steps_done"]),
                n_steps=n_steps if n_steps is not None else int(r["steps_done"]),
                final_error=float(r["final_error"]),
                final_sigma=int(r["final_sigma"]),
                last_truncation_step=_opt_int(r["last_truncation_step"]),
                sup_distance=float(r["sup_distance"]),
                final_radius=_opt_float(r["final_radius"]),
                monitors=mons.get(key, []),
            )
        )
    return rows


def read_monitors(path) -> dict:
    out = {}
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first[1:].strip() not in KNOWN_SCHEMAS:
            raise ValueError(f"{path}: unknown schema {first!r}")
        for r in csv.DictReader(fh):
            key = (int(r["trajectory_index"]), r["algorithm"])
            m = MartingaleMonitor(q=float(r["q"]), partial_sum=np.zeros(1))
            m.running_sup = float(r["sup_martingale"])
            m.tail_oscillation = float(r["tail_oscillation"])
            out.setdefault(key, []).append(m)
    return out


def reports_from_rows(rows, tolerance: float = 0.05, stabilization_fraction: float = 0.1) -> dict:
    by_algo = {}
    for r in rows:
        by_algo.setdefault(r.algorithm, []).append(r)
    reports = {}
    for algo, rs in by_algo.items():
        rm = by_algo.get("rm") if algo == "chen" else None
        reports[algo] = aggregate(rs, tolerance, stabilization_fraction, rm_trajectories=rm)
    return reports


def paired_table(chen, rm, limit: Optional[int] = 20) -> str:
    """Side-by-side table of seed-matched truncated and plain runs."""
    rm_by = {t.index: t for t in rm}
    lines = [f"{'traj':>5}  {'chen status':<11} {'chen error':>11} {'sigma':>5}  {'rm status':<10} {'rm steps':>8} {'rm error':>10}"]
    shown = 0
    for t in sorted(chen, key=lambda t: t.index):
        r = rm_by.get(t.index)
        if r is None:
            continue
        if limit is None or shown < limit:
            lines.append(
                f"{t.index:>5}  {t.status:<11} {t.final_error:>11.4g} {t.final_sigma:>5}  "
                f"{r.status:<10} {r.steps_done:>8} {r.final_error:>10.4g}"
            )
        shown += 1
    n = len(chen)
    chen_ok = sum(t.status == "completed" for t in chen)
    rm_div = sum(t.status == "diverged" for t in rm)
    lines.append(f"chen completed: {chen_ok}/{n}   rm diverged: {rm_div}/{len(rm)}")
    return "\n".join(lines)
