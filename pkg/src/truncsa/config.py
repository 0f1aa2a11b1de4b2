"""Experiment configuration: flat TOML with dotted keys.

Example::

    problem.name = "cubic"
    problem.dim = 3
    noise.kind = "additive"
    noise.sigma = 1.0
    algorithm = "chen"          # chen | rm | both_paired
    gain.alpha = 1.0
    compacts.r0 = 2.0
    compacts.growth = "geometric"
    compacts.rho_or_step = 2.0
    x0 = [0.5, 0.0, 0.0]
    n_steps = 100000
    n_trajectories = 1000
    master_seed = 42

Nested tables (``[gain]`` followed by ``alpha = 1``) are equivalent to the
dotted form.  ``problem = "cubic"``, ``dim`` and ``seed`` are accepted as
shorthands for ``problem.name``, ``problem.dim`` and ``master_seed``.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .diagnostics import default_q_values
from .problems import PROBLEM_NAMES, NoiseModel, make_problem
from .schedules import CompactFamily, GainSchedule

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "KNOWN_KEYS"]


class ConfigError(ValueError):
    """Unreadable or invalid experiment configuration."""


_ALIASES = {"problem": "problem.name", "dim": "problem.dim", "seed": "master_seed"}

KNOWN_KEYS = (
    "problem.name",
    "problem.dim",
    "problem.x_star",
    "problem.matrix",
    "noise.kind",
    "noise.sigma",
    "algorithm",
    "reset",
    "gain.a",
    "gain.b",
    "gain.alpha",
    "compacts.center",
    "compacts.r0",
    "compacts.growth",
    "compacts.rho_or_step",
    "x0",
    "n_steps",
    "n_trajectories",
    "master_seed",
    "record_policy",
    "record_thin",
    "output.dir",
    "diagnostics.q",
    "diagnostics.tolerances",
    "diagnostics.stabilization_fraction",
    "diagnostics.window_fraction",
    "diagnostics.divergence_threshold",
)

ALGORITHMS = ("chen", "rm", "both_paired")


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class ExperimentConfig:
    problem_name: str
    dim: int
    x_star: list
    matrix: Any
    noise_kind: str
    noise_sigma: float
    algorithm: str
    reset: str
    gain_a: float
    gain_b: float
    gain_alpha: float
    compacts_center: list
    compacts_r0: float
    compacts_growth: str
    compacts_rate: float
    x0: list
    n_steps: int
    n_trajectories: int
    master_seed: int
    record_policy: str
    record_thin: int
    output_dir: str
    q_values: list
    tolerances: list
    stabilization_fraction: float
    window_fraction: float
    divergence_threshold: float
    defaults_applied: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def problem(self):
        return make_problem(
            self.problem_name, self.dim, self.x_star, NoiseModel(self.noise_kind, self.noise_sigma), self.matrix
        )

    def schedule(self) -> GainSchedule:
        return GainSchedule(self.gain_a, self.gain_b, self.gain_alpha)

    def compacts(self) -> CompactFamily:
        return CompactFamily(tuple(self.compacts_center), self.compacts_r0, self.compacts_growth, self.compacts_rate)

    @property
    def window(self) -> int:
        return max(1, math.ceil(self.window_fraction * self.n_steps))

    def canonical(self) -> dict:
        """Every setting that influences results, with dotted keys."""
        return {
            "problem.name": self.problem_name,
            "problem.dim": self.dim,
            "problem.x_star": self.x_star,
            "problem.matrix": self.matrix,
            "noise.kind": self.noise_kind,
            "noise.sigma": self.noise_sigma,
            "algorithm": self.algorithm,
            "reset": self.reset,
            "gain.a": self.gain_a,
            "gain.b": self.gain_b,
            "gain.alpha": self.gain_alpha,
            "compacts.center": self.compacts_center,
            "compacts.r0": self.compacts_r0,
            "compacts.growth": self.compacts_growth,
            "compacts.rho_or_step": self.compacts_rate,
            "x0": self.x0,
            "n_steps": self.n_steps,
            "n_trajectories": self.n_trajectories,
            "master_seed": self.master_seed,
            "record_policy": self.record_policy,
            "record_thin": self.record_thin,
            "diagnostics.q": self.q_values,
            "diagnostics.tolerances": self.tolerances,
            "diagnostics.stabilization_fraction": self.stabilization_fraction,
            "diagnostics.window_fraction": self.window_fraction,
            "diagnostics.divergence_threshold": self.divergence_threshold,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_toml(self) -> str:
        lines = []
        for k, v in self.canonical().items():
            if v is None:
                continue
            lines.append(f"{k} = {json.dumps(v)}")
        lines.append(f"output.dir = {json.dumps(self.output_dir)}")
        return "\n".join(lines) + "\n"


def _vector(name, value, dim):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1 and dim > 1:
        arr = np.full(dim, float(arr[0]))
    if arr.shape != (dim,):
        raise ConfigError(f"{name} must have {dim} coordinates, got {value!r}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be finite, got {value!r}")
    return [float(v) for v in arr]


def parse_config(raw: dict, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Validate a (possibly nested) mapping and fill in defaults."""
    flat = {}
    for k, v in _flatten(raw).items():
        flat[_ALIASES.get(k, k)] = v
    for k, v in (overrides or {}).items():
        flat[_ALIASES.get(k, k)] = v
    unknown = sorted(set(flat) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    defaults = []

    def get(key, default):
        if key in flat:
            return flat[key]
        defaults.append(key)
        return default

    def number(key, default, kind=float):
        v = get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key} must be a number, got {v!r}")
        if kind is int:
            if isinstance(v, float) and not v.is_integer():
                raise ConfigError(f"{key} must be an integer, got {v!r}")
            return int(v)
        return float(v)

    if "problem.name" not in flat:
        raise ConfigError("problem.name is required")
    name = flat["problem.name"]
    if name not in PROBLEM_NAMES:
        raise ConfigError(f"problem.name must be one of {', '.join(PROBLEM_NAMES)}, got {name!r}")
    dim = number("problem.dim", 1, int)
    if dim < 1:
        raise ConfigError("problem.dim must be >= 1")
    x_star = _vector("problem.x_star", get("problem.x_star", 0.0), dim)
    matrix = get("problem.matrix", None)
    noise_kind = get("noise.kind", "additive")
    noise_sigma = number("noise.sigma", 1.0)

    algorithm = get("algorithm", "chen")
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {', '.join(ALGORITHMS)}, got {algorithm!r}")
    reset = get("reset", "x0")
    if reset not in ("x0", "last_valid"):
        raise ConfigError(f"reset must be 'x0' or 'last_valid', got {reset!r}")

    gain_a = number("gain.a", 1.0)
    gain_b = number("gain.b", 0.0)
    gain_alpha = number("gain.alpha", 1.0)
    if not 0.5 < gain_alpha <= 1.0:
        raise ConfigError("gain.alpha must be in (0.5, 1]")
    if not gain_a > 0:
        raise ConfigError("gain.a must be > 0")
    if not gain_b >= 0:
        raise ConfigError("gain.b must be >= 0")

    default_x0 = [0.5] + [0.0] * (dim - 1)
    x0 = _vector("x0", get("x0", default_x0), dim)
    center = _vector("compacts.center", get("compacts.center", 0.0), dim)
    dist0 = math.dist(x0, center)
    compact_keys = [k for k in flat if k.startswith("compacts.")]
    r0 = number("compacts.r0", 2.0 * dist0 + 1.0)
    growth = get("compacts.growth", "geometric")
    rate = number("compacts.rho_or_step", 2.0 if growth == "geometric" else 1.0)

    n_steps = number("n_steps", 1000, int)
    if n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    n_traj = number("n_trajectories", 1, int)
    if n_traj < 1:
        raise ConfigError("n_trajectories must be >= 1")
    seed = number("master_seed", 0, int)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("master_seed must be a 64-bit unsigned integer")

    record = get("record_policy", "final_only")
    if record not in ("full", "thinned", "final_only"):
        raise ConfigError(f"record_policy must be full, thinned or final_only, got {record!r}")
    thin = number("record_thin", max(1, math.ceil(n_steps / 1000)), int)
    if thin < 1:
        raise ConfigError("record_thin must be >= 1")
    out_dir = str(get("output.dir", "out"))

    q_raw = get("diagnostics.q", None)
    if q_raw is None:
        q_values = list(default_q_values(x0, x_star))
    else:
        q_values = [float(q) for q in np.atleast_1d(q_raw)]
        if any(not q > 0 for q in q_values):
            raise ConfigError("diagnostics.q values must be > 0")
    tol = [float(t) for t in np.atleast_1d(get("diagnostics.tolerances", [0.05]))]
    if not tol or any(not t > 0 for t in tol):
        raise ConfigError("diagnostics.tolerances must be positive")
    stab = number("diagnostics.stabilization_fraction", 0.1)
    wfrac = number("diagnostics.window_fraction", 0.1)
    if not (0 < stab <= 1 and 0 < wfrac <= 1):
        raise ConfigError("diagnostics fractions must be in (0, 1]")
    thr = number("diagnostics.divergence_threshold", 1e6)

    cfg = ExperimentConfig(
        problem_name=name, dim=dim, x_star=x_star, matrix=matrix, noise_kind=noise_kind,
        noise_sigma=noise_sigma, algorithm=algorithm, reset=reset, gain_a=gain_a, gain_b=gain_b,
        gain_alpha=gain_alpha, compacts_center=center, compacts_r0=r0, compacts_growth=growth,
        compacts_rate=rate, x0=x0, n_steps=n_steps, n_trajectories=n_traj, master_seed=seed,
        record_policy=record, record_thin=thin, output_dir=out_dir, q_values=q_values,
        tolerances=tol, stabilization_fraction=stab, window_fraction=wfrac,
        divergence_threshold=thr, defaults_applied=defaults,
    )
    try:
        cfg.problem()
        cfg.schedule()
        compacts = cfg.compacts()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if algorithm != "rm" and not compacts.contains(0, x0):
        raise ConfigError(f"x0 = {x0} is not in K_0 (center {center}, radius compacts.r0 = {r0:g})")
    if algorithm == "rm" and compact_keys:
        msg = "compacts.* settings are ignored by the rm algorithm"
        cfg.warnings.append(msg)
        warnings.warn(msg, stacklevel=2)
    return cfg


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from None
    return parse_config(raw, overrides)
