import numpy as np
import pytest

EPS = np.finfo(float).eps


def reconstruction_ok(x_prev, x_next, rec):
    """Robbins-Monro form of one step, within 4 eps relative to |X_n| + gamma |U|."""
    g = rec.gamma
    rhs = x_prev - g * rec.drift - g * rec.delta_m + g * rec.p
    U = rec.drift + rec.delta_m
    scale = np.linalg.norm(x_prev) + g * np.linalg.norm(U)
    return np.linalg.norm(x_next - rhs) <= 4 * EPS * scale


@pytest.fixture
def check_reconstruction():
    return reconstruction_ok


ENSEMBLE_SEED = 20261019
ACCEPTANCE_LINES = []


def cubic_config(dim, n_trajectories=1000, n_steps=100_000, **extra):
    from truncsa.config import parse_config

    raw = {
        "problem": {"name": "cubic", "dim": dim},
        "noise": {"kind": "additive", "sigma": 1.0},
        "algorithm": "chen",
        "gain": {"a": 1.0, "b": 0.0, "alpha": 1.0},
        "compacts": {"r0": 2.0, "growth": "geometric", "rho_or_step": 2.0},
        "x0": [0.5] + [0.0] * (dim - 1),
        "n_steps": n_steps,
        "n_trajectories": n_trajectories,
        "master_seed": ENSEMBLE_SEED,
        "diagnostics": {"q": [2.0, 4.0, 8.0], "tolerances": [0.05], "window_fraction": 0.1},
    }
    raw.update(extra)
    return parse_config(raw)


def _timed_ensemble(dim, out, workers=1):
    import time

    from truncsa.harness import run_ensemble

    t0 = time.perf_counter()
    res = run_ensemble(cubic_config(dim), out, workers=workers)
    res.elapsed = time.perf_counter() - t0
    res.out = out
    return res


@pytest.fixture(scope="session")
def cubic_ensemble_d1(tmp_path_factory):
    return _timed_ensemble(1, tmp_path_factory.mktemp("ens_d1"))


@pytest.fixture(scope="session")
def cubic_ensemble_d3(tmp_path_factory):
    return _timed_ensemble(3, tmp_path_factory.mktemp("ens_d3"))


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
