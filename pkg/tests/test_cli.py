import json

import pytest

from truncsa.cli import main


def _cfg(tmp_path, text):
    p = tmp_path / "exp.toml"
    p.write_text(text)
    return str(p)


SMALL = 'problem = "cubic"\ndim = 1\nn_steps = 500\nn_trajectories = 4\nseed = 3\n'


def test_run_then_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", _cfg(tmp_path, SMALL), "--out", str(out)]) == 0
    assert (out / "summary.csv").exists()
    capsys.readouterr()
    assert main(["report", "--out", str(out), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["chen"]["n_trajectories"] == 4


def test_seed_override_changes_manifest(tmp_path):
    from truncsa.rng import derive_seed

    cfg = _cfg(tmp_path, SMALL)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "9"]) == 0
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seeds"] == [derive_seed(9, i) for i in range(4)]


@pytest.mark.parametrize("problem", ["linear", "cubic", "convex_potential"])
@pytest.mark.parametrize("noise", ["additive", "state_scaled"])
def test_check_passes_on_good_problems(problem, noise, capsys):
    assert main(["check", "--problem", problem, "--dim", "2", "--noise", noise, "--sigma", "1"]) == 0
    out = capsys.readouterr().out
    assert "H1 monotonicity: pass" in out and "H3 second moment: pass" in out


def test_check_flags_repulsive(capsys):
    assert main(["check", "--problem", "repulsive", "--dim", "2"]) == 3
    assert "violation at x" in capsys.readouterr().out


def test_compare_paired(tmp_path, capsys):
    cfg = _cfg(tmp_path, SMALL.replace("n_trajectories = 4", "n_trajectories = 3\nx0 = [3.0]\nnoise.sigma = 0.0"))
    assert main(["compare", "--config", cfg, "--out", str(tmp_path / "c")]) == 0
    assert "diverged" in capsys.readouterr().out
    assert main(["compare", "--from", str(tmp_path / "c")]) == 0


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["run"],
        ["frobnicate"],
        ["run", "--config", "/nonexistent/exp.toml"],
        ["check"],
        ["report", "--out", "/nonexistent/dir"],
    ],
)
def test_usage_and_config_errors_exit_1(argv):
    assert main(argv) == 1


def test_bad_alpha_exit_1(tmp_path, capsys):
    assert main(["run", "--config", _cfg(tmp_path, SMALL + "gain.alpha = 0.4\n")]) == 1
    assert "gain.alpha must be in (0.5, 1]" in capsys.readouterr().err


def test_runtime_failure_exit_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    # output directory path runs through a regular file
    assert main(["run", "--config", _cfg(tmp_path, SMALL), "--out", str(blocker / "out")]) == 2
