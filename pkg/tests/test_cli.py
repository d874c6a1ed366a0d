import json
import subprocess
import sys

import pytest
import yaml

from satoffload.harness.cli import main

CHEAP = {
    "episodes": 2, "train_pool": 2, "eval_scenarios": 2, "eval_episodes": 1, "woa_budget": 2, "woa_population": 3,
}


@pytest.fixture
def cheap_cfg(tmp_path):
    p = tmp_path / "cheap.yaml"
    p.write_text(yaml.safe_dump(CHEAP))
    return p


def run(*argv):
    return main([str(a) for a in argv])


def test_verify_allocator(capsys, tmp_path):
    assert run("verify-allocator", "--instances", 10, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "passed" in out and out.strip().endswith("PASS")
    assert (tmp_path / "verify.csv").exists() and (tmp_path / "manifest.json").exists()


def test_generate_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("generate", "--seed", 7, "--out", a) == 0
    assert run("generate", "--seed", 7, "--out", b) == 0
    assert (a / "scenario_7.json").read_bytes() == (b / "scenario_7.json").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["seeds"] == [7] and "scenario_7.json" in man["outputs"] and len(man["config_hash"]) == 64


def test_missing_config(capsys, tmp_path):
    path = tmp_path / "missing.yaml"
    assert run("evaluate", "--config", path) == 2
    assert str(path) in capsys.readouterr().err


def test_malformed_config(capsys, tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("alpha1: [oops")
    assert run("generate", "--config", p, "--out", tmp_path / "o") == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert run("generate", "--bogus") == 2
    assert "unrecognized arguments" in capsys.readouterr().err


def test_unknown_command():
    assert run("fly") == 2


def test_train_rejects_baseline(cheap_cfg, tmp_path):
    assert run("train", "--scheduler", "woa", "--config", cheap_cfg, "--out", tmp_path) == 2


def test_train_writes_checkpoint(cheap_cfg, tmp_path):
    assert run("train", "--scheduler", "comappo", "--config", cheap_cfg, "--seed", 1, "--out", tmp_path) == 0
    assert (tmp_path / "checkpoint_comappo_1.npz").exists()
    assert (tmp_path / "curves_comappo_1.csv").read_text().startswith("episode,agent_class")


def test_evaluate_outputs_repeatable(cheap_cfg, tmp_path):
    for d in ("a", "b"):
        assert run("evaluate", "--config", cheap_cfg, "--seed", 2, "--out", tmp_path / d) == 0
    for name in ("metrics.csv", "curves_comappo_2.csv", "curves_ccppo_2.csv", "manifest.json", "config.yaml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "metrics.csv").read_text().splitlines()
    assert lines[0].startswith("scheduler,seed,mst") and len(lines) == 5


def test_sweep_and_alpha(cheap_cfg, tmp_path, capsys):
    cfg = yaml.safe_load(cheap_cfg.read_text())
    cfg.update(sweep_axis="memory", sweep_values=["10-50", "50-90"], schedulers=["random", "woa"])
    p = tmp_path / "sweep.yaml"
    p.write_text(yaml.safe_dump(cfg))
    assert run("sweep", "--config", p, "--seed", 0, "--seed", 1, "--out", tmp_path / "s") == 0
    assert len((tmp_path / "s" / "sweep.csv").read_text().splitlines()) == 1 + 2 * 2 * 2
    assert run("alpha-sweep", "--config", cheap_cfg, "--alphas", 0.3, 0.7, "--out", tmp_path / "al") == 0
    assert "alpha sweep" in capsys.readouterr().out


def test_ablation(cheap_cfg, tmp_path):
    assert run("ablation", "--config", cheap_cfg, "--out", tmp_path) == 0
    rows = (tmp_path / "ablation.csv").read_text().splitlines()
    assert rows[1].startswith("closed_form") and rows[2].startswith("learned_allocation")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "satoffload", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify-allocator" in r.stdout
