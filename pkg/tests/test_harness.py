from dataclasses import dataclass

import numpy as np
import pytest

from satoffload.allocator import Weights
from satoffload.harness import metrics as M
from satoffload.harness import runner
from satoffload.harness.config import ConfigError, ExperimentConfig, dump_config, load_config
from satoffload.harness.metrics import MetricsReport, aggregate, compute_metrics, pooled_metrics, proportions_by_bin
from satoffload.harness.runner import (
    alpha_tradeoff, derive_seed, evaluate, hyper_for, point_config, run_sweep, worker_count,
)


@dataclass(frozen=True)
class Out:
    parent_task: int
    t_ser: float
    p_ser: float
    success: bool = True
    layer: str = "LMS"
    memory_mb: float = 10.0
    compute_gigacycles: float = 15.0


def cheap(**kw):
    base = dict(episodes=2, train_pool=2, eval_scenarios=2, eval_episodes=1, woa_budget=2, woa_population=3,
                hyper={"profile": None})
    base.pop("hyper")
    base.update(kw)
    return ExperimentConfig(**base)


class TestMetrics:
    def test_single(self):
        r = compute_metrics([Out(0, 2.0, 4.0)], Weights(0.5, 0.5))
        assert (r.mst, r.msp, r.objective) == (2.0, 4.0, 3.0)

    def test_equal_tasks_idempotent(self):
        one = compute_metrics([Out(0, 2.0, 4.0), Out(0, 1.0, 3.0)])
        two = compute_metrics([Out(0, 2.0, 4.0), Out(0, 1.0, 3.0), Out(1, 2.0, 4.0), Out(1, 1.0, 3.0)])
        assert one.objective == two.objective

    def test_hand_fixture(self):
        # task 0: T = (1, 3), P = (2, 2); task 1: T = (4, 6), P = (1, 5)
        # T_mean = (2, 5) -> 3.5; P_mean = (2, 3) -> 2.5; eta = 0.7*3.5 + 0.3*2.5 = 3.2
        outs = [Out(0, 1, 2), Out(0, 3, 2), Out(1, 4, 1), Out(1, 6, 5)]
        r = compute_metrics(outs, Weights(0.7, 0.3))
        assert r.mst == pytest.approx(3.5) and r.msp == pytest.approx(2.5)
        assert r.objective == pytest.approx(3.2, abs=1e-12)

    def test_task_mean_not_subtask_mean(self):
        outs = [Out(0, 1, 0), Out(0, 1, 0), Out(0, 1, 0), Out(1, 5, 0)]
        assert compute_metrics(outs).mst == 3.0

    def test_empty(self):
        r = compute_metrics([])
        assert r.empty and r.mst is None and r.n_tasks == 0
        assert not aggregate([r]).values

    def test_proportions_and_success(self):
        outs = [Out(0, 1, 1, layer="CNS", success=False), Out(0, 1, 1, layer="CubeSat"), Out(1, 1, 1), Out(1, 1, 1)]
        r = compute_metrics(outs)
        assert r.proportions == {"CNS": 0.25, "LMS": 0.5, "CubeSat": 0.25}
        assert r.success_rate == 0.75

    def test_identity_enforced(self):
        with pytest.raises(AssertionError):
            MetricsReport(1.0, 1.0, 5.0, 1.0, {"CNS": 1.0, "LMS": 0.0, "CubeSat": 0.0}, 1, 1)
        with pytest.raises(AssertionError):
            MetricsReport(1.0, 1.0, 1.0, 1.0, {"CNS": 0.5, "LMS": 0.0, "CubeSat": 0.0}, 1, 1)

    def test_pooled_distinguishes_episodes(self):
        ep = [Out(0, 1.0, 1.0)]
        ep2 = [Out(0, 3.0, 1.0)]
        r = pooled_metrics([ep, ep2])
        assert r.n_tasks == 2 and r.mst == 2.0

    def test_aggregate(self):
        rs = [compute_metrics([Out(0, t, t)]) for t in (1.0, 3.0)]
        a = aggregate(rs, "mst")
        assert a.mean == 2.0 and a.std == 1.0

    def test_bins(self):
        outs = [Out(0, 1, 1, layer="CubeSat", memory_mb=m) for m in (10, 20, 30)]
        outs += [Out(0, 1, 1, layer="CNS", memory_mb=m) for m in (70, 80, 90)]
        bins = proportions_by_bin(outs, n_bins=2)
        assert [b.count for b in bins] == [3, 3]
        assert bins[0].proportions["CubeSat"] == 1.0 and bins[1].proportions["CNS"] == 1.0
        edges = proportions_by_bin(outs, edges=(10, 50, 90))
        assert [b.count for b in edges] == [3, 3]
        assert proportions_by_bin([]) == []


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.alpha1 + cfg.alpha2 == 1.0
        assert cfg.scenario.n_lms == 1 and cfg.scenario.n_cubesat == 3 and cfg.scenario.n_cte == 20

    @pytest.mark.parametrize("kw", [
        {"alpha1": 0.6}, {"alpha1": 0.0, "alpha2": 1.0}, {"schedulers": ("dqn",)}, {"profile": "huge"},
        {"sweep_axis": "memory"}, {"sweep_axis": "bogus", "sweep_values": (1,)}, {"episodes": -1},
        {"seeds": ()}, {"woa_population": 1}, {"env": {"nope": 1}}, {"version": 2},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)

    def test_yaml_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(alpha1=0.3, alpha2=0.7, seeds=(1, 2), hyper={"lr_actor": 0.001})
        p = tmp_path / "c.yaml"
        p.write_text(dump_config(cfg))
        back = load_config(p)
        assert back.config_hash() == cfg.config_hash()

    def test_partial_scenario(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("scenario: {n_cte: 12}\nalpha1: 0.4\nalpha2: 0.6\n")
        cfg = load_config(p)
        assert cfg.scenario.n_cte == 12 and cfg.scenario.n_cubesat == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="nope.yaml"):
            load_config(tmp_path / "nope.yaml")

    @pytest.mark.parametrize("text", ["a: [1, 2", "- 1\n- 2\n", "unknown_key: 3\n", "scenario: 5\n"])
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "bad.yaml"
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_config(p)

    def test_hash_ignores_out(self):
        assert ExperimentConfig(out="a").config_hash() == ExperimentConfig(out="b").config_hash()
        assert ExperimentConfig(seeds=(1,)).config_hash() != ExperimentConfig(seeds=(2,)).config_hash()


class TestRunner:
    def test_derive_seed(self):
        assert derive_seed(0, 1) == derive_seed(0, 1)
        assert len({derive_seed(0, t) for t in range(5)}) == 5

    def test_hyper_profiles(self):
        assert hyper_for(ExperimentConfig()).profile.actor_hidden == (32, 32)
        assert hyper_for(ExperimentConfig(profile="paper")).profile.actor_hidden == (512, 512, 512)
        assert hyper_for(ExperimentConfig(ablation_no_convex=True)).learned_allocation

    def test_point_config(self):
        cfg = ExperimentConfig(sweep_axis="subtasks", sweep_values=(500,))
        assert point_config(cfg, 500).scenario.n_tasks == 10
        m = point_config(cfg.replace(sweep_axis="memory", sweep_values=("20-40",)), "20-40")
        assert m.scenario.memory_range_mb == (20.0, 40.0)
        a = point_config(cfg.replace(sweep_axis="alpha", sweep_values=(0.3,)), 0.3)
        assert (a.alpha1, a.alpha2) == (0.3, 0.7)

    def test_single_point_is_evaluate(self):
        cfg = cheap(schedulers=("woa",), seeds=(3,))
        rows = run_sweep(cfg)
        rep, _, _ = evaluate(cfg, "woa", 3)
        assert len(rows) == 1 and rows[0]["objective"] == rep.objective

    def test_row_count(self, tmp_path):
        cfg = cheap(schedulers=("random", "woa"), seeds=(0, 1), sweep_axis="memory", sweep_values=("10-50", "50-90", "90-130"))
        rows = run_sweep(cfg, tmp_path / "s.csv")
        assert len(rows) == 3 * 2 * 2
        assert len((tmp_path / "s.csv").read_text().splitlines()) == 1 + 12
        assert all(r["status"] == "ok" for r in rows)

    def test_failed_point_marked(self, monkeypatch):
        real = runner.evaluate

        def flaky(cfg, name, seed, curve_path=None):
            if seed == 1:
                raise RuntimeError("boom")
            return real(cfg, name, seed, curve_path)

        monkeypatch.setattr(runner, "evaluate", flaky)
        rows = run_sweep(cheap(schedulers=("random",), seeds=(0, 1, 2)))
        assert [r["status"] for r in rows] == ["ok", "failed", "ok"]
        assert "boom" in rows[1]["error"]

    def test_sweep_parallel_matches_serial(self):
        cfg = cheap(schedulers=("random", "woa"), seeds=(0, 1))
        serial = run_sweep(cfg, workers=1)
        parallel = run_sweep(cfg, workers=2)
        assert serial == parallel

    def test_worker_env(self, monkeypatch):
        monkeypatch.setenv("SATOFFLOAD_WORKERS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("SATOFFLOAD_WORKERS", "x")
        with pytest.raises(ValueError):
            worker_count()

    def test_objective_grows_with_subtasks(self):
        # a trend check: adjacent points are within evaluation noise of each other
        from scipy.stats import spearmanr

        counts = (500, 1000, 1500, 2000)
        cfg = ExperimentConfig(schedulers=("random", "woa"), seeds=(0, 1), eval_scenarios=4, eval_episodes=1,
                               sweep_axis="subtasks", sweep_values=counts)
        rows = run_sweep(cfg)
        for name in cfg.schedulers:
            pts = [(float(r["axis_value"]), r["objective"], r["seed"]) for r in rows if r["scheduler"] == name]
            rho = spearmanr([p[0] for p in pts], [p[1] for p in pts]).statistic
            assert rho > 0.5, name
            for seed in cfg.seeds:
                obj = [p[1] for p in pts if p[2] == seed]
                assert obj[-1] > obj[0]

    def test_alpha_point_matches_default(self):
        cfg = cheap(seeds=(0,))
        curve = alpha_tradeoff(cfg, (0.3, 0.5), "comappo")
        rep, _, _ = evaluate(cfg, "comappo", 0)
        assert curve.mst[0][1] == rep.mst and curve.msp[0][1] == rep.msp
        for a, t, p, o in zip((0.3, 0.5), curve.mst[0], curve.msp[0], curve.objective[0]):
            assert o == pytest.approx(a * t + (1 - a) * p, abs=1e-12)

    def test_alpha_domain(self):
        with pytest.raises(ValueError):
            alpha_tradeoff(cheap(), (0.0, 0.5))

    def test_learned_scheduler_evaluates(self):
        rep, res, eps = evaluate(cheap(), "ccppo", 0)
        assert not rep.empty and len(eps) == 2 and len(res.episode_rewards()) == 2
        assert sum(rep.proportions.values()) == pytest.approx(1.0)

    def test_ablation_runs(self):
        rep, _, _ = evaluate(cheap(ablation_no_convex=True), "comappo", 0)
        assert not rep.empty
