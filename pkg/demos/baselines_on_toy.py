"""Play the toy scenario with Random-X and WOA and compare their metrics.

    python demos/baselines_on_toy.py
"""
from satoffload.env import OffloadEnv
from satoffload.harness.config import ExperimentConfig
from satoffload.harness.metrics import pooled_metrics
from satoffload.harness.runner import evaluation_scenarios, run_episode
from satoffload.baselines import RandomXPolicy, WoaPolicy


def main():
    cfg = ExperimentConfig(eval_scenarios=4)
    scenarios = evaluation_scenarios(cfg, seed=0)
    env_cfg = cfg.env_config()
    print(f"{len(scenarios)} scenarios, {len(scenarios[0].subtasks)} sub-tasks each")
    for name, policy in (("random", RandomXPolicy(0)), ("woa", WoaPolicy(budget=20, seed=0))):
        episodes = [run_episode(OffloadEnv(sc, env_cfg), policy, seed=i) for i, sc in enumerate(scenarios)]
        r = pooled_metrics(episodes, env_cfg.weights)
        shares = " ".join(f"{k}={v:.2f}" for k, v in r.proportions.items())
        print(f"{name:7s} objective {r.objective:7.3f}  MST {r.mst:6.3f} s  MSP {r.msp:6.3f}  "
              f"on time {r.success_rate:.2f}  {shares}")


if __name__ == "__main__":
    main()
