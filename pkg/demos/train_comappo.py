"""Train Co-MAPPO briefly on the toy family, then evaluate it greedily against WOA.

A few hundred episodes take about ten seconds; pass a larger count for a
converged policy (the acceptance suite uses 2000).

    python demos/train_comappo.py 300
"""
import sys

import numpy as np

from satoffload.harness.config import ExperimentConfig
from satoffload.harness.runner import evaluate


def main(episodes: int = 300):
    cfg = ExperimentConfig(episodes=episodes)
    rep, result, _ = evaluate(cfg, "comappo", seed=0)
    rewards = result.episode_rewards()
    k = min(50, len(rewards) // 2) or 1
    print(f"episode reward: first {k} mean {np.mean(rewards[:k]):.3f}, last {k} mean {np.mean(rewards[-k:]):.3f}")
    woa, _, _ = evaluate(cfg, "woa", seed=0)
    print(f"held-out objective: comappo {rep.objective:.3f}, woa {woa.objective:.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 300)
