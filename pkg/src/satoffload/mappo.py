"""Cooperative multi-agent PPO with an attention critic, and the centralised single-agent variant.

Co-MAPPO
    One actor per agent class (CubeSat, LMS), shared by all agents of the class.
    One attention critic ``Q_b(z, a) = f_c(g_c(z_b, a_b), psi_b)`` where ``psi_b``
    attends over the other active agents' embeddings. Advantages subtract a
    counterfactual baseline that marginalises agent ``b``'s own action under
    its old policy while the others' actions stay fixed.

CC-PPO
    A single super-agent observing the concatenation of all agents'
    observations; its joint action factorises into one menu choice per agent.
    The critic is the same attention critic with a single agent (``psi = 0``).

Rollouts record the log-probabilities of the acting policy, which is the
"old" policy for the update that follows, so the old copies are refreshed
exactly once per update block.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .env import (
    CLASS_CUBESAT,
    CLASS_LMS,
    CLASS_NAMES,
    MENU_SIZE,
    OBS_DIM,
    EnvConfig,
    LearnedAllocationHook,
    OffloadEnv,
)
from .model import Scenario, ScenarioConfig, generate_scenario, iter_seeds
from .neural import tensor as T
from .neural.adam import AdamState, adam_step, clip_grad_norm
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .neural.layers import AttentionHead, Dense, Mlp, NetProfile
from .neural.tensor import Tensor, gradient, no_grad, softmax_np

log = logging.getLogger(__name__)

N_CLASSES = 2


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, checkpoint: dict):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class PpoHyper:
    clip: float = 0.2
    gamma: float = 0.995
    lam: float = 0.95
    epochs: int = 4
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    minibatch: int = 1024
    pool_capacity: int = 10240
    episodes_per_update: int = 1
    entropy_coef: float = 0.0
    normalize_advantages: bool = False
    max_grad_norm: float | None = None
    profile: NetProfile = field(default_factory=NetProfile.test)
    learned_allocation: bool = False  # ablation: the actor also picks resource shares
    allocation_levels: tuple[float, ...] = (0.125, 0.25, 0.5, 1.0)

    def __post_init__(self) -> None:
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.epochs < 1 or self.minibatch < 1 or self.episodes_per_update < 1:
            raise ValueError("epochs, minibatch and episodes_per_update must be >= 1")

    @classmethod
    def test(cls, **kw) -> "PpoHyper":
        base = dict(
            lr_actor=3e-3, lr_critic=3e-3, epochs=8, episodes_per_update=8, entropy_coef=0.01,
            normalize_advantages=True, max_grad_norm=5.0, profile=NetProfile.test(),
        )
        base.update(kw)
        return cls(**base)

    @classmethod
    def paper(cls, **kw) -> "PpoHyper":
        base = dict(profile=NetProfile.paper())
        base.update(kw)
        return cls(**base)

    @property
    def n_actions(self) -> int:
        return MENU_SIZE * (len(self.allocation_levels) if self.learned_allocation else 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profile"] = asdict(self.profile)
        return d


# ---------------------------------------------------------------------------
# advantage estimation


def gae_q_targets(rewards: np.ndarray, q_old: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """``Q_hat(n) = sum_k (gamma*lam)**(k-n) * delta(k) + Q_old(n)``.

    ``delta(n) = r(n) + gamma * Q_old(n+1) - Q_old(n)`` with ``Q_old`` past the
    end taken as 0 (the episode ends).
    """
    rewards = np.asarray(rewards, dtype=float)
    q_old = np.asarray(q_old, dtype=float)
    n = rewards.size
    if n == 0:
        return np.zeros(0)
    nxt = np.append(q_old[1:], 0.0)
    delta = rewards + gamma * nxt - q_old
    acc = 0.0
    out = np.empty(n)
    for i in range(n - 1, -1, -1):
        acc = delta[i] + gamma * lam * acc
        out[i] = acc
    return out + q_old


@dataclass
class Trajectory:
    """One agent's decisions within an episode, in time order."""

    observations: np.ndarray  # (n, D)
    actions: np.ndarray  # (n,)
    rewards: np.ndarray  # (n,)
    q_old: np.ndarray  # (n,) critic value of the executed actions
    baseline: np.ndarray | None = None  # (n,) counterfactual baseline


def gae_advantage(trajectory: Trajectory, hyper: PpoHyper) -> tuple[np.ndarray, np.ndarray]:
    """(Q_hat, A) for every step of ``trajectory``.

    ``A = Q_hat - baseline`` with the counterfactual baseline when present,
    else ``A = Q_hat - Q_old``.
    """
    if len(trajectory.rewards) == 0:
        return np.zeros(0), np.zeros(0)
    q_hat = gae_q_targets(trajectory.rewards, trajectory.q_old, hyper.gamma, hyper.lam)
    base = trajectory.q_old if trajectory.baseline is None else trajectory.baseline
    return q_hat, q_hat - base


def counterfactual_baseline(pi_old: np.ndarray, q_values: np.ndarray) -> np.ndarray:
    """``sum_a' pi_old(a') * Q(s, (a^-b, a'))`` over the last axis."""
    return np.sum(np.asarray(pi_old) * np.asarray(q_values), axis=-1)


def counterfactual_advantage(q_hat: float, pi_old: np.ndarray, q_values: np.ndarray) -> float:
    return float(q_hat - counterfactual_baseline(pi_old, q_values))


def clipped_surrogate(ratio, adv, eps: float):
    """``min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)`` elementwise (Tensor or array)."""
    if isinstance(ratio, Tensor):
        return T.minimum(ratio * adv, T.clip(ratio, 1 - eps, 1 + eps) * adv)
    ratio = np.asarray(ratio, float)
    return np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)


# ---------------------------------------------------------------------------
# networks


class Actor:
    """Categorical policy over the menu, masked to valid entries."""

    def __init__(self, obs_dim: int, n_actions: int, hidden: Sequence[int], rng: np.random.Generator):
        self.net = Mlp([obs_dim, *hidden, n_actions], rng)

    def params(self) -> list[Tensor]:
        return self.net.params()

    def log_probs(self, obs, mask: np.ndarray) -> Tensor:
        return T.log_softmax(self.net(obs), mask, axis=-1)

    def probs_np(self, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        with no_grad():
            logits = self.net(obs).data
        return softmax_np(logits, mask)


class AttentionCritic:
    """Per-class encoders ``g_c`` and heads ``f_c`` around one shared attention head."""

    def __init__(
        self,
        obs_dim: int,
        n_actions: int,
        profile: NetProfile,
        rng: np.random.Generator,
        n_classes: int = N_CLASSES,
        value_activation: str = "relu",
    ):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.n_classes = n_classes
        self.encoders = [Dense(obs_dim + n_actions, profile.embed, rng) for _ in range(n_classes)]
        self.head = AttentionHead(profile.embed, profile.key, rng, value_activation)
        self.heads = [Mlp([profile.embed + profile.key, *profile.critic_hidden, 1], rng) for _ in range(n_classes)]

    def params(self) -> list[Tensor]:
        out = []
        for e in self.encoders:
            out += e.params()
        out += self.head.params()
        for h in self.heads:
            out += h.params()
        return out

    def _embed(self, z: np.ndarray, a_onehot: np.ndarray, cls_masks: list[np.ndarray]) -> Tensor:
        x = np.concatenate([z, a_onehot], axis=-1)
        e = None
        for c, enc in enumerate(self.encoders):
            if not cls_masks[c].any():
                continue
            part = T.relu(enc(x)) * cls_masks[c][None, :, None]
            e = part if e is None else e + part
        return e

    def _head(self, h: Tensor, cls_masks: list[np.ndarray]) -> Tensor:
        q = None
        for c, f in enumerate(self.heads):
            if not cls_masks[c].any():
                continue
            part = f(h)[..., 0] * cls_masks[c][None, :]
            q = part if q is None else q + part
        return q

    @staticmethod
    def attention_mask(active: np.ndarray) -> np.ndarray:
        s = active.shape[-1]
        m = active[..., None, :] & ~np.eye(s, dtype=bool)
        return m

    def forward(self, z: np.ndarray, actions: np.ndarray, active: np.ndarray, classes: np.ndarray) -> Tensor:
        """Q for every agent: ``z`` (B, S, D), ``actions`` (B, S) ints, ``active`` (B, S).

        ``actions`` may also be an already encoded (B, S, n_actions) array.
        """
        z = np.asarray(z, dtype=float)
        if z.ndim != 3 or z.shape[1] != len(classes):
            raise ValueError(f"expected observations shaped (B, {len(classes)}, D), got {z.shape}")
        actions = np.asarray(actions)
        onehot = actions.astype(float) if actions.ndim == 3 else np.eye(self.n_actions)[actions]
        masks = [(classes == c).astype(float) for c in range(self.n_classes)]
        e = self._embed(z, onehot, masks)
        psi, _ = self.head.mix(e, e, self.attention_mask(active))
        return self._head(T.concat([e, psi], axis=-1), masks)

    def counterfactual_q(self, z: np.ndarray, actions: np.ndarray, active: np.ndarray, classes: np.ndarray) -> np.ndarray:
        """(B, S, n_actions): Q of agent b with its action replaced, others fixed."""
        with no_grad():
            masks = [(classes == c).astype(float) for c in range(self.n_classes)]
            eye = np.eye(self.n_actions)
            e = self._embed(z, eye[actions], masks)
            att = self.attention_mask(active)
            out = np.zeros(actions.shape + (self.n_actions,))
            for a in range(self.n_actions):
                alt = np.full(actions.shape, a)
                e_alt = self._embed(z, eye[alt], masks)
                psi, _ = self.head.mix(e_alt, e, att)
                out[..., a] = self._head(T.concat([e_alt, psi], axis=-1), masks).data
        return out


def centralized_q(critic: AttentionCritic, agent: int, z: np.ndarray, a: np.ndarray, classes: np.ndarray, active=None) -> float:
    """Q of one agent for one joint observation ``z`` (S, D) and joint action ``a`` (S,)."""
    z = np.asarray(z, float)
    a = np.asarray(a)
    if z.shape[0] != len(classes) or a.shape[0] != len(classes):
        raise ValueError("one observation and one action per agent are required")
    act = np.ones(len(classes), bool) if active is None else np.asarray(active, bool)
    with no_grad():
        q = critic.forward(z[None], a[None], act[None], np.asarray(classes))
    return float(q.data[0, agent])


# ---------------------------------------------------------------------------
# experience


@dataclass
class EpisodeRecord:
    obs: np.ndarray  # (T, S, D)
    mask: np.ndarray  # (T, S, nA)
    active: np.ndarray  # (T, S)
    actions: np.ndarray  # (T, S)
    logp: np.ndarray  # (T, S)
    rewards: np.ndarray  # (T, S)


class ExperiencePool:
    """Steps of the current update block; cleared after every update."""

    def __init__(self, capacity: int = 10240):
        self.capacity = capacity
        self.episodes: list[EpisodeRecord] = []

    def __len__(self) -> int:
        return sum(len(e.obs) for e in self.episodes)

    def add(self, ep: EpisodeRecord) -> None:
        self.episodes.append(ep)
        while len(self) > self.capacity and len(self.episodes) > 1:
            self.episodes.pop(0)

    def clear(self) -> None:
        self.episodes = []


def expand_mask(mask: np.ndarray, n_levels: int) -> np.ndarray:
    """Server mask (..., 5) -> joint (server, level) mask (..., 5 * n_levels)."""
    return np.repeat(mask, n_levels, axis=-1)


# ---------------------------------------------------------------------------
# scenario streams


class ScenarioStream:
    """Deterministic sequence of training environments.

    A fixed pool of scenarios is drawn once from ``base_seed``; episode ``e``
    uses pool entry ``e % pool_size`` with a fresh reset seed.
    """

    def __init__(
        self,
        scenario_config: ScenarioConfig,
        env_config: EnvConfig,
        base_seed: int,
        pool_size: int = 32,
        scenarios: Sequence[Scenario] | None = None,
    ):
        self.env_config = env_config
        if scenarios is None:
            seeds = list(iter_seeds(base_seed, pool_size))
            scenarios = [generate_scenario(scenario_config, s) for s in seeds]
        self.envs = [OffloadEnv(sc, env_config) for sc in scenarios]
        self.reset_seeds = np.random.SeedSequence(base_seed)

    def __len__(self) -> int:
        return len(self.envs)

    def env_for(self, episode: int) -> OffloadEnv:
        return self.envs[episode % len(self.envs)]


# ---------------------------------------------------------------------------
# Co-MAPPO


@dataclass
class CurveRow:
    episode: int
    agent_class: str
    cumulative_reward: float
    policy_loss: float
    value_loss: float
    entropy: float


@dataclass
class TrainResult:
    curves: list[CurveRow]
    checkpoint: dict
    aborted: bool = False

    def episode_rewards(self) -> np.ndarray:
        """Total reward per episode (all classes)."""
        eps = sorted({r.episode for r in self.curves})
        tot = {e: 0.0 for e in eps}
        for r in self.curves:
            tot[r.episode] += r.cumulative_reward
        return np.array([tot[e] for e in eps])


def write_curves_csv(rows: Sequence[CurveRow], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["episode", "agent_class", "cumulative_reward", "policy_loss", "value_loss", "entropy"])
        for r in rows:
            w.writerow([r.episode, r.agent_class, repr(r.cumulative_reward), repr(r.policy_loss),
                        repr(r.value_loss), repr(r.entropy)])


class CoMappo:
    """Co-MAPPO learner for environments with a fixed agent layout."""

    kind = "comappo"

    def __init__(self, classes: np.ndarray, hyper: PpoHyper, seed: int, obs_dim: int = OBS_DIM):
        self.hyper = hyper
        self.classes = np.asarray(classes, dtype=np.int64)
        self.obs_dim = obs_dim
        self.rng = np.random.default_rng(seed)
        init_rng = np.random.default_rng(self.rng.integers(2**63))
        nA = hyper.n_actions
        hidden = hyper.profile.actor_hidden
        self.actors = [Actor(obs_dim, nA, hidden, init_rng) for _ in range(N_CLASSES)]
        self.critic = AttentionCritic(obs_dim, nA, hyper.profile, init_rng)
        self.actor_opt = AdamState.for_params(self.actor_params(), lr=hyper.lr_actor)
        self.critic_opt = AdamState.for_params(self.critic.params(), lr=hyper.lr_critic)
        self.pool = ExperiencePool(hyper.pool_capacity)
        self.last_stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}

    # -- parameters

    def actor_params(self) -> list[Tensor]:
        return [p for a in self.actors for p in a.params()]

    def named_params(self) -> dict[str, Tensor]:
        out = {}
        for c, a in enumerate(self.actors):
            for i, p in enumerate(a.params()):
                out[f"actor{c}/{i}"] = p
        for i, p in enumerate(self.critic.params()):
            out[f"critic/{i}"] = p
        return out

    def checkpoint(self) -> dict:
        return {
            "params": {k: p.data.copy() for k, p in self.named_params().items()},
            "optimizers": {"actor": _copy_state(self.actor_opt), "critic": _copy_state(self.critic_opt)},
            "rng": self.rng.bit_generator.state,
        }

    def restore(self, ckpt: dict) -> None:
        for k, p in self.named_params().items():
            p.data = ckpt["params"][k].copy()
        self.actor_opt = _copy_state(ckpt["optimizers"]["actor"])
        self.critic_opt = _copy_state(ckpt["optimizers"]["critic"])
        rng_state = ckpt["rng"]
        if isinstance(rng_state, np.random.Generator):
            rng_state = rng_state.bit_generator.state
        self.rng.bit_generator.state = rng_state

    def save(self, path: str | Path, metadata: dict | None = None) -> None:
        ck = self.checkpoint()
        save_checkpoint(path, ck["params"], ck["optimizers"], self.rng, metadata)

    def load(self, path: str | Path) -> dict:
        d = load_checkpoint(path)
        self.restore({"params": d["params"], "optimizers": d["optimizers"], "rng": d["rng"]})
        return d["metadata"]

    # -- acting

    def full_mask(self, mask: np.ndarray) -> np.ndarray:
        if self.hyper.learned_allocation:
            return expand_mask(mask, len(self.hyper.allocation_levels))
        return mask

    def policy(self, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Action probabilities (S, nA) for all agents."""
        probs = np.zeros(mask.shape)
        for c in range(N_CLASSES):
            idx = self.classes == c
            if idx.any():
                probs[idx] = self.actors[c].probs_np(obs[idx], mask[idx])
        return probs

    def act(self, obs: np.ndarray, mask: np.ndarray, active: np.ndarray, greedy: bool = False):
        m = self.full_mask(mask)
        probs = self.policy(obs, m)
        if greedy:
            a = np.argmax(probs, axis=1)
        else:
            u = self.rng.random(len(probs))
            a = np.minimum((probs.cumsum(axis=1) < u[:, None]).sum(axis=1), probs.shape[1] - 1)
            # never land on a masked entry through round-off
            bad = ~m[np.arange(len(a)), a]
            if bad.any():
                a[bad] = np.argmax(probs[bad], axis=1)
        logp = np.log(np.maximum(probs[np.arange(len(a)), a], 1e-300))
        return a, logp, m

    def env_actions(self, a: np.ndarray):
        if self.hyper.learned_allocation:
            n_lv = len(self.hyper.allocation_levels)
            return a // n_lv, a % n_lv
        return a, None

    def run_episode(self, env: OffloadEnv, reset_seed: int, greedy: bool = False, record: bool = True):
        env.reset(reset_seed)
        hook = LearnedAllocationHook(self.hyper.allocation_levels) if self.hyper.learned_allocation else None
        rows_obs, rows_mask, rows_act, rows_a, rows_lp, rows_r = [], [], [], [], [], []
        while not env.done:
            obs, mask, active = env.observe_all()
            a, logp, m = self.act(obs, mask, active, greedy)
            server_a, req = self.env_actions(a)
            res = env.step(server_a, hook, req)
            r = np.zeros(len(a))
            for rec in res.rewards:
                r[env.agent_position[rec.agent]] = rec.value
            if record:
                rows_obs.append(obs)
                rows_mask.append(m)
                rows_act.append(active)
                rows_a.append(a)
                rows_lp.append(logp)
                rows_r.append(r)
        if not record or not rows_obs:
            return None
        return EpisodeRecord(np.array(rows_obs), np.array(rows_mask), np.array(rows_act),
                             np.array(rows_a), np.array(rows_lp), np.array(rows_r))

    # -- learning

    def prepare(self, episodes: Sequence[EpisodeRecord]):
        """Stack episodes and compute Q_hat and advantages with the current (old) critic."""
        obs = np.concatenate([e.obs for e in episodes])
        mask = np.concatenate([e.mask for e in episodes])
        active = np.concatenate([e.active for e in episodes])
        actions = np.concatenate([e.actions for e in episodes])
        logp = np.concatenate([e.logp for e in episodes])
        rewards = np.concatenate([e.rewards for e in episodes])
        with no_grad():
            q_old = self.critic.forward(obs, actions, active, self.classes).data
        qcf = self.critic.counterfactual_q(obs, actions, active, self.classes)
        pi_old = np.zeros(mask.shape)
        for c in range(N_CLASSES):
            idx = self.classes == c
            if idx.any():
                flat = self.actors[c].probs_np(obs[:, idx].reshape(-1, obs.shape[-1]), mask[:, idx].reshape(-1, mask.shape[-1]))
                pi_old[:, idx] = flat.reshape(obs.shape[0], int(idx.sum()), -1)
        baseline = counterfactual_baseline(pi_old, qcf)
        q_hat = np.zeros(active.shape)
        adv = np.zeros(active.shape)
        start = 0
        for e in episodes:
            n = len(e.obs)
            for s in range(len(self.classes)):
                steps = np.flatnonzero(e.active[:, s]) + start
                if steps.size == 0:
                    continue
                traj = Trajectory(obs[steps, s], actions[steps, s], rewards[steps, s], q_old[steps, s], baseline[steps, s])
                qh, ad = gae_advantage(traj, self.hyper)
                q_hat[steps, s] = qh
                adv[steps, s] = ad
            start += n
        return dict(obs=obs, mask=mask, active=active, actions=actions, logp=logp, q_hat=q_hat, adv=adv)

    def losses(self, batch: dict, idx: np.ndarray):
        """(policy objective, value loss, entropy) tensors on the steps ``idx``."""
        h = self.hyper
        obs, mask, active = batch["obs"][idx], batch["mask"][idx], batch["active"][idx]
        actions, logp_old = batch["actions"][idx], batch["logp"][idx]
        adv, q_hat = batch["adv"][idx], batch["q_hat"][idx]
        objective = None
        entropy = None
        n_total = max(int(active.sum()), 1)
        for c in range(N_CLASSES):
            sel = active & (self.classes[None, :] == c)
            if not sel.any():
                continue
            o, m = obs[sel], mask[sel]
            a_c, lp_old, A = actions[sel], logp_old[sel], adv[sel]
            if h.normalize_advantages and A.size > 1:
                A = (A - A.mean()) / (A.std() + 1e-8)
            lp_all = self.actors[c].log_probs(o, m)
            lp = T.pick(lp_all, a_c)
            ratio = T.exp(lp - lp_old)
            surr = clipped_surrogate(ratio, A, h.clip).sum() * (1.0 / n_total)
            p_all = T.exp(lp_all)
            ent = -(p_all * T.mul(lp_all, m.astype(float))).sum() * (1.0 / n_total)
            objective = surr if objective is None else objective + surr
            entropy = ent if entropy is None else entropy + ent
        q = self.critic.forward(obs, actions, active, self.classes)
        err = (q - q_hat) * active.astype(float)
        value_loss = T.square(err).sum() * (1.0 / n_total)
        return objective, value_loss, entropy

    def update(self) -> dict:
        """K epochs of shuffled minibatch PPO over the pool, then clear it."""
        h = self.hyper
        if len(self.pool) == 0:
            log.warning("empty experience pool; update skipped")
            return dict(self.last_stats)
        batch = self.prepare(self.pool.episodes)
        n = len(batch["obs"])
        mb = min(h.minibatch, n)
        stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
        count = 0
        for _ in range(h.epochs):
            perm = self.rng.permutation(n)
            for start in range(0, n, mb):
                idx = perm[start : start + mb]
                obj, vloss, ent = self.losses(batch, idx)
                if obj is not None:
                    total = obj + ent * h.entropy_coef if h.entropy_coef else obj
                    ga = clip_grad_norm(gradient(total, self.actor_params()), h.max_grad_norm)
                    adam_step(self.actor_params(), ga, self.actor_opt, ascent=True)
                gc = clip_grad_norm(gradient(vloss, self.critic.params()), h.max_grad_norm)
                adam_step(self.critic.params(), gc, self.critic_opt)
                stats["policy_loss"] += -(obj.item() if obj is not None else 0.0)
                stats["value_loss"] += vloss.item()
                stats["entropy"] += ent.item() if ent is not None else 0.0
                count += 1
        self.pool.clear()
        self.last_stats = {k: v / max(count, 1) for k, v in stats.items()}
        for k, v in self.last_stats.items():
            if not math.isfinite(v):
                raise FloatingPointError(f"{k} is {v}")
        return dict(self.last_stats)

    def class_rewards(self, ep: EpisodeRecord) -> dict[str, float]:
        out = {}
        for c in range(N_CLASSES):
            idx = self.classes == c
            if idx.any():
                out[CLASS_NAMES[c]] = float(ep.rewards[:, idx].sum())
        return out

    def train(self, stream: ScenarioStream, episodes: int, curve_path: str | Path | None = None) -> TrainResult:
        return _train_loop(self, stream, episodes, curve_path)


def _copy_state(st: AdamState) -> AdamState:
    return AdamState([m.copy() for m in st.m], [v.copy() for v in st.v], st.step, st.lr, st.beta1, st.beta2, st.eps)


def _train_loop(learner, stream: ScenarioStream, episodes: int, curve_path=None) -> TrainResult:
    curves: list[CurveRow] = []
    last_good = learner.checkpoint()
    reset_rng = np.random.default_rng(learner.rng.integers(2**63))
    h = learner.hyper
    for ep in range(episodes):
        env = stream.env_for(ep)
        rec = learner.run_episode(env, int(reset_rng.integers(2**63)))
        if rec is not None:
            learner.pool.add(rec)
        if (ep + 1) % h.episodes_per_update == 0 or ep == episodes - 1:
            try:
                learner.update()
                last_good = learner.checkpoint()
            except FloatingPointError as exc:
                learner.restore(last_good)
                if curve_path is not None:
                    write_curves_csv(curves, curve_path)
                raise TrainingAborted(f"non-finite loss at episode {ep}: {exc}", last_good) from exc
        per_class = learner.class_rewards(rec) if rec is not None else {}
        for name in CLASS_NAMES if learner.kind == "comappo" else ("all",):
            if name in per_class or learner.kind != "comappo":
                curves.append(CurveRow(ep, name, per_class.get(name, 0.0), learner.last_stats["policy_loss"],
                                       learner.last_stats["value_loss"], learner.last_stats["entropy"]))
    if curve_path is not None:
        write_curves_csv(curves, curve_path)
    return TrainResult(curves, learner.checkpoint())


def train(scenario_stream: ScenarioStream, classes, hyper: PpoHyper, seed: int, episodes: int, curve_path=None):
    """Build a Co-MAPPO learner and train it; returns (learner, TrainResult)."""
    learner = CoMappo(classes, hyper, seed)
    return learner, learner.train(scenario_stream, episodes, curve_path)


# ---------------------------------------------------------------------------
# CC-PPO


class CcPpo:
    """Centralised PPO: one super-agent acts for every satellite.

    The actor maps the concatenated observation to one masked menu
    distribution per agent; the joint log-probability sums over the active
    agents. The critic scores the joint observation and the concatenated
    one-hot joint action, and advantages are ``Q_hat - Q_old``.
    """

    kind = "ccppo"

    def __init__(self, n_agents: int, hyper: PpoHyper, seed: int, obs_dim: int = OBS_DIM):
        self.hyper = hyper
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.rng = np.random.default_rng(seed)
        init_rng = np.random.default_rng(self.rng.integers(2**63))
        nA = hyper.n_actions
        self.actor = Actor(n_agents * obs_dim, n_agents * nA, hyper.profile.actor_hidden, init_rng)
        self.critic = AttentionCritic(n_agents * obs_dim, n_agents * nA, hyper.profile, init_rng, n_classes=1)
        self.classes = np.zeros(1, dtype=np.int64)
        self.actor_opt = AdamState.for_params(self.actor.params(), lr=hyper.lr_actor)
        self.critic_opt = AdamState.for_params(self.critic.params(), lr=hyper.lr_critic)
        self.pool = ExperiencePool(hyper.pool_capacity)
        self.last_stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}

    full_mask = CoMappo.full_mask
    env_actions = CoMappo.env_actions
    checkpoint = CoMappo.checkpoint
    restore = CoMappo.restore
    save = CoMappo.save
    load = CoMappo.load

    def actor_params(self) -> list[Tensor]:
        return self.actor.params()

    def named_params(self) -> dict[str, Tensor]:
        out = {f"actor/{i}": p for i, p in enumerate(self.actor.params())}
        out.update({f"critic/{i}": p for i, p in enumerate(self.critic.params())})
        return out

    def _logits(self, obs: np.ndarray):
        flat = np.asarray(obs, float).reshape(len(obs), -1)
        return self.actor.net(flat).reshape(len(obs), self.n_agents, self.hyper.n_actions)

    def policy(self, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        with no_grad():
            logits = self._logits(obs[None]).data[0]
        return softmax_np(logits, mask)

    act = CoMappo.act

    def run_episode(self, env: OffloadEnv, reset_seed: int, greedy: bool = False, record: bool = True):
        return CoMappo.run_episode(self, env, reset_seed, greedy, record)

    def _joint_action(self, actions: np.ndarray) -> np.ndarray:
        """(B, S) ints -> (B, 1, S * nA) concatenated one-hots."""
        oh = np.eye(self.hyper.n_actions)[actions]
        return oh.reshape(len(actions), 1, -1)

    def prepare(self, episodes: Sequence[EpisodeRecord]) -> dict:
        obs = np.concatenate([e.obs for e in episodes])
        mask = np.concatenate([e.mask for e in episodes])
        active = np.concatenate([e.active for e in episodes])
        actions = np.concatenate([e.actions for e in episodes])
        logp = np.concatenate([e.logp for e in episodes])
        z = obs.reshape(len(obs), 1, -1)
        one = np.ones((len(obs), 1), bool)
        with no_grad():
            q_old = self.critic.forward(z, self._joint_action(actions), one, self.classes).data[:, 0]
        q_hat = np.zeros(len(obs))
        start = 0
        for e in episodes:
            n = len(e.obs)
            sl = slice(start, start + n)
            q_hat[sl] = gae_q_targets(e.rewards.sum(axis=1), q_old[sl], self.hyper.gamma, self.hyper.lam)
            start += n
        adv = q_hat - q_old
        joint_logp = (logp * active).sum(axis=1)
        return dict(obs=obs, mask=mask, active=active, actions=actions, logp=joint_logp, q_hat=q_hat, adv=adv)

    def losses(self, batch: dict, idx: np.ndarray):
        h = self.hyper
        obs, mask, active = batch["obs"][idx], batch["mask"][idx], batch["active"][idx]
        actions, lp_old = batch["actions"][idx], batch["logp"][idx]
        A, q_hat = batch["adv"][idx], batch["q_hat"][idx]
        if h.normalize_advantages and A.size > 1:
            A = (A - A.mean()) / (A.std() + 1e-8)
        n = len(idx)
        lp_all = T.log_softmax(self._logits(obs), mask, axis=-1)
        act_f = active.astype(float)
        lp = (T.pick(lp_all, actions) * act_f).sum(axis=1)
        ratio = T.exp(lp - lp_old)
        objective = clipped_surrogate(ratio, A, h.clip).sum() * (1.0 / n)
        ent = -(T.exp(lp_all) * T.mul(lp_all, mask.astype(float)) * act_f[..., None]).sum() * (1.0 / n)
        z = obs.reshape(n, 1, -1)
        q = self.critic.forward(z, self._joint_action(actions), np.ones((n, 1), bool), self.classes)
        value_loss = T.square(q[:, 0] - q_hat).sum() * (1.0 / n)
        return objective, value_loss, ent

    update = CoMappo.update

    def class_rewards(self, ep: EpisodeRecord) -> dict[str, float]:
        return {"all": float(ep.rewards.sum())}

    def train(self, stream: ScenarioStream, episodes: int, curve_path: str | Path | None = None) -> TrainResult:
        return _train_loop(self, stream, episodes, curve_path)


def make_learner(kind: str, env: OffloadEnv, hyper: PpoHyper, seed: int):
    if kind == "comappo":
        return CoMappo(env.agent_class, hyper, seed)
    if kind == "ccppo":
        return CcPpo(env.n_agents, hyper, seed)
    raise ValueError(f"unknown learner {kind!r}")
