"""Central finite differences against reverse-mode gradients."""
import numpy as np

from satoffload.neural.tensor import gradient


def numeric_grad(fn, p, h=1e-5):
    g = np.zeros_like(p.data)
    it = np.nditer(p.data, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = p.data[i]
        p.data[i] = old + h
        fp = fn().item()
        p.data[i] = old - h
        fm = fn().item()
        p.data[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def max_rel_error(fn, params, h=1e-5):
    """Relative error ||fd - ad|| / max(||fd||, ||ad||) over the whole parameter vector.

    A per-tensor ratio would be dominated by round-off on tensors whose
    gradient is near zero (attention projections at near-uniform weights).
    """
    analytic = gradient(fn(), params)
    num = np.concatenate([numeric_grad(fn, p, h).ravel() for p in params])
    ad = np.concatenate([a.ravel() for a in analytic])
    denom = max(np.linalg.norm(num), np.linalg.norm(ad), 1e-10)
    return float(np.linalg.norm(num - ad) / denom)


def learner_batch(seed, kind="comappo", n_episodes=1, logp_noise=0.3):
    """Tiny-width learner and a prepared batch from real toy rollouts.

    Old log-probabilities are jittered so some ratios land outside the clip range,
    but none within 1e-2 of a clip boundary where the surrogate has a kink.
    """
    from satoffload.env import EnvConfig, OffloadEnv
    from satoffload.harness.config import toy_scenario
    from satoffload.mappo import PpoHyper, make_learner
    from satoffload.model import generate_scenario
    from satoffload.neural.layers import NetProfile

    rng = np.random.default_rng(seed)
    env = OffloadEnv(generate_scenario(toy_scenario(n_tasks=2), seed), EnvConfig())
    prof = NetProfile(actor_hidden=(6,), embed=5, key=4, critic_hidden=(5,))
    hyper = PpoHyper.test(profile=prof, normalize_advantages=False)
    learner = make_learner(kind, env, hyper, seed)
    eps = [learner.run_episode(env, seed + 1000 * i) for i in range(n_episodes)]
    _clear_actor_kinks(learner, [e for e in eps if e is not None])
    batch = learner.prepare([e for e in eps if e is not None])
    noise = rng.normal(0, logp_noise, size=batch["logp"].shape)
    for _ in range(100):
        ratio = np.exp(-noise)
        near = (np.abs(ratio - (1 - hyper.clip)) < 1e-2) | (np.abs(ratio - (1 + hyper.clip)) < 1e-2)
        if not near.any():
            break
        noise[near] = rng.normal(0, logp_noise, size=int(near.sum()))
    batch["logp"] = batch["logp"] + noise
    batch["adv"] = batch["adv"] + rng.normal(0, 1, size=batch["adv"].shape)
    idx = np.arange(len(batch["obs"]))
    return learner, batch, idx


def _clear_relu_kinks(mlp, x, margin=1e-3):
    """Shift hidden biases until no ReLU input on ``x`` lies within ``margin`` of zero."""
    h = np.asarray(x, float)
    for layer in mlp.layers[:-1]:
        for _ in range(50):
            pre = h @ layer.W.data + layer.b.data
            near = (np.abs(pre) < margin).any(axis=0)
            if not near.any():
                break
            layer.b.data = layer.b.data + 3 * margin * near
        h = np.maximum(pre, 0.0)


def _clear_actor_kinks(learner, episodes):
    obs = np.concatenate([e.obs for e in episodes])
    if hasattr(learner, "actors"):
        for c, actor in enumerate(learner.actors):
            rows = obs[:, learner.classes == c].reshape(-1, obs.shape[-1])
            if len(rows):
                _clear_relu_kinks(actor.net, rows)
    else:
        _clear_relu_kinks(learner.actor.net, obs.reshape(len(obs), -1))


def learner_fd_errors(seed, kind="comappo"):
    """(actor surrogate, value loss, critic output) worst relative FD errors."""
    from satoffload.neural import tensor as T

    learner, batch, idx = learner_batch(seed, kind)
    actor = max_rel_error(lambda: learner.losses(batch, idx)[0], learner.actor_params())
    value = max_rel_error(lambda: learner.losses(batch, idx)[1], learner.critic.params())
    rng = np.random.default_rng(seed + 7)
    if kind == "comappo":
        z, a, act = batch["obs"], batch["actions"], batch["active"]
        classes = learner.classes
    else:
        z = batch["obs"].reshape(len(batch["obs"]), 1, -1)
        a = learner._joint_action(batch["actions"])
        act = np.ones((len(z), 1), bool)
        classes = learner.classes
    w = rng.normal(size=act.shape)
    critic = max_rel_error(lambda: (learner.critic.forward(z, a, act, classes) * w).sum(), learner.critic.params())
    return actor, value, critic
