"""Soft actor-critic with a tanh-squashed Gaussian policy and twin critics.

The policy network maps features to (mean, raw log-std) of a Gaussian over
pre-squash actions u; executed actions are a = tanh(u), which live in
[-1, 1] per dimension and are mapped to physical units by the environment.
Critic targets use the minimum of the twin target critics. Gradients are
computed analytically; the actor gradient uses the reparameterized sample
u = mean + std * eps with eps held fixed, so

    d/du  [alpha * log pi(a|s) - Q(s, a)]
        = alpha * 2 tanh(u) - dQ/da * (1 - tanh(u)^2)

(the Gaussian part of log pi is constant in u under reparameterization,
only the tanh log-det survives), and the chain rule to (mean, log-std) is
d/dmean = d/du, d/dlog_std = d/du * std * eps - alpha.

An optional KL penalty toward a reference Gaussian policy (the coaching
module's MLE fit) enters the same gradient in closed form; with weight 0
the update is bit-identical to the plain one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .gauss import gaussian_log_prob, gaussian_kl, tanh_log_det
from .nets import Adam, Mlp
from .replay import Batch, ReplayBuffer

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

CHECKPOINT_VERSION = 1


@dataclass
class SacConfig:
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    buffer_capacity: int = 100_000
    hidden: tuple = (64, 64)
    init_alpha: float = 0.2
    autotune_alpha: bool = True
    target_entropy: float | None = None  # default -act_dim
    start_steps: int = 1000              # uniform-random warmup actions
    update_after: int = 1000
    update_every: int = 1


class SacAgent:
    def __init__(self, obs_dim: int, act_dim: int,
                 cfg: SacConfig | None = None, seed: int = 0):
        self.cfg = cfg or SacConfig()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        rng = np.random.default_rng(seed)
        hidden = list(self.cfg.hidden)
        self.policy = Mlp([obs_dim] + hidden + [2 * act_dim], rng)
        self.q1 = Mlp([obs_dim + act_dim] + hidden + [1], rng)
        self.q2 = Mlp([obs_dim + act_dim] + hidden + [1], rng)
        self.q1_targ = self.q1.clone()
        self.q2_targ = self.q2.clone()
        self.pi_opt = Adam(self.policy.params(), lr=self.cfg.lr)
        self.q1_opt = Adam(self.q1.params(), lr=self.cfg.lr)
        self.q2_opt = Adam(self.q2.params(), lr=self.cfg.lr)
        self.log_alpha = np.array(np.log(self.cfg.init_alpha))
        self.alpha_opt = Adam([self.log_alpha], lr=self.cfg.lr)
        self.target_entropy = (self.cfg.target_entropy
                               if self.cfg.target_entropy is not None
                               else -float(act_dim))
        self.rng = np.random.default_rng(seed + 1)
        self.update_count = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    # -- policy distribution ---------------------------------------------------

    def policy_dist(self, obs: np.ndarray, cache: bool = False):
        """(mean, log_std, raw) of the pre-squash Gaussian at obs."""
        out = self.policy.forward(np.atleast_2d(obs), cache=cache)
        d = self.act_dim
        mean, raw = out[:, :d], out[:, d:]
        # bounded log-std, smoothly invertible for diagnostics and tests
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (np.tanh(raw) + 1.0)
        return mean, log_std, raw

    def _sample(self, mean, log_std):
        std = np.exp(log_std)
        eps = self.rng.standard_normal(mean.shape)
        u = mean + std * eps
        a = np.tanh(u)
        logp = gaussian_log_prob(mean, log_std, u) - tanh_log_det(u)
        return u, a, logp, eps

    def select_action(self, obs: np.ndarray, deterministic: bool = False) -> np.ndarray:
        mean, log_std, _ = self.policy_dist(obs)
        if deterministic:
            return np.tanh(mean[0])
        _, a, _, _ = self._sample(mean, log_std)
        return a[0]

    def random_action(self) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=self.act_dim)

    # -- updates ---------------------------------------------------------------

    def compute_critic_target(self, batch: Batch) -> np.ndarray:
        mean2, log_std2, _ = self.policy_dist(batch.obs2)
        _, a2, logp2, _ = self._sample(mean2, log_std2)
        x2 = np.concatenate([batch.obs2, a2], axis=1)
        q1t = self.q1_targ.forward(x2, cache=False)[:, 0]
        q2t = self.q2_targ.forward(x2, cache=False)[:, 0]
        qmin = np.minimum(q1t, q2t)
        return batch.rew + self.cfg.gamma * (1.0 - batch.done) * (qmin - self.alpha * logp2)

    def update(self, batch: Batch, approx=None, beta: float = 0.0) -> dict:
        """One gradient step on critics, actor, and (optionally) alpha.

        ``approx`` is an object with ``predict(obs) -> (mean, log_std)``;
        when given, beta * KL(pi || approx) is added to the actor loss and
        the batch-mean KL is reported in the losses.
        """
        B = len(batch)
        alpha = self.alpha
        y = self.compute_critic_target(batch)

        x = np.concatenate([batch.obs, batch.act], axis=1)
        critic_losses = []
        for q, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            qv = q.forward(x)[:, 0]
            err = qv - y
            critic_losses.append(float(np.mean(err ** 2)))
            _, wg, bg = q.backward((2.0 * err / B)[:, None])
            opt.step(q.params(), wg + bg)

        # actor step: fresh sample through updated critics
        mean, log_std, raw = self.policy_dist(batch.obs, cache=True)
        std = np.exp(log_std)
        eps = self.rng.standard_normal(mean.shape)
        u = mean + std * eps
        th = np.tanh(u)
        logp = gaussian_log_prob(mean, log_std, u) - tanh_log_det(u)

        xa = np.concatenate([batch.obs, th], axis=1)
        q1v = self.q1.forward(xa)[:, 0]
        q2v = self.q2.forward(xa)[:, 0]
        mask1 = (q1v <= q2v).astype(float)
        gin1, _, _ = self.q1.backward(mask1[:, None])
        gin2, _, _ = self.q2.backward((1.0 - mask1)[:, None])
        dq_da = (gin1 + gin2)[:, self.obs_dim:]
        qmin = np.minimum(q1v, q2v)
        actor_loss = float(np.mean(alpha * logp - qmin))

        g_u = alpha * 2.0 * th - dq_da * (1.0 - th ** 2)
        g_mean = g_u.copy()
        g_log_std = g_u * std * eps - alpha

        kl_mean = None
        if approx is not None:
            mean_q, log_std_q = approx.predict(batch.obs)
            kl_mean = float(np.mean(gaussian_kl(mean, log_std, mean_q, log_std_q)))
            if beta != 0.0:
                inv_var_q = np.exp(-2.0 * log_std_q)
                g_mean += beta * (mean - mean_q) * inv_var_q
                g_log_std += beta * (np.exp(2.0 * log_std) * inv_var_q - 1.0)

        # chain through the bounded log-std head, then the policy net
        dls_draw = 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - np.tanh(raw) ** 2)
        g_out = np.concatenate([g_mean, g_log_std * dls_draw], axis=1) / B
        # critic forwards above clobbered nothing: policy cache is separate
        _, wg, bg = self.policy.backward(g_out)
        self.pi_opt.step(self.policy.params(), wg + bg)

        alpha_loss = 0.0
        if self.cfg.autotune_alpha:
            g_la = -float(np.mean(logp + self.target_entropy))
            alpha_loss = g_la * float(self.log_alpha)
            self.alpha_opt.step([self.log_alpha], [np.array(g_la)])

        self.q1_targ.polyak_from(self.q1, self.cfg.tau)
        self.q2_targ.polyak_from(self.q2, self.cfg.tau)
        self.update_count += 1

        losses = {
            "critic1": critic_losses[0],
            "critic2": critic_losses[1],
            "actor": actor_loss,
            "alpha": self.alpha,
            "alpha_loss": alpha_loss,
            "entropy": -float(np.mean(logp)),
        }
        if kl_mean is not None:
            losses["kl"] = kl_mean
        return losses

    def try_update(self, buffer: ReplayBuffer) -> dict | None:
        if len(buffer) < self.cfg.batch_size:
            return None
        return self.update(buffer.sample(self.cfg.batch_size))

    # -- persistence -------------------------------------------------------------

    def _net_arrays(self) -> dict:
        arrays = {}
        for name, net in (("policy", self.policy), ("q1", self.q1),
                          ("q2", self.q2), ("q1t", self.q1_targ),
                          ("q2t", self.q2_targ)):
            for i, p in enumerate(net.params()):
                arrays[f"{name}_{i}"] = p
        return arrays

    def save(self, path: str, extra_meta: dict | None = None) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "config": asdict(self.cfg),
            "update_count": self.update_count,
        }
        if extra_meta:
            meta.update(extra_meta)
        arrays = self._net_arrays()
        arrays["log_alpha"] = self.log_alpha
        arrays["meta_json"] = np.frombuffer(
            json.dumps(meta).encode(), dtype=np.uint8)
        if not str(path).endswith(".npz"):
            path = str(path) + ".npz"
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str, seed: int = 0) -> tuple["SacAgent", dict]:
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta_json"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            cfg_d = dict(meta["config"])
            cfg_d["hidden"] = tuple(cfg_d["hidden"])
            agent = cls(meta["obs_dim"], meta["act_dim"],
                        SacConfig(**cfg_d), seed=seed)
            for name, net in (("policy", agent.policy), ("q1", agent.q1),
                              ("q2", agent.q2), ("q1t", agent.q1_targ),
                              ("q2t", agent.q2_targ)):
                net.set_params([z[f"{name}_{i}"] for i in range(len(net.params()))])
            agent.log_alpha = np.array(z["log_alpha"])
            agent.alpha_opt = Adam([agent.log_alpha], lr=agent.cfg.lr)
            agent.update_count = meta["update_count"]
        return agent, meta
