"""Turning sparse corrections into trajectory deformations, shaped rewards,
an MLE reference policy, and KL-regularized updates.

The flow per correction: deform the recent robot trajectory around the
anchor (minimum-jerk window), roll the environment out along the preferred
trajectory from the same context, learn reward weights that make the
preferred trajectory dominate the old one by a margin, store the rollout
with shaped rewards in the coach replay buffer, refit the approximate
optimal policy on everything the coach has shown so far, and run a burst
of KL-regularized updates pulling the live policy toward it.

Reward shaping lives in normalized units: distances to preferred points
use half-range = 1 scaling, so one config (sigma_c and friends) covers all
six probe dimensions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .env import ScanEnv, base_reward
from .minjerk import Correction, Trajectory, deform_trajectory
from .nets import Mlp
from .replay import ReplayBuffer

ATANH_CLIP = 1.0 - 1e-6


@dataclass
class RewardWeights:
    w_u: float = 1.0
    w_c: float = 0.0
    w_pi: float = 0.1

    def combine(self, r_u: float, r_c: float, r_pi: float) -> float:
        return self.w_u * r_u + self.w_c * r_c + self.w_pi * r_pi


def combined_reward(r_u: float, r_c: float, r_pi: float,
                    w: RewardWeights) -> float:
    return w.combine(r_u, r_c, r_pi)


def coach_reward(pose: np.ndarray, preferred: np.ndarray | None,
                 bounds, sigma_c: float = 0.01) -> float:
    """Gaussian kernel of the scaled distance to the nearest preferred point.

    1.0 exactly on a preferred trajectory, 0.0 when no corrections exist yet.
    """
    if preferred is None or len(preferred) == 0:
        return 0.0
    diff = (np.atleast_2d(preferred) - np.asarray(pose, dtype=float)) / bounds.half
    d2 = float(np.min(np.einsum("ij,ij->i", diff, diff)))
    return math.exp(-d2 / (2.0 * sigma_c ** 2))


def trajectory_reward(prev_pose: np.ndarray, pose: np.ndarray, bounds,
                      w_pose: np.ndarray | None = None,
                      lam: float = 1.0) -> float:
    """Quadratic penalty on pose/force changes between consecutive actions.

    r = -sum_i W_i * dpose_i^2 - lam * (dfz / fz_range)^2, always <= 0.
    """
    if w_pose is None:
        w_pose = DEFAULT_W_POSE
    d = np.asarray(pose, dtype=float) - np.asarray(prev_pose, dtype=float)
    dfz = d[5] / bounds.range[5]
    return float(-(w_pose * d[:5] ** 2).sum() - lam * dfz * dfz)


# pose-change weights roughly equalize sensitivity across dims given the
# bound ranges (x pinned at 100 per the documented fixture convention)
DEFAULT_W_POSE = np.array([100.0, 280.0, 6.3, 6.3, 1.0])

DEFAULT_W_GRID = (0.125, 0.25, 0.5, 1.0, 2.0)


def learn_weights(components_robot: dict, components_preferred: dict,
                  gamma: float = 0.99,
                  grid: tuple = DEFAULT_W_GRID,
                  margin: float = 0.1,
                  w_u: float = 1.0, w_pi: float = 0.1
                  ) -> tuple[RewardWeights, bool]:
    """Pick w_c so the preferred trajectory's discounted return beats the
    robot trajectory's by at least ``margin``.

    ``components_*`` hold per-step arrays under keys "r_u", "r_c", "r_pi".
    The smallest grid value achieving the margin wins; if none does, the
    largest is used and a diagnostic is emitted (returned flag True).
    """
    def ret(parts: dict, w_c: float) -> float:
        r_u, r_c, r_pi = (np.asarray(parts[k], dtype=float)
                          for k in ("r_u", "r_c", "r_pi"))
        if r_u.size == 0:
            raise ValueError("empty trajectory components")
        disc = gamma ** np.arange(r_u.size)
        return float(np.sum(disc * (w_u * r_u + w_c * r_c + w_pi * r_pi)))

    for w_c in grid:
        if ret(components_preferred, w_c) - ret(components_robot, w_c) >= margin:
            return RewardWeights(w_u, w_c, w_pi), False
    warnings.warn("no grid weight reached the dominance margin; "
                  "falling back to the largest", RuntimeWarning)
    return RewardWeights(w_u, grid[-1], w_pi), True


class ApproximatePolicy:
    """Diagonal Gaussian over pre-squash actions: a small mean network over
    features plus one state-independent log-std per dimension."""

    def __init__(self, mean_net: Mlp, log_std: np.ndarray, n_fit: int):
        self.mean_net = mean_net
        self.log_std = np.asarray(log_std, dtype=float)
        self.n_fit = n_fit

    def predict(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean = self.mean_net.forward(np.atleast_2d(obs), cache=False)
        return mean, np.broadcast_to(self.log_std, mean.shape)


def fit_approx_policy(obs: np.ndarray, act: np.ndarray,
                      hidden: tuple = (32,), iters: int = 200,
                      min_samples: int = 20, log_std_floor: float = -5.0,
                      seed: int = 0, lr0: float = 0.5
                      ) -> tuple[ApproximatePolicy, list[float]]:
    """Maximum-likelihood Gaussian fit to coach-preferred (state, action) data.

    Actions arrive squashed in [-1, 1]; the fit happens in pre-squash space
    (atanh), matching where the live policy's Gaussian lives. The mean
    network is trained by full-batch gradient descent on the profile
    negative log-likelihood (log-stds profiled out as residual stds), with
    a backtracking line search so the NLL never increases. Returns the
    fitted policy and the per-iteration NLL history (mean per sample).
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    act = np.atleast_2d(np.asarray(act, dtype=float))
    n, act_dim = act.shape
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    u = np.arctanh(np.clip(act, -ATANH_CLIP, ATANH_CLIP))

    rng = np.random.default_rng(seed)
    net = Mlp([obs.shape[1]] + list(hidden) + [act_dim], rng)
    tiny = 1e-12
    var_floor = math.exp(2.0 * log_std_floor)

    def profile_obj(pred: np.ndarray) -> tuple[float, np.ndarray]:
        # variance profiled out under the same lower bound the returned
        # log-std carries; below the floor the objective stays quadratic
        # in the residual, so one collapsed dim cannot stall the others
        resid = pred - u
        mse = np.mean(resid ** 2, axis=0)
        per_dim = np.where(mse >= var_floor, np.log(mse + tiny) + 1.0,
                           math.log(var_floor) + mse / var_floor)
        # NLL gradient is resid/var; rescaling by var (Gauss-Newton style)
        # gives the least-squares direction, still descent under a positive
        # diagonal scaling but immune to the curvature spread between
        # collapsed and wide dims
        grad = (2.0 / n) * resid
        return float(np.sum(per_dim)), grad

    def nll_per_sample(obj_val: float) -> float:
        return 0.5 * (obj_val + act_dim * math.log(2.0 * math.pi))

    history: list[float] = []
    pred = net.forward(obs)
    obj, grad_pred = profile_obj(pred)
    history.append(nll_per_sample(obj))
    lr = lr0
    for _ in range(iters):
        _, wg, bg = net.backward(grad_pred)
        grads = wg + bg
        params = net.params()
        saved = [p.copy() for p in params]
        improved = False
        step = lr
        for _ in range(30):
            for p, s, g in zip(params, saved, grads):
                p[...] = s - step * g
            new_pred = net.forward(obs)
            new_obj, new_grad = profile_obj(new_pred)
            if new_obj < obj:
                improved = True
                break
            step *= 0.5
        if not improved:
            for p, s in zip(params, saved):
                p[...] = s
            history.append(nll_per_sample(obj))
            break
        obj, grad_pred = new_obj, new_grad
        lr = min(step * 1.5, 10.0)
        history.append(nll_per_sample(obj))

    resid = net.forward(obs, cache=False) - u
    mse = np.mean(resid ** 2, axis=0)
    log_std = np.maximum(0.5 * np.log(mse + tiny), log_std_floor)
    return ApproximatePolicy(net, log_std, n_fit=n), history


@dataclass
class CoachConfig:
    mu: float = 1.0
    kappa: float = 50.0
    h_min: int = 3
    h_max: int = 10
    sigma_c: float = 0.01
    w_grid: tuple = DEFAULT_W_GRID
    margin: float = 0.1
    w_pi: float = 0.1
    lam: float = 1.0
    beta0: float = 1.0
    beta_decay: float = 0.99
    coached_updates: int = 200
    update_every: int = 1
    min_coach_samples: int = 20
    coach_buffer_capacity: int = 10_000
    approx_hidden: tuple = (32,)
    approx_iters: int = 200


class CoachingEngine:
    """Owns the coach replay buffer, the preferred-point store, the learned
    reward weights, and the approximate policy. Driven by the training loop
    (or the service) strictly between environment steps."""

    def __init__(self, env: ScanEnv, agent, cfg: CoachConfig | None = None,
                 seed: int = 0):
        self.env = env
        self.agent = agent
        self.cfg = cfg or CoachConfig()
        self.buffer = ReplayBuffer(env.obs_dim, env.act_dim,
                                   capacity=self.cfg.coach_buffer_capacity,
                                   seed=seed + 101)
        self.weights = RewardWeights(1.0, 0.0, self.cfg.w_pi)
        self.active = False           # becomes True after the first correction
        self.beta = self.cfg.beta0
        self.approx: ApproximatePolicy | None = None
        self._preferred: list[np.ndarray] = []
        self._preferred_stack: np.ndarray | None = None
        self.corrections: list[dict] = []
        self._fit_seed = seed + 202

    # -- reward shaping hooks (used by the training loop every step) ---------

    def preferred_points(self) -> np.ndarray | None:
        return self._preferred_stack

    def coach_reward_at(self, pose: np.ndarray) -> float:
        return coach_reward(pose, self._preferred_stack, self.env.bounds,
                            self.cfg.sigma_c)

    def trajectory_reward_at(self, prev_pose: np.ndarray,
                             pose: np.ndarray) -> float:
        return trajectory_reward(prev_pose, pose, self.env.bounds,
                                 lam=self.cfg.lam)

    def shaped_reward(self, r_u: float, pose: np.ndarray,
                      prev_pose: np.ndarray | None) -> float:
        """Combined reward for a live environment step. Identical to r_u
        until the first correction fixes the weights."""
        if not self.active:
            return r_u
        r_c = self.coach_reward_at(pose)
        r_pi = 0.0 if prev_pose is None \
            else self.trajectory_reward_at(prev_pose, pose)
        return self.weights.combine(r_u, r_c, r_pi)

    # -- correction ingestion --------------------------------------------------

    def handle_correction(self, corr: Correction, window: Trajectory,
                          prestart_pose: np.ndarray) -> dict:
        """Full coaching event. The environment is snapshotted for the
        preferred-trajectory rollout and its counters and rng are restored
        afterwards, but the probe is left at the corrected anchor: a
        correction physically moves the probe, and training carries on from
        the hand-off point rather than warping back to the pre-event pose."""
        if len(window.qualities) != len(window):
            raise ValueError("window trajectory needs qualities per pose")
        bounds = self.env.bounds
        preferred, info = deform_trajectory(
            window, corr, mu=self.cfg.mu, bounds=bounds,
            kappa=self.cfg.kappa, h_min=self.cfg.h_min, h_max=self.cfg.h_max,
            clamp=True)

        # only the deformed span is the coach's prescription; the poses before
        # it are the robot's own history and already live in the main buffer
        lo, hi = info.window
        segment = preferred.poses[lo:hi + 1]
        seg_prestart = window.poses[lo - 1] if lo > 0 else prestart_pose

        snap = self.env.snapshot()
        try:
            rollout = self._rollout(segment, seg_prestart)
        finally:
            self.env.restore(snap)
        # hand-off: episode clock and rng continue, pose does not revert.
        # pose set directly (not via teleport) so no observation noise is
        # drawn here; whoever resumes stepping re-senses
        self.env.pose = bounds.clamp(preferred.poses[corr.anchor])
        handoff_pose = self.env.pose.copy()

        # candidate preferred set includes the new segment while scoring
        new_stack = np.vstack([*self._preferred, segment]) \
            if self._preferred else segment.copy()
        comp_r = self._components(window.poses[lo:hi + 1],
                                  [base_reward(q, self.env.eta)
                                   for q in window.qualities[lo:hi + 1]],
                                  seg_prestart, new_stack)
        comp_c = self._components(rollout["poses"], rollout["r_u"],
                                  seg_prestart, new_stack)
        self.weights, diagnostic = learn_weights(
            comp_r, comp_c, gamma=self.agent.cfg.gamma,
            grid=self.cfg.w_grid, margin=self.cfg.margin,
            w_pi=self.cfg.w_pi)
        self.active = True

        for i in range(len(rollout["poses"])):
            shaped = self.weights.combine(
                comp_c["r_u"][i], comp_c["r_c"][i], comp_c["r_pi"][i])
            self.buffer.add(rollout["obs"][i], rollout["act"][i], shaped,
                            rollout["obs2"][i], rollout["terminal"][i])
        self._preferred.append(segment.copy())
        self._preferred_stack = new_stack

        kl_before, kl_after, n_updates = self._refit_and_update()

        record = {
            "step": corr.step,
            "anchor": corr.anchor,
            "delta": np.asarray(corr.delta, dtype=float).tolist(),
            "window": [int(info.window[0]), int(info.window[1])],
            "h": info.h,
            "weights": [self.weights.w_u, self.weights.w_c, self.weights.w_pi],
            "weight_diagnostic": bool(diagnostic),
            "transitions": len(rollout["poses"]),
            "kl_before": kl_before,
            "kl_after": kl_after,
            "coached_updates": n_updates,
            "preferred_poses": segment.tolist(),
            "handoff_pose": handoff_pose.tolist(),
        }
        self.corrections.append(record)
        return record

    def _rollout(self, poses: np.ndarray, prestart_pose: np.ndarray) -> dict:
        """Drive the env along the preferred poses from the window's
        predecessor state; a fresh step budget applies (cap 50), and the
        rollout stops early if the top grade terminates it."""
        env = self.env
        env.teleport(prestart_pose)
        env.done = False
        env.step_index = 0
        obs = env.observe()
        out = {"obs": [], "act": [], "r_u": [], "obs2": [],
               "terminal": [], "poses": [], "quality": []}
        for pose in poses[:env.max_steps]:
            a = np.clip(env.bounds.normalize(pose), -1.0, 1.0)
            res = env.step(a)
            out["obs"].append(obs)
            out["act"].append(a)
            out["r_u"].append(res.reward)
            out["obs2"].append(res.observation)
            out["terminal"].append(float(res.terminal))
            out["poses"].append(res.pose)
            out["quality"].append(res.quality)
            obs = res.observation
            if res.done:
                break
        return out

    def _components(self, poses, r_u_list, prestart_pose,
                    preferred_stack) -> dict:
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        r_c, r_pi = [], []
        prev = np.asarray(prestart_pose, dtype=float)
        for pose in poses:
            r_c.append(coach_reward(pose, preferred_stack, self.env.bounds,
                                    self.cfg.sigma_c))
            r_pi.append(self.trajectory_reward_at(prev, pose))
            prev = pose
        n = len(r_c)
        return {"r_u": np.asarray(r_u_list, dtype=float)[:n],
                "r_c": np.asarray(r_c), "r_pi": np.asarray(r_pi)}

    def _refit_and_update(self) -> tuple[float | None, float | None, int]:
        if len(self.buffer) < self.cfg.min_coach_samples:
            return None, None, 0
        obs = self.buffer.obs[:len(self.buffer)]
        act = self.buffer.act[:len(self.buffer)]
        self.approx, _ = fit_approx_policy(
            obs, act, hidden=self.cfg.approx_hidden,
            iters=self.cfg.approx_iters,
            min_samples=self.cfg.min_coach_samples,
            seed=self._fit_seed)
        # each event re-anchors the pull toward the freshly fitted policy
        self.beta = self.cfg.beta0
        kl_before = kl_after = None
        n = self.cfg.coached_updates
        for i in range(n):
            losses = self.coached_update()
            if i == 0:
                kl_before = losses["kl"]
            kl_after = losses["kl"]
        return kl_before, kl_after, n

    def coached_update(self, batch=None) -> dict:
        """One KL-regularized SAC step on a coach-buffer batch."""
        if self.approx is None:
            raise RuntimeError("approximate policy not fitted yet")
        if batch is None:
            bs = min(self.agent.cfg.batch_size, len(self.buffer))
            batch = self.buffer.sample(bs, replace=True)
        losses = self.agent.update(batch, approx=self.approx, beta=self.beta)
        self.beta *= self.cfg.beta_decay
        return losses
