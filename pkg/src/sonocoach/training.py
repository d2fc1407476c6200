"""Step-at-a-time training loop shared by headless runs and the live service.

The loop owns episode bookkeeping, the learning-curve log, convergence
detection, and the hook points for a coach. One call to ``step()`` is one
environment transition plus any gradient updates and any scheduled
coaching event; a service can pause simply by not calling ``step()``.

Curve normalization: the moving window holds the last ``curve_window``
episodes; the logged value is the per-step mean of the base reward over
that window divided by the highest single-step reward (eta + 1), so 1.0
means every step lands the top grade and intermediate plateaus sit well
below the 0.9 convergence threshold.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .coaching import CoachingEngine
from .env import ScanEnv
from .minjerk import Correction, Trajectory
from .oracle import OracleCoach
from .replay import ReplayBuffer
from .sac import SacAgent


@dataclass
class LoopConfig:
    total_steps: int = 40_000
    curve_window: int = 20          # episodes in the moving average
    convergence_threshold: float = 0.9
    convergence_patience: int = 10  # consecutive episode ends at threshold
    recent_window: int = 50         # steps of trajectory shown to a coach


class TrainingLoop:
    def __init__(self, env: ScanEnv, agent: SacAgent,
                 cfg: LoopConfig | None = None,
                 coach: CoachingEngine | None = None,
                 oracle: OracleCoach | None = None,
                 buffer_seed: int = 0):
        self.env = env
        self.agent = agent
        self.cfg = cfg or LoopConfig()
        self.coach = coach
        self.oracle = oracle
        self.buffer = ReplayBuffer(env.obs_dim, env.act_dim,
                                   capacity=agent.cfg.buffer_capacity,
                                   seed=buffer_seed + 7)
        self.global_step = 0
        self.episode = 0
        self.obs: np.ndarray | None = None
        self.prev_pose: np.ndarray | None = None
        self.ep_return_u = 0.0
        self.ep_steps = 0
        self.curve_rows: list[tuple] = []   # (step, episode_return, norm_ma)
        self._ep_window: deque = deque(maxlen=self.cfg.curve_window)
        self._streak = 0
        self._streak_start: int | None = None
        self.convergence_step: int | None = None
        self._recent_poses: deque = deque(maxlen=self.cfg.recent_window)
        self._recent_q: deque = deque(maxlen=self.cfg.recent_window)
        self._recent_prev: deque = deque(maxlen=self.cfg.recent_window)
        self._handoff_pose: np.ndarray | None = None
        self.last_losses: dict | None = None

    # -- observable state ----------------------------------------------------

    @property
    def done(self) -> bool:
        return self.global_step >= self.cfg.total_steps

    def recent_trajectory(self) -> Trajectory:
        return Trajectory(poses=np.array(self._recent_poses),
                          qualities=list(self._recent_q),
                          start_step=self.global_step - len(self._recent_poses))

    def recent_prestart(self) -> np.ndarray:
        return self._recent_prev[0]

    def ingest_correction(self, corr: Correction) -> dict:
        """Route a correction through the coach, then carry the hand-off into
        the live run: the coach leaves the probe at the corrected anchor, so
        the cached observation is re-sensed there. If the event landed on a
        finished episode the pose instead seeds the next reset."""
        record = self.coach.handle_correction(
            corr, self.recent_trajectory(), self.recent_prestart())
        if self.obs is not None and not self.env.done:
            self.obs = self.env.observe()
            self.prev_pose = self.env.pose.copy()
        else:
            self._handoff_pose = self.env.pose.copy()
        return record

    # -- the loop body ---------------------------------------------------------

    def step(self) -> dict:
        """One environment step (plus updates / coaching). Returns an event
        record suitable for streaming."""
        if self.obs is None:
            self.obs = self.env.reset()
            if self._handoff_pose is not None:
                # a correction landed on an episode boundary; the probe is
                # physically at the hand-off point, so start there
                self.obs = self.env.teleport(self._handoff_pose)
                self._handoff_pose = None
            self.prev_pose = None
            self.ep_return_u = 0.0
            self.ep_steps = 0
            self._recent_poses.clear()
            self._recent_q.clear()
            self._recent_prev.clear()

        pre_pose = self.env.pose.copy()
        if self.global_step < self.agent.cfg.start_steps:
            action = self.agent.random_action()
        else:
            action = self.agent.select_action(self.obs)
        res = self.env.step(action)
        r_u = res.reward
        reward = self.coach.shaped_reward(r_u, res.pose, self.prev_pose) \
            if self.coach else r_u
        # buffer terminal flag: top grade only, so step-cap endings bootstrap
        self.buffer.add(self.obs, action, reward, res.observation, res.terminal)

        self.global_step += 1
        self.ep_return_u += r_u
        self.ep_steps += 1
        self._recent_poses.append(res.pose.copy())
        self._recent_q.append(res.quality)
        self._recent_prev.append(pre_pose)
        self.obs = res.observation
        self.prev_pose = res.pose.copy()

        if (self.global_step >= self.agent.cfg.update_after
                and self.global_step % self.agent.cfg.update_every == 0):
            losses = self.agent.try_update(self.buffer)
            if losses is not None:
                self.last_losses = losses

        # once an approximate coach policy exists, coached gradient steps run
        # continually alongside the main ones, so the corridor the corrections
        # carved into the critics is not regressed away between events
        if (self.coach is not None and self.coach.approx is not None
                and self.coach.cfg.update_every > 0
                and self.global_step >= self.agent.cfg.update_after
                and self.global_step % self.coach.cfg.update_every == 0):
            self.last_losses = self.coach.coached_update()

        correction_record = None
        if self.oracle is not None and self.coach is not None \
                and self.oracle.due(self.global_step) and self._recent_poses:
            corr = self.oracle.maybe_correct(self.global_step,
                                             self.recent_trajectory())
            if corr is not None:
                correction_record = self.ingest_correction(corr)

        event = {
            "type": "step",
            "step": self.global_step,
            "episode": self.episode,
            "pose": res.pose.tolist(),
            "quality": res.quality,
            "r_u": r_u,
            "reward": reward,
            "done": res.done,
        }
        if correction_record is not None:
            event["correction"] = {k: correction_record[k]
                                   for k in ("step", "anchor", "h", "weights")}

        if res.done:
            self._finish_episode()
            event["curve"] = list(self.curve_rows[-1])
        return event

    def _finish_episode(self) -> None:
        self._ep_window.append((self.ep_return_u, self.ep_steps))
        total_r = sum(r for r, _ in self._ep_window)
        total_s = sum(s for _, s in self._ep_window)
        norm = total_r / total_s / (self.env.eta + 1.0)
        self.curve_rows.append((self.global_step, self.ep_return_u, norm))
        self.episode += 1
        self.obs = None

        if norm >= self.cfg.convergence_threshold:
            if self._streak == 0:
                self._streak_start = self.global_step
            self._streak += 1
            if (self._streak >= self.cfg.convergence_patience
                    and self.convergence_step is None):
                self.convergence_step = self._streak_start
        else:
            self._streak = 0
            self._streak_start = None

    def run(self, n_steps: int | None = None) -> None:
        remaining = (self.cfg.total_steps - self.global_step
                     if n_steps is None else n_steps)
        for _ in range(max(0, remaining)):
            if self.done:
                break
            self.step()


def train_uncoached(env: ScanEnv, steps: int, seed: int = 0,
                    agent: SacAgent | None = None) -> tuple[list[tuple], SacAgent]:
    """Plain SAC training, no coach. Returns (curve rows, trained agent)."""
    agent = agent or SacAgent(env.obs_dim, env.act_dim, seed=seed)
    loop = TrainingLoop(env, agent, LoopConfig(total_steps=steps),
                        buffer_seed=seed)
    loop.run()
    return loop.curve_rows, agent
