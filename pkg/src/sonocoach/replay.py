"""Uniform-sampling ring replay buffer.

Two instances exist in a coached run: the main buffer filled by
environment steps, and a separate coach buffer filled only by rollouts
along coach-preferred trajectories. They share nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Batch:
    obs: np.ndarray
    act: np.ndarray
    rew: np.ndarray
    obs2: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]


class ReplayBuffer:
    def __init__(self, obs_dim: int, act_dim: int,
                 capacity: int = 100_000, seed: int = 0):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.obs2 = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.ptr = 0
        self.size = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def add(self, obs, act, rew, obs2, done) -> None:
        i = self.ptr
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.obs2[i] = obs2
        self.done[i] = float(done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, replace: bool = False) -> Batch:
        if self.size == 0:
            raise ValueError("empty buffer")
        if not replace and batch_size > self.size:
            raise ValueError("batch larger than buffer; pass replace=True")
        idx = self.rng.integers(0, self.size, size=batch_size) if replace \
            else self.rng.choice(self.size, size=batch_size, replace=False)
        return Batch(self.obs[idx].copy(), self.act[idx].copy(),
                     self.rew[idx].copy(), self.obs2[idx].copy(),
                     self.done[idx].copy())
