"""Scripted coach for headless experiments.

Plays the expert sonographer: every ``interval`` training steps it looks at
the recent trajectory and, unless a high-grade image was already reached,
nudges the best point seen toward the phantom's true optimum, capped per
dimension. This is the only place outside the environment that may read
the phantom's optimum.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import Phantom
from .minjerk import Correction, Trajectory

DEFAULT_CAPS = np.array([0.02, 0.012, 0.08, 0.08, 0.2, 5.0])


@dataclass
class CoachSchedule:
    interval: int = 2000
    caps: np.ndarray = field(default_factory=lambda: DEFAULT_CAPS.copy())
    quality_threshold: int = 4   # no correction when recent best q >= this

    def __post_init__(self):
        self.caps = np.asarray(self.caps, dtype=float)
        if self.interval <= 0:
            raise ValueError("interval must be positive")
        if np.any(self.caps <= 0):
            raise ValueError("caps must be positive")


class OracleCoach:
    def __init__(self, phantom: Phantom, schedule: CoachSchedule | None = None):
        self.phantom = phantom
        self.schedule = schedule or CoachSchedule()

    def due(self, step: int) -> bool:
        return step > 0 and step % self.schedule.interval == 0

    def maybe_correct(self, step: int, recent: Trajectory) -> Correction | None:
        """Correction anchored at the best-grade recent point, clipped to
        the caps; None off-schedule or when the recent trajectory already
        reached the quality threshold.

        Grade ties happen constantly early on (whole episodes at grade 1),
        so they break toward the pose nearest the optimum in scaled
        distance: the expert nudges the most promising frame, not an
        arbitrary one.
        """
        if not self.due(step):
            return None
        if len(recent) == 0:
            raise ValueError("empty recent trajectory")
        if len(recent.qualities) != len(recent):
            raise ValueError("recent trajectory needs qualities per pose")
        q = np.asarray(recent.qualities)
        best = int(q.max())
        if best >= self.schedule.quality_threshold:
            return None
        tied = np.flatnonzero(q == best)
        scaled = (recent.poses[tied] - self.phantom.optimum) \
            / self.phantom.length_scales
        anchor = int(tied[np.argmin(np.einsum("ij,ij->i", scaled, scaled))])
        raw = self.phantom.optimum - recent.poses[anchor]
        delta = np.clip(raw, -self.schedule.caps, self.schedule.caps)
        return Correction(anchor=anchor, delta=delta, step=step)
