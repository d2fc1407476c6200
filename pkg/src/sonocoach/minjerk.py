"""Quintic minimum-jerk segments and local trajectory deformation.

A sparse corrective action is turned into a smooth local reshaping of the
robot's trajectory: the correction vector is applied in full at its anchor
point and blended to zero at the edges of a window around it with two
rest-to-rest quintic segments (zero offset, velocity and acceleration at
the edges), leaving the trajectory bit-identical outside the window.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    """Time-indexed pose sequence.

    Parameters
    ----------
    poses : ndarray, shape (n, 6)
        Probe states in physical units, canonical dim order.
    start_step : int
        Global training step of ``poses[0]`` (bookkeeping only).
    tag : str
        One of "robot", "preferred", "offset".
    qualities : list of int, optional
        Quality grade observed at each pose, when known.
    """
    poses: np.ndarray
    start_step: int = 0
    tag: str = "robot"
    qualities: list = field(default_factory=list)

    def __post_init__(self):
        self.poses = np.atleast_2d(np.asarray(self.poses, dtype=float))

    def __len__(self) -> int:
        return self.poses.shape[0]


@dataclass
class Correction:
    """A coach's corrective action anchored on a trajectory point."""
    anchor: int
    delta: np.ndarray
    step: int = 0

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)


@dataclass
class MinJerkSegment:
    """Quintic polynomial per dimension over t in [0, T].

    ``coeffs[k]`` holds the k-th order coefficient row (ascending powers),
    one column per dimension.
    """
    coeffs: np.ndarray  # (6, dims)
    duration: float

    def eval(self, t: float | np.ndarray, order: int = 0) -> np.ndarray:
        """Value (order 0) or time-derivative (order 1, 2, ...) at t."""
        c = self.coeffs
        for _ in range(order):
            c = c[1:] * np.arange(1, c.shape[0])[:, None]
        t = np.asarray(t, dtype=float)
        powers = t[..., None, None] ** np.arange(c.shape[0])[:, None]
        return (c * powers).sum(axis=-2)


def min_jerk_segment(p0, p1, v0=None, v1=None, a0=None, a1=None,
                     duration: float = 1.0) -> MinJerkSegment:
    """Unique quintic satisfying position/velocity/acceleration at both ends.

    Solves the 6x6 boundary-condition system; the system matrix is shared
    across dimensions. Defaults are rest-to-rest (zero velocity and
    acceleration at both ends).
    """
    T = float(duration)
    if T <= 0:
        raise ValueError("duration must be positive")
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    p1 = np.atleast_1d(np.asarray(p1, dtype=float))
    dims = p0.size
    zeros = np.zeros(dims)
    v0 = zeros if v0 is None else np.atleast_1d(np.asarray(v0, float))
    v1 = zeros if v1 is None else np.atleast_1d(np.asarray(v1, float))
    a0 = zeros if a0 is None else np.atleast_1d(np.asarray(a0, float))
    a1 = zeros if a1 is None else np.atleast_1d(np.asarray(a1, float))

    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, T, T**2, T**3, T**4, T**5],
        [0, 1, 2*T, 3*T**2, 4*T**3, 5*T**4],
        [0, 0, 2, 6*T, 12*T**2, 20*T**3],
    ])
    rhs = np.stack([p0, v0, a0, p1, v1, a1])
    coeffs = np.linalg.solve(A, rhs)
    return MinJerkSegment(coeffs=coeffs, duration=T)


def half_window(delta_scaled: np.ndarray, kappa: float = 50.0,
                h_min: int = 3, h_max: int = 10) -> int:
    """Window half-width in steps, proportional to correction magnitude.

    ``delta_scaled`` is the correction in normalized units (half-range = 1).
    """
    h = int(round(kappa * float(np.linalg.norm(delta_scaled))))
    return int(np.clip(h, h_min, h_max))


@dataclass
class DeformationInfo:
    window: tuple          # (ws, we) inclusive indices
    anchor: int
    h: int
    mu: float
    segments: list         # [(t_start_idx, t_end_idx, MinJerkSegment), ...]
    profile: np.ndarray    # (n, 6) unscaled offset; applied offset = mu * profile


def deform_trajectory(traj: Trajectory, corr: Correction, mu: float = 1.0,
                      bounds=None, kappa: float = 50.0,
                      h_min: int = 3, h_max: int = 10,
                      clamp: bool = True) -> tuple[Trajectory, DeformationInfo]:
    """Blend a correction into a trajectory over a local window.

    The offset profile equals ``corr.delta`` exactly at the anchor, is
    exactly zero at (and outside) the window edges, and follows rest-to-rest
    quintics in between, so velocity and acceleration are continuous at the
    anchor and the edges. The applied offset is ``mu`` times the profile.
    Windows are truncated at the trajectory ends, keeping the zero-offset
    boundary at whatever end points remain; an anchor on the first or last
    point keeps its full offset (there is no room for a blend on that side).

    Returns the preferred trajectory and a DeformationInfo with the window,
    segments, and the applied offsets (for overlays and tests).
    """
    n = len(traj)
    if not 0 <= corr.anchor < n:
        raise ValueError(f"anchor {corr.anchor} outside trajectory of length {n}")
    if mu < 0:
        raise ValueError("mu must be non-negative")
    delta = corr.delta
    if delta.shape != (traj.poses.shape[1],):
        raise ValueError("correction dimension mismatch")

    scaled = bounds.scale_delta(delta) if bounds is not None else delta
    h = half_window(scaled, kappa, h_min, h_max)
    ws = max(0, corr.anchor - h)
    we = min(n - 1, corr.anchor + h)

    offsets = np.zeros_like(traj.poses)
    offsets[corr.anchor] = delta
    segments = []
    # interior points get the quintic value; knots are assigned exactly so
    # locality and anchor interpolation hold to the bit
    if corr.anchor > ws:
        seg = min_jerk_segment(np.zeros_like(delta), delta,
                               duration=float(corr.anchor - ws))
        segments.append((ws, corr.anchor, seg))
        for i in range(ws + 1, corr.anchor):
            offsets[i] = seg.eval(float(i - ws))
    if we > corr.anchor:
        seg = min_jerk_segment(delta, np.zeros_like(delta),
                               duration=float(we - corr.anchor))
        segments.append((corr.anchor, we, seg))
        for i in range(corr.anchor + 1, we):
            offsets[i] = seg.eval(float(i - corr.anchor))

    poses = traj.poses + mu * offsets
    if clamp and bounds is not None:
        poses = np.clip(poses, bounds.lo, bounds.hi)
    out = Trajectory(poses=poses, start_step=traj.start_step, tag="preferred")
    info = DeformationInfo(window=(ws, we), anchor=corr.anchor, h=h, mu=mu,
                           segments=segments, profile=offsets)
    return out, info


def offset_at(info: DeformationInfo, t: float, order: int = 0) -> np.ndarray:
    """Evaluate the applied (mu-scaled) offset profile at continuous time t.

    Zero outside the window; used by smoothness checks that probe either
    side of each control point.
    """
    dims = info.profile.shape[1]
    ws, we = info.window
    for t0, t1, seg in info.segments:
        if t0 <= t <= t1:
            return info.mu * seg.eval(float(t - t0), order=order)
    if order == 0 and ws <= t <= we:
        # degenerate single-point window: the anchor keeps its offset
        return info.mu * info.profile[int(round(t))]
    return np.zeros(dims)
