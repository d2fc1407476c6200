"""Simulated phantom-scanning environment.

The probe state is a 6-vector in canonical order (x, y, roll, pitch, yaw,
fz): position in meters, orientation in radians, contact force in newtons.
Image quality is an analytic stand-in for a learned rating network: an
anisotropic Gaussian envelope of the scaled distance to the phantom's
optimum pose, thresholded to the integer grades 1..5, with a hard gate to
0 when contact force is below the minimum. The learner never sees the
pose; observations are a seeded random-Fourier-feature embedding.

Actions are absolute pose/force targets in normalized [-1, 1] coordinates,
clamped to the bounds below. An episode ends when the top grade is reached
or after ``max_steps`` steps.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

DIM_NAMES = ("x", "y", "roll", "pitch", "yaw", "fz")

# action-space limits, canonical order (x, y, roll, pitch, yaw, fz)
DEFAULT_LO = np.array([-0.05, -0.03, -0.2, -0.2, -0.5, 5.0])
DEFAULT_HI = np.array([0.05, 0.03, 0.2, 0.2, 0.5, 30.0])

Q_MAX = 5
DEFAULT_ETA = 10.0
DEFAULT_MAX_STEPS = 50
# envelope thresholds on scaled distance for grades 5, 4, 3, 2 (else 1)
DEFAULT_THRESHOLDS = (0.5, 1.0, 1.75, 2.6)


class ActionBounds:
    """Box limits plus conversions between physical and [-1, 1] coordinates."""

    def __init__(self, lo: np.ndarray = DEFAULT_LO, hi: np.ndarray = DEFAULT_HI):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("invalid bounds")
        self.range = self.hi - self.lo
        self.half = 0.5 * self.range
        self.mid = 0.5 * (self.hi + self.lo)

    @property
    def dim(self) -> int:
        return self.lo.size

    def clamp(self, pose: np.ndarray) -> np.ndarray:
        return np.clip(pose, self.lo, self.hi)

    def normalize(self, pose: np.ndarray) -> np.ndarray:
        return (np.asarray(pose, dtype=float) - self.mid) / self.half

    def denormalize(self, a: np.ndarray) -> np.ndarray:
        return self.mid + self.half * np.asarray(a, dtype=float)

    def scale_delta(self, delta: np.ndarray) -> np.ndarray:
        """Physical delta -> normalized units (half-range = 1)."""
        return np.asarray(delta, dtype=float) / self.half


@dataclass
class Phantom:
    """A scan target: hidden optimum pose plus quality field geometry.

    Only the scripted coach and the environment itself may read
    ``optimum``; the learner and the coaching engine interact with quality
    exclusively through environment steps.
    """
    id: str
    optimum: np.ndarray
    length_scales: np.ndarray
    min_force: float = 5.0
    feature_seed: int = 11

    def __post_init__(self):
        self.optimum = np.asarray(self.optimum, dtype=float)
        self.length_scales = np.asarray(self.length_scales, dtype=float)
        if np.any(self.length_scales <= 0):
            raise ValueError("length scales must be positive")


def builtin_phantom(pid: str) -> Phantom:
    """The two stock phantoms. P1 is P0 with the optimum shifted and the
    field tightened 20%, a harder variant of the same task."""
    base_scales = np.array([0.0125, 0.0075, 0.05, 0.05, 0.125, 3.125])
    if pid == "P0":
        return Phantom("P0",
                       optimum=np.array([0.01, -0.005, 0.05, -0.04, 0.1, 15.0]),
                       length_scales=base_scales,
                       feature_seed=11)
    if pid == "P1":
        return Phantom("P1",
                       optimum=np.array([-0.02, 0.01, -0.06, 0.06, -0.2, 20.0]),
                       length_scales=0.8 * base_scales,
                       feature_seed=23)
    raise ValueError(f"unknown phantom id {pid!r}")


def load_phantom(path: str) -> Phantom:
    """Read a phantom definition from a key-value text file.

    Expected section ``[phantom]`` with keys id, optimum, length_scales
    (6 space-separated floats each), min_force, feature_seed.
    """
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read or "phantom" not in cp:
        raise ValueError(f"no [phantom] section in {path!r}")
    sec = cp["phantom"]
    optimum = np.fromstring(sec["optimum"], sep=" ")
    scales = np.fromstring(sec["length_scales"], sep=" ")
    if optimum.size != 6 or scales.size != 6:
        raise ValueError("optimum and length_scales need 6 values each")
    return Phantom(id=sec.get("id", "custom"),
                   optimum=optimum,
                   length_scales=scales,
                   min_force=sec.getfloat("min_force", 5.0),
                   feature_seed=sec.getint("feature_seed", 11))


def quality(pose: np.ndarray, phantom: Phantom,
            thresholds: tuple = DEFAULT_THRESHOLDS) -> int:
    """Integer grade 0..5 for a probe pose against a phantom.

    0 whenever contact force is below the minimum; otherwise graded by the
    Gaussian envelope g = exp(-d^2/2) of the scaled distance d to the
    optimum, with grade k for g above exp(-t_k^2/2) (equivalently d <= t_k).
    """
    pose = np.asarray(pose, dtype=float)
    if pose[5] < phantom.min_force:
        return 0
    z = (pose - phantom.optimum) / phantom.length_scales
    d = float(np.sqrt(np.dot(z, z)))
    for grade, t in zip((5, 4, 3, 2), thresholds):
        if d <= t:
            return grade
    return 1


def base_reward(q: int, eta: float = DEFAULT_ETA) -> float:
    """Graded reward with a jackpot at the top grade:
    r = eta * [q == 5] + q / 5."""
    if not 0 <= q <= Q_MAX:
        raise ValueError(f"quality {q} out of range")
    return eta * float(q == Q_MAX) + q / Q_MAX


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    quality: int
    done: bool
    step_index: int
    pose: np.ndarray = field(repr=False, default=None)
    terminal: bool = False  # top grade reached (excludes the step cap)


class FeatureEncoder:
    """Random-Fourier-feature embedding of the normalized pose.

    cos(W p + b) with W, b drawn once from the phantom's feature seed, so
    the map is a fixed smooth nonlinear function per phantom. Observation
    noise is added by the environment, not here.
    """

    def __init__(self, bounds: ActionBounds, feature_seed: int,
                 dim: int = 32, bandwidth: float = 1.5):
        rng = np.random.default_rng(feature_seed)
        self.dim = dim
        self.bounds = bounds
        self.w = rng.normal(0.0, bandwidth, size=(dim, bounds.dim))
        self.b = rng.uniform(0.0, 2.0 * np.pi, size=dim)

    def encode(self, pose: np.ndarray) -> np.ndarray:
        p = self.bounds.normalize(pose)
        return np.cos(self.w @ p + self.b)


class ScanEnv:
    """Single-threaded scanning environment with snapshot/restore.

    ``terminate_on_max_quality=False`` turns off the early finish at the top
    grade; evaluation rollouts use that so every trial has the same length.
    """

    def __init__(self, phantom: Phantom,
                 bounds: ActionBounds | None = None,
                 feature_dim: int = 32,
                 noise_std: float = 0.01,
                 eta: float = DEFAULT_ETA,
                 max_steps: int = DEFAULT_MAX_STEPS,
                 thresholds: tuple = DEFAULT_THRESHOLDS,
                 terminate_on_max_quality: bool = True,
                 seed: int = 0):
        self.phantom = phantom
        self.bounds = bounds or ActionBounds()
        self.encoder = FeatureEncoder(self.bounds, phantom.feature_seed,
                                      dim=feature_dim)
        self.noise_std = noise_std
        self.eta = eta
        self.max_steps = max_steps
        self.thresholds = tuple(thresholds)
        self.terminate_on_max_quality = terminate_on_max_quality
        self.rng = np.random.default_rng(seed)
        self.pose = self.bounds.mid.copy()
        self.step_index = 0
        self.done = True  # require reset() before stepping

    # -- observation ---------------------------------------------------------

    def observe(self) -> np.ndarray:
        feats = self.encoder.encode(self.pose)
        if self.noise_std > 0:
            feats = feats + self.rng.normal(0.0, self.noise_std, size=feats.shape)
        return feats

    @property
    def obs_dim(self) -> int:
        return self.encoder.dim

    @property
    def act_dim(self) -> int:
        return self.bounds.dim

    def quality_at(self, pose: np.ndarray) -> int:
        return quality(pose, self.phantom, self.thresholds)

    # -- episode control -------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.pose = self.rng.uniform(self.bounds.lo, self.bounds.hi)
        self.step_index = 0
        self.done = False
        return self.observe()

    def step(self, action: np.ndarray) -> StepResult:
        """Execute a normalized absolute-target action."""
        if self.done:
            raise RuntimeError("step() after episode end; call reset()")
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        self.pose = self.bounds.clamp(self.bounds.denormalize(a))
        self.step_index += 1
        q = self.quality_at(self.pose)
        r = base_reward(q, self.eta)
        terminal = q == Q_MAX
        self.done = (terminal and self.terminate_on_max_quality) \
            or self.step_index >= self.max_steps
        return StepResult(observation=self.observe(), reward=r, quality=q,
                          done=self.done, step_index=self.step_index,
                          pose=self.pose.copy(), terminal=terminal)

    # -- state surgery (coach rollouts, pause/resume) -------------------------

    def teleport(self, pose: np.ndarray) -> np.ndarray:
        """Place the probe without consuming a step; returns the observation."""
        self.pose = self.bounds.clamp(np.asarray(pose, dtype=float))
        return self.observe()

    def snapshot(self) -> dict:
        return {
            "pose": self.pose.copy(),
            "step_index": self.step_index,
            "done": self.done,
            "rng_state": self.rng.bit_generator.state,
        }

    def restore(self, snap: dict) -> None:
        self.pose = snap["pose"].copy()
        self.step_index = snap["step_index"]
        self.done = snap["done"]
        self.rng.bit_generator.state = snap["rng_state"]

    # -- introspection for the service layer ----------------------------------

    def quality_grid(self, nx: int, ny: int,
                     slice_pose: np.ndarray | None = None) -> dict:
        """Quality sampled on an (x, y) grid with the remaining dims held at
        ``slice_pose`` (default: current pose). Feeds the UI heatmap."""
        ref = self.pose if slice_pose is None else np.asarray(slice_pose, float)
        xs = np.linspace(self.bounds.lo[0], self.bounds.hi[0], nx)
        ys = np.linspace(self.bounds.lo[1], self.bounds.hi[1], ny)
        grid = np.empty((ny, nx), dtype=int)
        probe = ref.copy()
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                probe[0] = x
                probe[1] = y
                grid[iy, ix] = self.quality_at(probe)
        return {"x": xs.tolist(), "y": ys.tolist(),
                "quality": grid.tolist(),
                "slice": ref.tolist()}
