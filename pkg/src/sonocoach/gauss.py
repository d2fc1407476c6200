"""Diagonal-Gaussian utilities: densities, KL, and tanh squashing.

All functions accept batched inputs of shape (B, d) (1-d inputs are
promoted) and reduce over the last axis, returning shape (B,).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class DiagGaussian:
    """Mean / log-std pair describing an axis-aligned Gaussian."""
    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.log_std = np.asarray(self.log_std, dtype=float)
        if self.mean.shape != self.log_std.shape:
            raise ValueError("mean and log_std shapes differ")
        if not np.all(np.isfinite(self.log_std)):
            raise ValueError("log_std must be finite")

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray,
                      x: np.ndarray) -> np.ndarray:
    """Log-density of N(mean, exp(log_std)^2) at x, summed over the last axis."""
    mean = np.atleast_2d(mean)
    log_std = np.atleast_2d(log_std)
    x = np.atleast_2d(x)
    if x.shape[-1] != mean.shape[-1]:
        raise ValueError("dimension mismatch")
    z = (x - mean) * np.exp(-log_std)
    per_dim = -0.5 * z * z - log_std - 0.5 * LOG_2PI
    return per_dim.sum(axis=-1)


def gaussian_kl(mean_p: np.ndarray, log_std_p: np.ndarray,
                mean_q: np.ndarray, log_std_q: np.ndarray) -> np.ndarray:
    """Closed-form KL(p || q) between diagonal Gaussians, summed over dims."""
    mean_p, log_std_p = np.atleast_2d(mean_p), np.atleast_2d(log_std_p)
    mean_q, log_std_q = np.atleast_2d(mean_q), np.atleast_2d(log_std_q)
    if mean_p.shape[-1] != mean_q.shape[-1]:
        raise ValueError("dimension mismatch")
    var_ratio = np.exp(2.0 * (log_std_p - log_std_q))
    dm = (mean_p - mean_q) * np.exp(-log_std_q)
    per_dim = log_std_q - log_std_p + 0.5 * (var_ratio + dm * dm) - 0.5
    return per_dim.sum(axis=-1)


def softplus(x: np.ndarray) -> np.ndarray:
    # stable for large |x|
    return np.logaddexp(0.0, x)


def tanh_log_det(u: np.ndarray) -> np.ndarray:
    """Sum over dims of log d(tanh u)/du = log(1 - tanh(u)^2), stably.

    Uses log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
    """
    u = np.atleast_2d(u)
    return (2.0 * (np.log(2.0) - u - softplus(-2.0 * u))).sum(axis=-1)


def squash_action(raw: np.ndarray, lo: np.ndarray, hi: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Map unbounded raw values into (lo, hi) via tanh plus affine rescale.

    Returns (action, log_det) where log_det is the per-sample log
    |d action / d raw|, i.e. the correction to subtract from the raw-space
    log-prob to get the bounded-space log-prob.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("bounds must be finite with lo < hi")
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    action = mid + half * np.tanh(raw)
    log_det = tanh_log_det(raw) + np.sum(np.log(half))
    return action, log_det
