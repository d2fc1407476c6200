"""Feed-forward networks with hand-written gradients, plus Adam.

Everything here is plain numpy. Networks are small (two hidden layers of
width 64 by default), so exact analytic backprop is a page of code and
avoids dragging in an autodiff framework for a desk-scale artifact.

Conventions:
  * batches are 2-d arrays, shape (B, dim)
  * hidden activation is tanh, output is identity
  * ``backward`` consumes d(loss)/d(output) and returns gradients in the
    same structure as ``params()``, plus the input gradient
"""
from __future__ import annotations

import numpy as np


class Mlp:
    """Multi-layer perceptron: tanh hidden layers, linear output.

    Weights use uniform fan-in initialization, U(-1/sqrt(n_in), 1/sqrt(n_in)),
    drawn from the generator passed in so runs are reproducible.
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("need at least input and output widths")
        if any(s <= 0 for s in sizes):
            raise ValueError("layer widths must be positive")
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(n_in)
            self.weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            self.biases.append(rng.uniform(-bound, bound, size=n_out))
        self._cache: tuple | None = None

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(
                f"input width {x.shape[1]} != expected {self.sizes[0]}")
        acts = [x]
        h = x
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = np.tanh(z) if i < n_layers - 1 else z
            acts.append(h)
        if cache:
            self._cache = tuple(acts)
        return h

    def backward(self, grad_out: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
        """Backprop ``grad_out`` = dL/d(output) through the cached forward.

        Returns (grad_input, weight_grads, bias_grads). Gradients are summed
        over the batch; put any 1/B factor into ``grad_out``.
        """
        if self._cache is None:
            raise RuntimeError("backward before forward")
        acts = self._cache
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        w_grads: list[np.ndarray] = [np.empty(0)] * len(self.weights)
        b_grads: list[np.ndarray] = [np.empty(0)] * len(self.biases)
        n_layers = len(self.weights)
        for i in range(n_layers - 1, -1, -1):
            # hidden layers cached post-tanh; d tanh = 1 - tanh^2
            if i < n_layers - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            w_grads[i] = acts[i].T @ g
            b_grads[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return g, w_grads, b_grads

    # -- parameter plumbing --------------------------------------------------

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def set_params(self, params: list[np.ndarray]) -> None:
        n = len(self.weights)
        for i in range(n):
            self.weights[i][...] = params[i]
            self.biases[i][...] = params[n + i]

    def copy_from(self, other: "Mlp") -> None:
        self.set_params(other.params())

    def clone(self) -> "Mlp":
        out = Mlp(self.sizes, np.random.default_rng(0))
        out.copy_from(self)
        return out

    def polyak_from(self, other: "Mlp", tau: float) -> None:
        """target <- (1 - tau) * target + tau * source"""
        for p_t, p_s in zip(self.params(), other.params()):
            p_t *= 1.0 - tau
            p_t += tau * p_s


class Adam:
    """Adaptive-moment estimation over a list of arrays (standard update)."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m],
                "v": [a.copy() for a in self.v]}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        for dst, src in zip(self.m, state["m"]):
            dst[...] = src
        for dst, src in zip(self.v, state["v"]):
            dst[...] = src
