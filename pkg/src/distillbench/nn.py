"""Minimal dense network with hand-written backprop and Adam.

Kept deliberately small: ReLU hidden layers, linear output, float64
throughout.  ``backward`` takes the upstream gradient on the output so the
loss stays with the caller (the DQN loop and tests supply their own).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def count_parameters(layer_sizes) -> int:
    """Weights plus biases for a dense net with the given layer widths."""
    sizes = list(layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"need at least two positive layer sizes, got {sizes}")
    return sum(sizes[i] * sizes[i - 1] + sizes[i] for i in range(1, len(sizes)))


@dataclass
class Mlp:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]  # one (n_out, n_in) matrix per layer
    biases: list[np.ndarray]   # one (n_out,) vector per layer

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator) -> "Mlp":
        sizes = tuple(int(s) for s in layer_sizes)
        count_parameters(sizes)  # validates
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(sizes, weights, biases)

    @property
    def param_count(self) -> int:
        return count_parameters(self.layer_sizes)

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def load_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.params(), other.params()):
            np.copyto(dst, src)

    def forward(self, x: np.ndarray) -> np.ndarray:
        squeeze = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=float))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i != last:
                np.maximum(h, 0.0, out=h)
        return h[0] if squeeze else h

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients w.r.t. every parameter, ordered as in :meth:`params`.

        ``grad_out`` is dLoss/dOutput with the same shape as ``forward(x)``.
        """
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        if g.shape[0] != x2.shape[0] or g.shape[1] != self.layer_sizes[-1]:
            raise ValueError(
                f"grad_out shape {g.shape} does not match output ({x2.shape[0]}, {self.layer_sizes[-1]})"
            )

        last = len(self.weights) - 1
        pre: list[np.ndarray] = []   # pre-activations per layer
        acts = [x2]                  # post-activations, acts[i] feeds layer i
        h = x2
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            pre.append(z)
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)

        grads: list[np.ndarray | None] = [None] * (2 * len(self.weights))
        delta = g
        for i in range(last, -1, -1):
            if i != last:
                delta = delta * (pre[i] > 0.0)
            grads[2 * i] = delta.T @ acts[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i]
        return grads  # type: ignore[return-value]


@dataclass
class Adam:
    """Adaptive-moment optimizer updating a list of arrays in place."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(params) != len(self.m) or len(params) != len(grads):
            raise ValueError("params/grads do not match optimizer state")
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)
