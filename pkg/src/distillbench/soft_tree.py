"""Soft decision trees: sigmoid-gated complete binary trees of fixed depth.

Every inner node holds a linear filter whose sigmoid output (sharpened by a
single learnable inverse temperature shared across the tree) is the
probability of taking the *right* branch.  Leaves hold class logits.  The
training loss is the path-probability-weighted cross-entropy between leaf
distributions and the targets, optionally plus a routing-balance penalty.
Gradients are derived by hand; deployment uses hard greedy routing so the
model costs one filter evaluation per level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Adam

LOG_CLIP = 1e-12


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def soft_tree_param_count(depth: int, n_features: int, n_classes: int) -> int:
    """Filters (weights + bias), leaf logits, and the shared temperature."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    inner, leaves = 2**depth - 1, 2**depth
    return inner * (n_features + 1) + leaves * n_classes + 1


@dataclass
class SdtConfig:
    learning_rate: float = 0.01
    batch_size: int = 128
    epochs: int = 20
    beta0: float = 1.0
    balance_weight: float = 0.0
    inference: str = "hard"
    optimizer: str = "adam"
    standardize: bool = True
    init_scale: float = 0.1


@dataclass
class SoftTree:
    depth: int
    n_features: int
    n_classes: int
    inner_w: np.ndarray        # (2^depth - 1, n_features)
    inner_b: np.ndarray        # (2^depth - 1,)
    leaf_logits: np.ndarray    # (2^depth, n_classes)
    beta: np.ndarray           # shape (1,), shared inverse temperature
    feature_shift: np.ndarray
    feature_scale: np.ndarray
    balance_weight: float = 0.0
    inference: str = "hard"
    label: str = "sdt"
    kind: str = "sdt"

    @classmethod
    def init(
        cls,
        depth: int,
        n_features: int,
        n_classes: int,
        rng: np.random.Generator,
        config: SdtConfig | None = None,
    ) -> "SoftTree":
        cfg = config or SdtConfig()
        soft_tree_param_count(depth, n_features, n_classes)  # validates depth
        inner, leaves = 2**depth - 1, 2**depth
        s = cfg.init_scale
        return cls(
            depth=depth,
            n_features=n_features,
            n_classes=n_classes,
            inner_w=rng.uniform(-s, s, size=(inner, n_features)),
            inner_b=rng.uniform(-s, s, size=inner),
            leaf_logits=rng.uniform(-s, s, size=(leaves, n_classes)),
            beta=np.array([cfg.beta0]),
            feature_shift=np.zeros(n_features),
            feature_scale=np.ones(n_features),
            balance_weight=cfg.balance_weight,
            inference=cfg.inference,
        )

    @property
    def param_count(self) -> int:
        return soft_tree_param_count(self.depth, self.n_features, self.n_classes)

    def params(self) -> list[np.ndarray]:
        return [self.inner_w, self.inner_b, self.leaf_logits, self.beta]

    # -- forward ----------------------------------------------------------

    def _standardized(self, states: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(np.asarray(states, dtype=float)) - self.feature_shift) / self.feature_scale

    def forward(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Leaf path probabilities (n, leaves) and leaf distributions (leaves, K)."""
        xs = self._standardized(states)
        a = xs @ self.inner_w.T + self.inner_b
        p = _sigmoid(self.beta[0] * a)
        mu = np.ones((xs.shape[0], 1))
        for level in range(self.depth):
            lo, hi = 2**level - 1, 2**(level + 1) - 1
            pl = p[:, lo:hi]
            mu = np.stack([mu * (1.0 - pl), mu * pl], axis=2).reshape(xs.shape[0], -1)
        return mu, _softmax_rows(self.leaf_logits)

    def loss(self, states: np.ndarray, targets: np.ndarray) -> float:
        return self._loss_and_grads(states, targets, want_grads=False)[0]

    def loss_and_grads(self, states: np.ndarray, targets: np.ndarray):
        return self._loss_and_grads(states, targets, want_grads=True)

    def _loss_and_grads(self, states, targets, want_grads):
        xs = self._standardized(states)
        t = np.atleast_2d(np.asarray(targets, dtype=float))
        n = xs.shape[0]
        if t.shape != (n, self.n_classes):
            raise ValueError(f"targets must have shape ({n}, {self.n_classes}), got {t.shape}")

        a = xs @ self.inner_w.T + self.inner_b
        p = _sigmoid(self.beta[0] * a)
        mus: list[np.ndarray] = []  # node path probabilities per level
        mu = np.ones((n, 1))
        for level in range(self.depth):
            lo, hi = 2**level - 1, 2**(level + 1) - 1
            mus.append(mu)
            pl = p[:, lo:hi]
            mu = np.stack([mu * (1.0 - pl), mu * pl], axis=2).reshape(n, -1)

        q = _softmax_rows(self.leaf_logits)
        logq = np.log(np.clip(q, LOG_CLIP, None))
        ce = -(t @ logq.T)  # (n, leaves)
        loss = float(np.mean(np.sum(mu * ce, axis=1)))

        lam = self.balance_weight
        balance_terms = []  # (level, alpha, s) reused for gradients
        if lam > 0.0:
            for level in range(self.depth):
                lo, hi = 2**level - 1, 2**(level + 1) - 1
                s = mus[level].sum(axis=0)
                alpha = np.clip((mus[level] * p[:, lo:hi]).sum(axis=0) / s, LOG_CLIP, 1.0 - LOG_CLIP)
                balance_terms.append((level, alpha, s))
                loss += lam * (2.0**-level) * float(np.sum(-0.5 * (np.log(alpha) + np.log1p(-alpha))))

        if not want_grads:
            return loss, None

        g_phi = (mu.sum(axis=0)[:, None] * q - mu.T @ t) / n
        g_z = np.zeros_like(p)
        grad_mu = ce / n  # dLoss/d(path prob) at the current level, leaves first
        for level in range(self.depth - 1, -1, -1):
            lo, hi = 2**level - 1, 2**(level + 1) - 1
            pl = p[:, lo:hi]
            pairs = grad_mu.reshape(n, hi - lo, 2)
            g_left, g_right = pairs[:, :, 0], pairs[:, :, 1]
            dp = mus[level] * (g_right - g_left)
            grad_mu = g_left * (1.0 - pl) + g_right * pl
            if lam > 0.0:
                _, alpha, s = balance_terms[level]
                dpen = lam * (2.0**-level) * (-0.5) * (1.0 / alpha - 1.0 / (1.0 - alpha))
                dp += dpen * (mus[level] / s)
                grad_mu += dpen * ((pl - alpha) / s)
            g_z[:, lo:hi] = dp * pl * (1.0 - pl)

        g_a = g_z * self.beta[0]
        grads = [
            g_a.T @ xs,
            g_a.sum(axis=0),
            g_phi,
            np.array([np.sum(g_z * a)]),
        ]
        return loss, grads

    # -- inference --------------------------------------------------------

    def act(self, state: np.ndarray) -> int:
        if self.inference == "soft":
            mu, q = self.forward(state)
            return int(np.argmax(mu[0] @ q))
        xs = (np.asarray(state, dtype=float) - self.feature_shift) / self.feature_scale
        node = 0
        for _ in range(self.depth):
            gate = _sigmoid(self.beta * (self.inner_w[node] @ xs + self.inner_b[node]))[0]
            node = 2 * node + 2 if gate >= 0.5 else 2 * node + 1
        leaf = node - (2**self.depth - 1)
        return int(np.argmax(self.leaf_logits[leaf]))

    def predict_batch(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        if self.inference == "soft":
            mu, q = self.forward(states)
            return np.argmax(mu @ q, axis=1).astype(int)
        xs = self._standardized(states)
        a = xs @ self.inner_w.T + self.inner_b
        go_right = _sigmoid(self.beta[0] * a) >= 0.5
        node = np.zeros(states.shape[0], dtype=int)
        for _ in range(self.depth):
            node = np.where(go_right[np.arange(states.shape[0]), node], 2 * node + 2, 2 * node + 1)
        leaf = node - (2**self.depth - 1)
        return np.argmax(self.leaf_logits[leaf], axis=1).astype(int)


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=int)
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    out = np.zeros((y.size, n_classes))
    out[np.arange(y.size), y] = 1.0
    return out


def train_soft_tree(
    states: np.ndarray,
    labels: np.ndarray,
    depth: int,
    n_classes: int,
    config: SdtConfig | None = None,
    seed: int = 0,
    label: str = "sdt",
) -> tuple[SoftTree, list[float]]:
    """Minibatch-train a soft tree on (state, action) pairs.

    Returns the tree and the mean training loss per epoch.
    """
    cfg = config or SdtConfig()
    x = np.asarray(states, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a non-empty (n, d) array")
    t = one_hot(labels, n_classes)

    rng = np.random.default_rng(seed)
    tree = SoftTree.init(depth, x.shape[1], n_classes, rng, cfg)
    tree.label = label
    if cfg.standardize:
        tree.feature_shift = x.mean(axis=0)
        tree.feature_scale = np.maximum(x.std(axis=0), 1e-8)

    opt = Adam(lr=cfg.learning_rate) if cfg.optimizer == "adam" else None
    if cfg.optimizer not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")

    history: list[float] = []
    n = x.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = tree.loss_and_grads(x[idx], t[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"soft-tree training diverged (loss={loss})")
            if opt is not None:
                opt.step(tree.params(), grads)
            else:
                for param, grad in zip(tree.params(), grads):
                    param -= cfg.learning_rate * grad
            total += loss
            batches += 1
        history.append(total / max(batches, 1))
    return tree, history
