"""RBF kernel machines trained with sequential minimal optimization.

The binary solver is Platt-style SMO with an error cache, a deterministic
second-choice heuristic (largest |E_i - E_j|, then ascending scans), and a
final intercept recomputed from the margin support vectors.  Convergence is
declared only once every KKT condition holds within ``tol`` for that final
intercept; hitting the pass budget first returns the best iterate with a
warning flag instead of raising.  Multiclass problems train one machine per
unordered class pair and take a majority vote.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SV_EPS = 1e-8  # alpha below this is treated as zero


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * squared euclidean distance), pairwise over rows."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    a2 = np.atleast_2d(a)
    b2 = np.atleast_2d(b)
    sq = np.sum(a2**2, axis=1)[:, None] + np.sum(b2**2, axis=1)[None, :] - 2.0 * (a2 @ b2.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class KmConfig:
    gamma: float = 1.0
    c: float = 1.0
    tol: float = 1e-3
    max_passes: int = 200
    standardize: bool = True


@dataclass
class BinaryKernelMachine:
    support_vectors: np.ndarray   # (m, d), in the space the machine was trained in
    dual_coef: np.ndarray         # alpha_i * y_i per support vector
    intercept: float
    gamma: float
    support_indices: np.ndarray   # positions of the SVs in the caller's dataset
    converged: bool = True

    def decision(self, states: np.ndarray) -> np.ndarray:
        k = rbf_kernel(np.atleast_2d(states), self.support_vectors, self.gamma)
        return k @ self.dual_coef + self.intercept


def _recompute_intercept(k: np.ndarray, y: np.ndarray, alpha: np.ndarray, c: float) -> float:
    """Average the margin-SV conditions; fall back to the feasible midpoint."""
    g = k @ (alpha * y)
    interior = (alpha > SV_EPS) & (alpha < c - SV_EPS)
    if np.any(interior):
        return float(np.mean(y[interior] - g[interior]))
    f = y - g
    uppers = f[((alpha >= c - SV_EPS) & (y > 0)) | ((alpha <= SV_EPS) & (y < 0))]
    lowers = f[((alpha >= c - SV_EPS) & (y < 0)) | ((alpha <= SV_EPS) & (y > 0))]
    if uppers.size and lowers.size:
        return float((np.max(lowers) + np.min(uppers)) / 2.0)
    if uppers.size:
        return float(np.min(uppers))
    if lowers.size:
        return float(np.max(lowers))
    return 0.0


def _kkt_satisfied(k, y, alpha, b, c, tol) -> bool:
    margins = y * (k @ (alpha * y) + b)
    at_zero = alpha <= SV_EPS
    at_c = alpha >= c - SV_EPS
    interior = ~at_zero & ~at_c
    return bool(
        np.all(margins[at_zero] >= 1.0 - tol)
        and np.all(margins[at_c] <= 1.0 + tol)
        and np.all(np.abs(margins[interior] - 1.0) <= tol)
    )


def smo_solve(k: np.ndarray, y: np.ndarray, config: KmConfig):
    """Maximize the dual on a precomputed kernel matrix.

    Returns (alpha, intercept, converged).
    """
    n = y.size
    c, tol = config.c, config.tol
    alpha = np.zeros(n)
    b = 0.0
    e = -y.astype(float)  # error cache: f(x_i) - y_i

    def take_step(i: int, j: int) -> bool:
        nonlocal b, e
        if i == j:
            return False
        s = y[i] * y[j]
        if s > 0:
            lo, hi = max(0.0, alpha[i] + alpha[j] - c), min(c, alpha[i] + alpha[j])
        else:
            lo, hi = max(0.0, alpha[j] - alpha[i]), min(c, c + alpha[j] - alpha[i])
        if hi - lo < SV_EPS:
            return False
        eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
        if eta > 0.0:
            aj = alpha[j] + y[j] * (e[i] - e[j]) / eta
            aj = min(max(aj, lo), hi)
        else:
            # PSD kernel: eta >= 0, and at 0 the restricted dual is linear in
            # alpha_j, so move to whichever segment endpoint is uphill.
            slope = y[j] * (e[i] - e[j])
            if slope > 0.0:
                aj = hi
            elif slope < 0.0:
                aj = lo
            else:
                return False
        if abs(aj - alpha[j]) < SV_EPS:
            return False
        ai = alpha[i] + s * (alpha[j] - aj)
        ai = min(max(ai, 0.0), c)  # shed rounding dust at the box edge
        di, dj = (ai - alpha[i]) * y[i], (aj - alpha[j]) * y[j]

        b1 = b - e[i] - di * k[i, i] - dj * k[i, j]
        b2 = b - e[j] - di * k[i, j] - dj * k[j, j]
        if SV_EPS < ai < c - SV_EPS:
            b_new = b1
        elif SV_EPS < aj < c - SV_EPS:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0
        e += di * k[:, i] + dj * k[:, j] + (b_new - b)
        alpha[i], alpha[j], b = ai, aj, b_new
        return True

    def examine(i: int) -> bool:
        r = e[i] * y[i]
        if not ((r < -tol and alpha[i] < c - SV_EPS) or (r > tol and alpha[i] > SV_EPS)):
            return False
        non_bound = np.nonzero((alpha > SV_EPS) & (alpha < c - SV_EPS))[0]
        if non_bound.size:
            j = int(non_bound[np.argmax(np.abs(e[i] - e[non_bound]))])
            if take_step(i, j):
                return True
            for j in non_bound:
                if take_step(i, int(j)):
                    return True
        for j in range(n):
            if take_step(i, j):
                return True
        return False

    converged = False
    for _ in range(config.max_passes):
        e = k @ (alpha * y) + b - y  # refresh the cache once per pass
        changed = sum(examine(i) for i in range(n))
        if changed == 0:
            b = _recompute_intercept(k, y, alpha, c)
            e = k @ (alpha * y) + b - y
            if _kkt_satisfied(k, y, alpha, b, c, tol):
                converged = True
                break
    else:
        b = _recompute_intercept(k, y, alpha, c)
    return alpha, b, converged


def dual_objective(k: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    ay = alpha * y
    return float(np.sum(alpha) - 0.5 * ay @ k @ ay)


def train_binary_machine(
    states: np.ndarray,
    y: np.ndarray,
    config: KmConfig,
    indices: np.ndarray | None = None,
) -> BinaryKernelMachine:
    """SMO-train a single +-1 classifier in the caller's feature space."""
    x = np.atleast_2d(np.asarray(states, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("cannot train a kernel machine on zero points")
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("binary labels must be -1 or +1")
    k = rbf_kernel(x, x, config.gamma)
    alpha, b, converged = smo_solve(k, y, config)

    sv = alpha > SV_EPS
    own = np.arange(x.shape[0]) if indices is None else np.asarray(indices)
    return BinaryKernelMachine(
        support_vectors=x[sv],
        dual_coef=(alpha * y)[sv],
        intercept=b,
        gamma=config.gamma,
        support_indices=own[sv],
        converged=converged,
    )


@dataclass
class KernelMachine:
    """One-vs-one multiclass wrapper; ties vote for the lowest class index."""

    n_classes: int
    n_train: int
    gamma: float
    c: float
    machines: list[tuple[int, int, BinaryKernelMachine]]
    feature_shift: np.ndarray
    feature_scale: np.ndarray
    label: str = "km"
    kind: str = "km"

    @property
    def converged(self) -> bool:
        return all(m.converged for _, _, m in self.machines)

    @property
    def param_count(self) -> int:
        # Stored numbers per machine: each SV row plus its coefficient, plus b.
        return sum(m.support_vectors.size + m.dual_coef.size + 1 for _, _, m in self.machines)

    def support_fraction(self) -> float:
        if self.n_train == 0:
            raise ValueError("support fraction undefined for an empty training set")
        distinct: set[int] = set()
        for _, _, m in self.machines:
            distinct.update(int(i) for i in m.support_indices)
        return len(distinct) / self.n_train

    def _votes(self, states: np.ndarray) -> np.ndarray:
        xs = (np.atleast_2d(np.asarray(states, dtype=float)) - self.feature_shift) / self.feature_scale
        votes = np.zeros((xs.shape[0], self.n_classes), dtype=int)
        for pos, neg, machine in self.machines:
            f = machine.decision(xs)
            votes[f >= 0.0, pos] += 1
            votes[f < 0.0, neg] += 1
        return votes

    def act(self, state: np.ndarray) -> int:
        return int(np.argmax(self._votes(state)[0]))

    def predict_batch(self, states: np.ndarray) -> np.ndarray:
        return np.argmax(self._votes(states), axis=1).astype(int)


def train_kernel_machine(
    states: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: KmConfig | None = None,
    label: str = "km",
) -> KernelMachine:
    cfg = config or KmConfig()
    x = np.atleast_2d(np.asarray(states, dtype=float))
    y = np.asarray(labels, dtype=int)
    if x.shape[0] == 0:
        raise ValueError("cannot train a kernel machine on zero points")
    if y.shape != (x.shape[0],):
        raise ValueError("labels must be one integer per row of states")
    present = sorted(int(c) for c in np.unique(y))
    if len(present) < 2:
        raise ValueError("need at least two classes to train a kernel machine")
    if present[0] < 0 or present[-1] >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")

    if cfg.standardize:
        shift = x.mean(axis=0)
        scale = np.maximum(x.std(axis=0), 1e-8)
    else:
        shift = np.zeros(x.shape[1])
        scale = np.ones(x.shape[1])
    xs = (x - shift) / scale

    machines = []
    for a_idx, cls_a in enumerate(present):
        for cls_b in present[a_idx + 1 :]:
            rows = np.nonzero((y == cls_a) | (y == cls_b))[0]
            pm = np.where(y[rows] == cls_a, 1.0, -1.0)
            machine = train_binary_machine(xs[rows], pm, cfg, indices=rows)
            machines.append((cls_a, cls_b, machine))

    return KernelMachine(
        n_classes=n_classes,
        n_train=x.shape[0],
        gamma=cfg.gamma,
        c=cfg.c,
        machines=machines,
        feature_shift=shift,
        feature_scale=scale,
        label=label,
    )
