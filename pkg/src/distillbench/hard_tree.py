"""Greedy Gini-impurity decision trees with deterministic tie-breaking.

The splitter scans features in ascending index order and candidate
thresholds (midpoints between consecutive distinct sorted values) in
ascending order, keeping a candidate only on strictly larger gain.  Equal
gains therefore resolve to the lowest feature index, then the lowest
threshold, which makes training a pure function of the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TreeNode:
    node_id: int
    counts: np.ndarray            # class histogram of the training rows here
    klass: int                    # majority class, ties to the lowest index
    feature: int = -1             # -1 marks a leaf
    threshold: float = 0.0
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class HardTree:
    n_features: int
    n_classes: int
    max_depth: int
    nodes: list[TreeNode] = field(default_factory=list)
    label: str = "hdt"
    kind: str = "hdt"

    @property
    def inner_count(self) -> int:
        return sum(1 for n in self.nodes if not n.is_leaf)

    @property
    def param_count(self) -> int:
        # One feature index and one threshold per inner node.
        return 2 * self.inner_count

    @property
    def depth(self) -> int:
        def walk(node_id: int) -> int:
            node = self.nodes[node_id]
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(0)

    def act(self, state: np.ndarray) -> int:
        node = self.nodes[0]
        while not node.is_leaf:
            node = self.nodes[node.left if state[node.feature] <= node.threshold else node.right]
        return node.klass

    def predict_batch(self, states: np.ndarray) -> np.ndarray:
        return np.array([self.act(s) for s in np.atleast_2d(states)], dtype=int)

    def structure(self) -> list[tuple]:
        """Flat comparable encoding of the tree, used by tests."""
        return [
            (n.node_id, n.feature, n.threshold, n.left, n.right, n.klass, tuple(n.counts.tolist()))
            for n in self.nodes
        ]


def _best_split(x: np.ndarray, y: np.ndarray, n_classes: int):
    """Highest-gain (gain, feature, threshold) or None when nothing improves."""
    n = y.size
    parent_counts = np.bincount(y, minlength=n_classes)
    parent_gini = 1.0 - np.sum((parent_counts / n) ** 2)

    best: tuple[float, int, float] | None = None
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y[order]
        boundaries = np.nonzero(xs[:-1] != xs[1:])[0]
        if boundaries.size == 0:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), ys] = 1.0
        cum = np.cumsum(onehot, axis=0)

        n_left = boundaries + 1
        n_right = n - n_left
        left_counts = cum[boundaries]
        right_counts = parent_counts - left_counts
        gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
        gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
        gains = parent_gini - ((n_left / n) * gini_left + (n_right / n) * gini_right)

        k = int(np.argmax(gains))  # first maximum: lowest threshold
        if best is None or gains[k] > best[0]:
            threshold = (xs[boundaries[k]] + xs[boundaries[k] + 1]) / 2.0
            best = (float(gains[k]), f, float(threshold))
    return best


def train_hard_tree(
    states: np.ndarray,
    labels: np.ndarray,
    max_depth: int,
    n_classes: int | None = None,
    label: str = "hdt",
) -> HardTree:
    x = np.asarray(states, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a non-empty (n, d) array")
    if y.shape != (x.shape[0],):
        raise ValueError("labels must be one integer per row of states")
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")

    tree = HardTree(n_features=x.shape[1], n_classes=k, max_depth=max_depth, label=label)

    def build(rows: np.ndarray, depth: int) -> int:
        counts = np.bincount(y[rows], minlength=k)
        node = TreeNode(node_id=len(tree.nodes), counts=counts, klass=int(np.argmax(counts)))
        tree.nodes.append(node)

        pure = np.max(counts) == rows.size
        if pure or depth == max_depth:
            return node.node_id
        found = _best_split(x[rows], y[rows], k)
        if found is None or found[0] <= 0.0:
            return node.node_id

        _, node.feature, node.threshold = found
        goes_left = x[rows, node.feature] <= node.threshold
        node.left = build(rows[goes_left], depth + 1)
        node.right = build(rows[~goes_left], depth + 1)
        return node.node_id

    build(np.arange(x.shape[0]), 0)
    return tree
