"""Demonstration datasets: collect expert rollouts, balance, split, persist.

A dataset is (states, integer action labels) plus provenance.  Balancing
downsamples every class to the minority count; splitting is stratified with
largest-remainder rounding so both the total and every per-class count land
within one row of the requested ratio.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import rollout


@dataclass
class LabeledDataset:
    states: np.ndarray
    labels: np.ndarray
    n_classes: int
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.states.ndim != 2:
            raise ValueError("states must be a 2-D array")
        if self.labels.shape != (self.states.shape[0],):
            raise ValueError("labels must be one integer per state row")
        if len(self) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return self.states.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass
class SplitDataset:
    train: LabeledDataset
    validation: LabeledDataset
    split_ratio: float


def collect_demonstrations(env, expert, episodes: int, seed: int) -> LabeledDataset:
    """Greedy expert rollouts; one (state, chosen action) pair per step."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    states: list[np.ndarray] = []
    labels: list[int] = []
    for ep in range(episodes):
        trace = rollout(env, expert, env.reset((seed, ep)))
        states.extend(trace.states[: len(trace.actions)])
        labels.extend(trace.actions)
    return LabeledDataset(
        np.array(states),
        np.array(labels),
        env.spec.action_count,
        source={"env": env.spec.name, "episodes": episodes, "seed": seed},
    )


def balance_classes(ds: LabeledDataset, seed: int) -> LabeledDataset:
    """Downsample every present class to the minority count, then shuffle."""
    counts = ds.class_counts()
    present = np.nonzero(counts)[0]
    if present.size == 0:
        raise ValueError("cannot balance an empty dataset")
    floor = int(counts[present].min())

    rng = np.random.default_rng(seed)
    keep: list[np.ndarray] = []
    for cls in present:
        rows = np.nonzero(ds.labels == cls)[0]
        keep.append(rng.choice(rows, size=floor, replace=False))
    order = np.concatenate(keep)
    order = order[rng.permutation(order.size)]
    return LabeledDataset(ds.states[order], ds.labels[order], ds.n_classes, dict(ds.source))


def stratified_split(ds: LabeledDataset, ratio: float, seed: int) -> SplitDataset:
    """Split into train/validation preserving class proportions.

    ``ratio`` is the training fraction.  Largest-remainder rounding keeps the
    train size within one row of ``ratio * len(ds)`` and each class within
    one row of its proportional share.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(ds)
    total_train = int(np.floor(ratio * n + 0.5))
    if total_train == 0 or total_train == n:
        raise ValueError(f"split of {n} rows at ratio {ratio} leaves an empty side")

    counts = ds.class_counts()
    quotas = ratio * counts
    take = np.floor(quotas).astype(int)
    remainders = quotas - take
    short = total_train - int(take.sum())
    # Hand out the leftover rows by largest remainder, lowest class on ties.
    for cls in sorted(range(ds.n_classes), key=lambda c: (-remainders[c], c))[:short]:
        take[cls] += 1

    rng = np.random.default_rng(seed)
    train_rows: list[np.ndarray] = []
    val_rows: list[np.ndarray] = []
    for cls in range(ds.n_classes):
        rows = np.nonzero(ds.labels == cls)[0]
        rows = rows[rng.permutation(rows.size)]
        train_rows.append(rows[: take[cls]])
        val_rows.append(rows[take[cls] :])
    tr = np.concatenate(train_rows)
    va = np.concatenate(val_rows)
    if tr.size == 0 or va.size == 0:
        raise ValueError("split produced an empty partition")

    def subset(rows: np.ndarray) -> LabeledDataset:
        return LabeledDataset(ds.states[rows], ds.labels[rows], ds.n_classes, dict(ds.source))

    return SplitDataset(subset(tr), subset(va), ratio)


def save_dataset_csv(ds: LabeledDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"s{i}" for i in range(ds.states.shape[1])] + ["action"])
        for row, label in zip(ds.states, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_dataset_csv(path, n_classes: int | None = None) -> LabeledDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "action" or header[:-1] != [f"s{i}" for i in range(len(header) - 1)]:
            raise ValueError(f"{path}: malformed dataset header {header!r}")
        dim = len(header) - 1
        states, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != dim + 1:
                raise ValueError(f"{path}:{line_no}: expected {dim + 1} fields, got {len(row)}")
            states.append([float(v) for v in row[:dim]])
            labels.append(int(row[dim]))
    label_arr = np.array(labels, dtype=int)
    k = (int(label_arr.max()) + 1 if labels else 1) if n_classes is None else n_classes
    return LabeledDataset(np.array(states).reshape(len(labels), dim), label_arr, k)
