"""Synthetic teacher-student tasks and client partitioners."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adapters import LoraPair, TargetModule, lora_delta
from .numkit import ConfigError, RngStream, random_normal
from .tinynet import Batch, MlpSpec, dense_forward


@dataclass
class TeacherTask:
    spec: MlpSpec
    backbone: list          # frozen W0 per layer
    true_factors: list      # LoraPair per layer, rank r*
    kind: str = "regression"
    cluster_means: np.ndarray | None = None
    label_noise: float = 0.0

    @property
    def true_deltas(self) -> list[np.ndarray]:
        return [lora_delta(p) for p in self.true_factors]

    def frozen_modules(self) -> list[TargetModule]:
        return [TargetModule(w) for w in self.backbone]


@dataclass
class Dataset:
    batch: Batch
    kind: str
    clusters: np.ndarray | None = None

    def __len__(self):
        return len(self.batch)

    @property
    def labels(self) -> np.ndarray:
        if self.kind == "classification":
            return np.asarray(self.batch.targets, dtype=np.int64)
        if self.clusters is None:
            raise ConfigError("regression data without clusters has no labels to partition on")
        return self.clusters


def make_teacher(spec: MlpSpec, true_rank: int, rng: RngStream, kind: str = "regression",
                 delta_scale: float = 0.5, n_clusters: int = 0, cluster_spread: float = 1.5,
                 label_noise: float = 0.0) -> TeacherTask:
    """Random backbone plus an exactly rank-``true_rank`` delta per layer.

    Backbone entries are N(0, 1/k); the delta factors are scaled so that each
    delta has Frobenius norm ``delta_scale`` times the backbone's. Cluster
    means, when requested, have expected norm ``cluster_spread``; larger shifts
    inflate the input second moment and destabilise SGD at the default lr.
    """
    if kind == "classification" and spec.loss != "cross_entropy":
        raise ConfigError("classification teachers need a cross_entropy spec")
    backbone, factors = [], []
    for l, (d, k) in enumerate(spec.weight_shapes()):
        if true_rank > min(d, k):
            raise ConfigError(f"true rank {true_rank} exceeds min{(d, k)} at layer {l}")
        w0 = random_normal(d, k, 1.0 / np.sqrt(k), rng.child(l, 0))
        a = random_normal(true_rank, k, 1.0, rng.child(l, 1))
        b = random_normal(d, true_rank, 1.0, rng.child(l, 2))
        c = np.sqrt(delta_scale * np.linalg.norm(w0) / np.linalg.norm(b @ a))
        backbone.append(w0)
        factors.append(LoraPair(c * a, c * b))
    means = None
    if n_clusters > 0:
        d0 = spec.layer_dims[0]
        means = random_normal(n_clusters, d0, cluster_spread / np.sqrt(d0), rng.child(99))
    return TeacherTask(spec, backbone, factors, kind, means, label_noise)


def gen_teacher_dataset(task: TeacherTask, n: int, rng: RngStream) -> Dataset:
    if n < 1:
        raise ConfigError("n must be >= 1")
    d0 = task.spec.layer_dims[0]
    g = rng.generator
    clusters = None
    if task.cluster_means is not None:
        clusters = g.integers(0, len(task.cluster_means), size=n)
        x = task.cluster_means[clusters] + g.standard_normal((n, d0))
    else:
        x = g.standard_normal((n, d0))
    weights = [w + dw for w, dw in zip(task.backbone, task.true_deltas)]
    out = dense_forward(task.spec, weights, x)
    if task.kind == "classification":
        targets = np.argmax(out, axis=1)
    else:
        targets = out
        if task.label_noise > 0:
            targets = out + task.label_noise * g.standard_normal(out.shape)
    return Dataset(Batch(x, targets), task.kind, clusters)


def save_dataset(ds: Dataset, path) -> None:
    """Text format: one header line ``kind n d_in d_out``, then one row per sample
    holding the inputs followed by the targets (a single label for classification)."""
    x = ds.batch.inputs
    y = np.asarray(ds.batch.targets, dtype=np.float64)
    y = y.reshape(len(x), -1)
    header = f"{ds.kind} {x.shape[0]} {x.shape[1]} {y.shape[1]}"
    np.savetxt(path, np.hstack([x, y]), header=header, comments="", fmt="%.17g")


def load_dataset(path) -> Dataset:
    with open(Path(path)) as f:
        kind, n, d_in, d_out = f.readline().split()
        n, d_in, d_out = int(n), int(d_in), int(d_out)
        rows = np.loadtxt(f, ndmin=2)
    if rows.shape != (n, d_in + d_out):
        raise ValueError(f"body shape {rows.shape} != ({n}, {d_in + d_out})")
    x, y = rows[:, :d_in], rows[:, d_in:]
    if kind == "classification":
        y = y[:, 0].astype(np.int64)
    return Dataset(Batch(x, y), kind)


# -- partitioners ------------------------------------------------------------

@dataclass
class Partition:
    shards: list = field(default_factory=list)

    def __len__(self):
        return len(self.shards)

    def sizes(self) -> list[int]:
        return [len(s) for s in self.shards]


def split_iid(n: int, v: int, rng: RngStream) -> Partition:
    if n < v:
        raise ConfigError(f"cannot split {n} samples over {v} clients")
    perm = rng.generator.permutation(n)
    return Partition([np.sort(s) for s in np.array_split(perm, v)])


def split_pathological(labels, v: int, classes_per_client: int, rng: RngStream) -> Partition:
    """Each client holds samples from ``classes_per_client`` classes.

    Classes are dealt round-robin over a random class order so every class has
    at least one holder; each class's samples are split evenly among its holders.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes_per_client < 1 or classes_per_client > len(classes):
        raise ConfigError(f"classes_per_client={classes_per_client} with {len(classes)} classes")
    if v * classes_per_client < len(classes):
        raise ConfigError("not enough client slots to cover every class")
    g = rng.generator
    order = g.permutation(classes)
    holders = {c: [] for c in classes}
    slot = 0
    for i in range(v):
        for _ in range(classes_per_client):
            holders[order[slot % len(order)]].append(i)
            slot += 1
    shards = [[] for _ in range(v)]
    for c in classes:
        idx = g.permutation(np.flatnonzero(labels == c))
        for part, i in zip(np.array_split(idx, len(holders[c])), holders[c]):
            shards[i].extend(part.tolist())
    if any(len(s) == 0 for s in shards):
        raise ConfigError("pathological split left a client without samples")
    return Partition([np.sort(np.asarray(s, dtype=np.int64)) for s in shards])


def split_dirichlet(labels, v: int, alpha: float, rng: RngStream) -> Partition:
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    labels = np.asarray(labels)
    if len(labels) < v:
        raise ConfigError(f"cannot split {len(labels)} samples over {v} clients")
    g = rng.generator
    shards = [[] for _ in range(v)]
    for c in np.unique(labels):
        idx = g.permutation(np.flatnonzero(labels == c))
        p = g.dirichlet(np.full(v, alpha))
        cuts = (np.cumsum(p)[:-1] * len(idx)).astype(int)
        for i, part in enumerate(np.split(idx, cuts)):
            shards[i].extend(part.tolist())
    for i in range(v):
        if not shards[i]:
            donor = max(range(v), key=lambda j: (len(shards[j]), -j))
            shards[i].append(shards[donor].pop())
    return Partition([np.sort(np.asarray(s, dtype=np.int64)) for s in shards])


def label_entropy(labels) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())
