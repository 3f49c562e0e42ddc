"""LoRA / parallel one-rank (PLoRA) adapter algebra and the fold operation."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numkit import ShapeError, as_matrix, matmul, random_normal


@dataclass
class LoraPair:
    a: np.ndarray  # r x k
    b: np.ndarray  # d x r
    scale: float = 1.0

    def __post_init__(self):
        self.a = as_matrix(self.a)
        self.b = as_matrix(self.b)
        if self.a.shape[0] != self.b.shape[1] or self.a.shape[0] < 1:
            raise ShapeError(f"rank mismatch: a {self.a.shape}, b {self.b.shape}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def rank(self) -> int:
        return self.a.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.b.shape[0], self.a.shape[1]

    def copy(self) -> "LoraPair":
        return LoraPair(self.a.copy(), self.b.copy(), self.scale)

    def n_params(self) -> int:
        return self.a.size + self.b.size


@dataclass
class Component:
    a: np.ndarray  # 1 x k
    b: np.ndarray  # d x 1

    def copy(self) -> "Component":
        return Component(self.a.copy(), self.b.copy())


@dataclass
class PloraStack:
    components: list[Component]
    scale: float = 1.0

    def __post_init__(self):
        if not self.components:
            raise ShapeError("a PLoRA stack needs at least one component")
        d, k = self.components[0].b.shape[0], self.components[0].a.shape[1]
        for c in self.components:
            if c.a.shape != (1, k) or c.b.shape != (d, 1):
                raise ShapeError(f"component shapes {c.a.shape}, {c.b.shape} != (1,{k}), ({d},1)")

    def __len__(self):
        return len(self.components)

    @property
    def shape(self) -> tuple[int, int]:
        c = self.components[0]
        return c.b.shape[0], c.a.shape[1]

    def copy(self) -> "PloraStack":
        return PloraStack([c.copy() for c in self.components], self.scale)

    def subset(self, indices) -> "PloraStack":
        return PloraStack([self.components[j].copy() for j in indices], self.scale)

    def n_params(self) -> int:
        return sum(c.a.size + c.b.size for c in self.components)


@dataclass
class TargetModule:
    """A frozen weight plus the delta folded into it for the current round."""

    w0: np.ndarray
    fold_delta: np.ndarray = field(default=None)

    def __post_init__(self):
        self.w0 = as_matrix(self.w0)
        self.w0.setflags(write=False)
        if self.fold_delta is None:
            self.fold_delta = np.zeros_like(self.w0)
        elif self.fold_delta.shape != self.w0.shape:
            raise ShapeError("fold_delta shape differs from w0")

    @property
    def shape(self):
        return self.w0.shape

    def frozen_weight(self) -> np.ndarray:
        return self.w0 + self.fold_delta


def init_lora(d: int, k: int, rank: int, std: float, rng, scale: float = 1.0) -> LoraPair:
    """Standard LoRA init: A ~ N(0, std^2), B = 0."""
    return LoraPair(random_normal(rank, k, std, rng), np.zeros((d, rank)), scale)


def init_plora(d: int, k: int, rank: int, std: float, rng, scale: float = 1.0) -> PloraStack:
    return lora_to_plora(init_lora(d, k, rank, std, rng, scale))


def lora_delta(p: LoraPair) -> np.ndarray:
    return p.scale * matmul(p.b, p.a)


def plora_delta(s: PloraStack) -> np.ndarray:
    d, k = s.shape
    out = np.zeros((d, k))
    # summed in index order so the result is reproducible bit for bit
    for c in s.components:
        out += c.b @ c.a
    return s.scale * out


def lora_to_plora(p: LoraPair) -> PloraStack:
    comps = [Component(p.a[j:j + 1, :].copy(), p.b[:, j:j + 1].copy()) for j in range(p.rank)]
    return PloraStack(comps, p.scale)


def plora_to_lora(s: PloraStack) -> LoraPair:
    a = np.vstack([c.a for c in s.components])
    b = np.hstack([c.b for c in s.components])
    return LoraPair(a, b, s.scale)


def fold(s: PloraStack, unselected, t: TargetModule) -> TargetModule:
    """Return ``t`` with the unselected components of ``s`` folded into it.

    Indices are 0-based. ``w0`` is shared, never copied or modified.
    """
    unselected = sorted(set(int(j) for j in unselected))
    if unselected and (unselected[0] < 0 or unselected[-1] >= len(s)):
        raise ShapeError(f"fold indices {unselected} out of range for R={len(s)}")
    if s.shape != t.shape:
        raise ShapeError(f"stack shape {s.shape} != target shape {t.shape}")
    delta = np.zeros(t.shape)
    for j in unselected:
        c = s.components[j]
        delta += c.b @ c.a
    return replace(t, fold_delta=s.scale * delta)


def adapter_delta(adapter) -> np.ndarray:
    if adapter is None:
        raise ShapeError("no adapter")
    if isinstance(adapter, PloraStack):
        return plora_delta(adapter)
    return lora_delta(adapter)


def effective_weight(t: TargetModule, trainable=None) -> np.ndarray:
    w = t.w0 + t.fold_delta
    if trainable is None:
        return w
    delta = adapter_delta(trainable)
    if delta.shape != w.shape:
        raise ShapeError(f"adapter delta {delta.shape} != weight {w.shape}")
    return w + delta
