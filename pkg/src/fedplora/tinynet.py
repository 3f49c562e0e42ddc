"""A bias-free MLP whose layer weights carry frozen backbones and trainable adapters.

Layer ``l`` computes ``z_l = h_{l-1} @ W_l.T`` with ``W_l`` the effective
weight (backbone + folded delta + adapter delta). Hidden layers apply the
activation; the last layer is linear (regression outputs or logits).
Gradients are derived by hand and checked against central differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapters import LoraPair, PloraStack, effective_weight, lora_to_plora, plora_to_lora
from .numkit import ConfigError, ShapeError


@dataclass(frozen=True)
class MlpSpec:
    layer_dims: tuple[int, ...] = (16, 32, 16)
    activation: str = "relu"
    loss: str = "mse"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ConfigError(f"bad layer dims {dims}")
        if self.activation not in ("relu", "identity"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.loss not in ("mse", "cross_entropy"):
            raise ConfigError(f"unknown loss {self.loss!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    def weight_shapes(self) -> list[tuple[int, int]]:
        """(out, in) per layer, i.e. (d, k) of each target module."""
        d = self.layer_dims
        return [(d[i + 1], d[i]) for i in range(self.n_layers)]


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray  # n x d_H floats, or length-n int labels

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ShapeError(f"inputs must be n x d0 with n >= 1, got {self.inputs.shape}")
        if len(self.targets) != self.inputs.shape[0]:
            raise ShapeError("inputs and targets disagree on n")

    def __len__(self):
        return self.inputs.shape[0]

    def take(self, idx) -> "Batch":
        return Batch(self.inputs[idx], self.targets[idx])


def _act(spec, z):
    return np.maximum(z, 0.0) if spec.activation == "relu" else z


def _act_grad(spec, z):
    return (z > 0).astype(np.float64) if spec.activation == "relu" else np.ones_like(z)


def loss_and_grad(spec: MlpSpec, outputs: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Mean per-sample loss and its gradient w.r.t. the outputs.

    ``mse`` is ``0.5 * ||y_hat - y||^2`` per sample; ``cross_entropy`` takes
    integer labels and uses a max-shifted log-sum-exp.
    """
    n = outputs.shape[0]
    if spec.loss == "mse":
        diff = outputs - targets
        return 0.5 * float(np.sum(diff * diff)) / n, diff / n
    labels = np.asarray(targets, dtype=np.int64)
    zmax = outputs.max(axis=1, keepdims=True)
    shifted = outputs - zmax
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    loss = -float(np.mean(logp[np.arange(n), labels]))
    g = np.exp(logp)
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


def dense_forward(spec: MlpSpec, weights, inputs) -> np.ndarray:
    """Forward pass with fully materialised weights (used as an oracle and for eval)."""
    h = np.asarray(inputs, dtype=np.float64)
    for li, w in enumerate(weights):
        z = h @ w.T
        h = z if li == len(weights) - 1 else _act(spec, z)
    return h


def forward(spec: MlpSpec, frozen, sites, batch):
    if len(frozen) != spec.n_layers or len(sites) != spec.n_layers:
        raise ShapeError("need one frozen module and one adapter site per layer")
    weights = []
    for l, (t, site) in enumerate(zip(frozen, sites)):
        if t.shape != spec.weight_shapes()[l]:
            raise ShapeError(f"layer {l}: weight {t.shape} != {spec.weight_shapes()[l]}")
        weights.append(effective_weight(t, site))
    h = batch.inputs
    if h.shape[1] != spec.layer_dims[0]:
        raise ShapeError(f"input dim {h.shape[1]} != {spec.layer_dims[0]}")
    hs, zs = [h], []
    for li, w in enumerate(weights):
        z = h @ w.T
        zs.append(z)
        h = z if li == len(weights) - 1 else _act(spec, z)
        hs.append(h)
    cache = {"weights": weights, "hs": hs, "zs": zs, "sites": list(sites)}
    return h, cache


def _site_matrices(site):
    if isinstance(site, PloraStack):
        p = plora_to_lora(site)
        return p.a, p.b, p.scale
    return site.a, site.b, site.scale


def backward(spec: MlpSpec, cache, batch):
    """Gradients of the mean loss w.r.t. every adapter entry.

    Returns one ``(dA, dB)`` pair per layer in matrix form (``r x k``, ``d x r``);
    for a PLoRA site row/column ``j`` belongs to component ``j``. Sites that are
    ``None`` get ``None``.
    """
    weights, hs, zs, sites = cache["weights"], cache["hs"], cache["zs"], cache["sites"]
    _, delta = loss_and_grad(spec, hs[-1], batch.targets)
    grads = [None] * len(weights)
    for l in range(len(weights) - 1, -1, -1):
        g_w = delta.T @ hs[l]
        if sites[l] is not None:
            a, b, s = _site_matrices(sites[l])
            grads[l] = (s * (b.T @ g_w), s * (g_w @ a.T))
        if l > 0:
            delta = (delta @ weights[l]) * _act_grad(spec, zs[l - 1])
    return grads


def loss(spec: MlpSpec, frozen, sites, batch) -> float:
    out, _ = forward(spec, frozen, sites, batch)
    return loss_and_grad(spec, out, batch.targets)[0]


def _with_matrices(site, a, b):
    if isinstance(site, PloraStack):
        return lora_to_plora(LoraPair(a, b, site.scale))
    return LoraPair(a, b, site.scale)


def sgd_step(sites, grads, lr: float):
    if not lr > 0:
        raise ConfigError("learning rate must be positive")
    new = []
    for site, g in zip(sites, grads):
        if site is None:
            new.append(None)
            continue
        a, b, _ = _site_matrices(site)
        new.append(_with_matrices(site, a - lr * g[0], b - lr * g[1]))
    return new


def finite_diff_grad(spec: MlpSpec, frozen, sites, batch, h: float = 1e-6):
    if not h > 0:
        raise ConfigError("step must be positive")
    grads = []
    for l, site in enumerate(sites):
        if site is None:
            grads.append(None)
            continue
        a, b, _ = _site_matrices(site)
        out = []
        for which, mat in (("a", a), ("b", b)):
            g = np.zeros_like(mat)
            for idx in np.ndindex(mat.shape):
                vals = []
                for sign in (1.0, -1.0):
                    pa, pb = a.copy(), b.copy()
                    (pa if which == "a" else pb)[idx] += sign * h
                    trial = list(sites)
                    trial[l] = _with_matrices(site, pa, pb)
                    vals.append(loss(spec, frozen, trial, batch))
                g[idx] = (vals[0] - vals[1]) / (2 * h)
            out.append(g)
        grads.append(tuple(out))
    return grads


def local_sgd(spec: MlpSpec, frozen, sites, data: Batch, epochs: int, batch_size: int,
              lr: float, rng) -> list:
    """Minibatch SGD over ``data`` for ``epochs`` shuffled passes.

    Works in matrix form internally; PLoRA sites come back as PLoRA stacks.
    """
    kinds = [type(s) for s in sites]
    work = [None if s is None else LoraPair(*_site_matrices(s)[:2], s.scale).copy() for s in sites]
    n = len(data)
    for _ in range(epochs):
        order = rng.generator.permutation(n)
        for start in range(0, n, batch_size):
            mb = data.take(order[start:start + batch_size])
            _, cache = forward(spec, frozen, work, mb)
            work = sgd_step(work, backward(spec, cache, mb), lr)
    return [w if w is None or kind is LoraPair else lora_to_plora(w) for w, kind in zip(work, kinds)]
