"""Initialisation / aggregation noise metrics and their closed forms.

Noise over several target modules is reported as the sum of per-module values.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .adapters import LoraPair, PloraStack, adapter_delta, lora_delta
from .numkit import ShapeError, cosine_similarity, frobenius_norm
from .strategies import (AdapterGlobal, FullDeltaGlobal, PloraGlobal, flexlora_factors,
                         pad_to_rank)


@dataclass
class NoiseReport:
    init_noise: float
    agg_noise: float
    agg_noise_closed_form: float | None = None
    cs_bound: float | None = None
    # Fed-PLoRA: noise against the per-client ideal, reported next to the per-rank one
    agg_noise_full_client: float | None = None
    per_module: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _tail_norm(a: np.ndarray, b: np.ndarray, r: int) -> float:
    return frobenius_norm(a[r:]) + frobenius_norm(b[:, r:])


def init_noise_module(method: str, global_module, client_module, r_i: int, prev_stacked=None) -> float:
    """Contribution of one client and one target module.

    ``global_module`` is the module's previous global state (PloraStack,
    LoraPair, full delta with an ``R`` attached via ``flexlora_factors``), and
    ``client_module`` the client's :class:`~fedplora.strategies.ModuleInit`.
    """
    if method == "fedplora":
        if not isinstance(global_module, PloraStack):
            raise TypeError("fedplora init noise needs a PloraStack")
        lost = [global_module.components[j] for j in client_module.dropped]
        return sum(frobenius_norm(c.a) + frobenius_norm(c.b) for c in lost)
    if method in ("fedit", "hetlora"):
        if not isinstance(global_module, LoraPair):
            raise TypeError(f"{method} init noise needs a LoraPair")
        return _tail_norm(global_module.a, global_module.b, r_i)
    if method == "flexlora":
        delta, R = global_module
        a, b = flexlora_factors(delta, R)
        return _tail_norm(a, b, r_i)
    if method == "flora":
        prev = 0.0
        if prev_stacked is not None:
            prev = frobenius_norm(prev_stacked[0]) + frobenius_norm(prev_stacked[1])
        return prev + frobenius_norm(client_module.trainable.a) ** 2
    raise ValueError(f"unknown method {method!r}")


def init_noise(method: str, global_prev, client_inits, R: int | None = None) -> float:
    """Summed over clients and target modules."""
    total = 0.0
    for cs in client_inits:
        for l, mod in enumerate(cs.modules):
            if method == "fedplora":
                if not isinstance(global_prev, PloraGlobal):
                    raise TypeError("state/method mismatch")
                g, stacked = global_prev.stacks[l], None
            elif method in ("fedit", "hetlora"):
                if not isinstance(global_prev, AdapterGlobal):
                    raise TypeError("state/method mismatch")
                g, stacked = global_prev.pairs[l], None
            elif method in ("flora", "flexlora"):
                if not isinstance(global_prev, FullDeltaGlobal):
                    raise TypeError("state/method mismatch")
                g = (global_prev.deltas[l], R)
                stacked = global_prev.stacked[l] if global_prev.stacked else None
            else:
                raise ValueError(f"unknown method {method!r}")
            total += init_noise_module(method, g, mod, cs.rank, stacked)
    return total


def ideal_update(uploads, mode: str = "full_client", prev: PloraStack | None = None) -> np.ndarray:
    """Ideal aggregate of one module's uploads.

    ``full_client``: ``uploads`` are adapters (LoraPair or PloraStack); returns the
    mean of their deltas. ``per_rank``: ``uploads`` are ``(selected, stack)``
    pairs; returns the sum over components of the mean one-rank product among
    the clients that trained it, falling back to ``prev`` when nobody did.
    """
    if not uploads:
        raise ValueError("no uploads")
    if mode == "full_client":
        out = np.zeros(adapter_delta(uploads[0]).shape)
        for u in uploads:
            out += adapter_delta(u)
        return out / len(uploads)
    if mode != "per_rank":
        raise ValueError(f"unknown mode {mode!r}")
    first = uploads[0][1]
    R = len(prev) if prev is not None else 1 + max(max(sel) for sel, _ in uploads)
    scale = first.scale
    out = np.zeros(first.shape)
    for j in range(R):
        prods = [st.components[list(sel).index(j)] for sel, st in uploads if j in sel]
        if prods:
            acc = np.zeros(first.shape)
            for c in prods:
                acc += c.b @ c.a
            out += acc / len(prods)
        elif prev is not None:
            c = prev.components[j]
            out += c.b @ c.a
    return scale * out


def agg_noise(ideal: np.ndarray, actual: np.ndarray) -> float:
    if ideal.shape != actual.shape:
        raise ShapeError(f"{ideal.shape} != {actual.shape}")
    return frobenius_norm(ideal - actual)


def hetlora_closed_form(padded) -> float:
    """Cross-term form of the zero-padding bias for uniformly weighted uploads."""
    v = len(padded)
    d, k = padded[0].shape
    diag = np.zeros((d, k))
    cross = np.zeros((d, k))
    for j in range(v):
        for k2 in range(v):
            prod = padded[j].b @ padded[k2].a
            if j == k2:
                diag += prod
            else:
                cross += prod
    return padded[0].scale * frobenius_norm((v - 1) * diag - cross) / v ** 2


def fedplora_closed_form(uploads, R: int) -> tuple[float, float]:
    """Covariance form of the rank-wise aggregation noise and its Cauchy-Schwarz style bound.

    ``uploads`` holds ``(selected, trained_stack)`` for one module.
    """
    first = uploads[0][1]
    total = np.zeros(first.shape)
    bound = 0.0
    for j in range(R):
        comps = [st.components[list(sel).index(j)] for sel, st in uploads if j in sel]
        if not comps:
            continue
        q = len(comps)
        a_bar = sum(c.a for c in comps) / q
        b_bar = sum(c.b for c in comps) / q
        cov = np.zeros(first.shape)
        for c in comps:
            da, db = c.a - a_bar, c.b - b_bar
            cov += db @ da
            bound += (np.linalg.norm(db) + np.linalg.norm(da)) / q
        total += cov / q
    return first.scale * frobenius_norm(total), first.scale * bound


def cosine_grid(uploads, R: int, which: str = "a") -> np.ndarray:
    """Mean cross-client cosine similarity between component ``j`` and ``j'``.

    ``uploads`` holds ``(selected, stack)`` per client for one module. Entry
    ``(j, j')`` averages over ordered client pairs ``i != i'`` with ``j`` trained
    by ``i`` and ``j'`` by ``i'``; entries without such a pair are NaN.
    """
    total = np.zeros((R, R))
    count = np.zeros((R, R), dtype=np.int64)
    vecs = []
    for sel, st in uploads:
        vecs.append({j: getattr(st.components[m], which).ravel() for m, j in enumerate(sel)})
    for i, vi in enumerate(vecs):
        for i2, vi2 in enumerate(vecs):
            if i == i2:
                continue
            for j, x in vi.items():
                for j2, y in vi2.items():
                    total[j, j2] += cosine_similarity(x, y)
                    count[j, j2] += 1
    grid = np.full((R, R), np.nan)
    mask = count > 0
    grid[mask] = total[mask] / count[mask]
    return grid


def hetlora_actual_and_ideal(uploads, R: int):
    padded = [pad_to_rank(p, R) for p in uploads]
    a = sum(p.a for p in padded) / len(padded)
    b = sum(p.b for p in padded) / len(padded)
    actual = padded[0].scale * (b @ a)
    ideal = sum(lora_delta(p) for p in padded) / len(padded)
    return ideal, actual, padded

