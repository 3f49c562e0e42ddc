"""Client initialisation and server aggregation for the five heterogeneous-rank strategies.

Each per-module function works on one target module; :class:`Strategy`
applies them across all modules of a model. Component and rank indices are
0-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapters import (Component, LoraPair, PloraStack, TargetModule, fold, init_lora, init_plora,
                       lora_delta, plora_delta)
from .numkit import ConfigError, ShapeError, truncated_svd

STRATEGIES = ("fedit", "fedplora", "flora", "flexlora", "hetlora")
SELECTIONS = ("fold", "drop", "fixed", "weightnorm")


@dataclass
class PloraGlobal:
    stacks: list  # PloraStack per module


@dataclass
class AdapterGlobal:
    pairs: list  # LoraPair per module, rank R


@dataclass
class FullDeltaGlobal:
    deltas: list  # d x k per module
    # FLoRA only: last round's rank-stacked (A, B) per module, kept for the init-noise metric
    stacked: list | None = None


@dataclass
class ModuleInit:
    frozen: TargetModule
    trainable: object          # PloraStack or LoraPair
    selected: tuple | None = None
    dropped: tuple = ()
    downlink: list = field(default_factory=list)  # arrays actually sent to the client


@dataclass
class ClientRoundState:
    client_id: int
    rank: int
    modules: list              # ModuleInit per target module

    @property
    def frozen(self):
        return [m.frozen for m in self.modules]

    @property
    def trainable(self):
        return [m.trainable for m in self.modules]

    @property
    def selected(self):
        return [m.selected for m in self.modules]


@dataclass
class Upload:
    client_id: int
    rank: int
    adapters: list             # trained PloraStack / LoraPair per module
    selected: list | None = None
    n_samples: int = 1


# -- selection ---------------------------------------------------------------

def component_norms(stack: PloraStack) -> np.ndarray:
    # ||b a||_F == ||b||_2 ||a||_2 for a rank-one product
    return np.array([np.linalg.norm(c.b) * np.linalg.norm(c.a) for c in stack.components])


def select_components(stack: PloraStack, r_i: int, rule: str, rng) -> tuple[int, ...]:
    R = len(stack)
    if rule in ("fold", "drop"):
        return tuple(sorted(int(j) for j in rng.generator.choice(R, size=r_i, replace=False)))
    if rule == "fixed":
        return tuple(range(r_i))
    if rule == "weightnorm":
        norms = component_norms(stack)
        order = sorted(range(R), key=lambda j: (-norms[j], j))
        return tuple(sorted(order[:r_i]))
    raise ConfigError(f"unknown selection rule {rule!r}")


# -- initialisation ----------------------------------------------------------

def init_fedplora(stack: PloraStack, target: TargetModule, r_i: int, rule: str, rng) -> ModuleInit:
    R = len(stack)
    if r_i < 1 or r_i > R:
        raise ConfigError(f"client rank {r_i} outside [1, {R}]")
    selected = select_components(stack, r_i, rule, rng)
    rest = tuple(j for j in range(R) if j not in selected)
    trainable = stack.subset(selected)
    sent = [m for c in stack.components for m in (c.a, c.b)]
    if rule == "drop":
        return ModuleInit(TargetModule(target.w0), trainable, selected, rest, sent)
    return ModuleInit(fold(stack, rest, TargetModule(target.w0)), trainable, selected, (), sent)


def init_fedit(pair: LoraPair, target: TargetModule, r_i: int) -> ModuleInit:
    if r_i != pair.rank:
        raise ConfigError(f"FedIT is homogeneous: client rank {r_i} != global rank {pair.rank}")
    local = pair.copy()
    return ModuleInit(TargetModule(target.w0), local, downlink=[pair.a, pair.b])


def init_flora(delta: np.ndarray, target: TargetModule, r_i: int, std: float, rng,
               scale: float = 1.0) -> ModuleInit:
    d, k = target.shape
    frozen = TargetModule(target.w0, delta.copy())
    return ModuleInit(frozen, init_lora(d, k, r_i, std, rng, scale), downlink=[delta])


def flexlora_factors(delta: np.ndarray, R: int) -> tuple[np.ndarray, np.ndarray]:
    """Rank-R global factors (A = V^T, B = U S) of a full-weight update."""
    u, s, vt = truncated_svd(delta, R)
    return vt, u * s


def init_flexlora(delta: np.ndarray, target: TargetModule, r_i: int, R: int,
                  scale: float = 1.0) -> ModuleInit:
    d, k = target.shape
    if not 1 <= r_i <= R <= min(d, k):
        raise ConfigError(f"need 1 <= r_i ({r_i}) <= R ({R}) <= min(d, k) ({min(d, k)})")
    a_svd, b_svd = flexlora_factors(delta, R)
    a, b = a_svd[:r_i].copy(), b_svd[:, :r_i].copy()
    return ModuleInit(TargetModule(target.w0), LoraPair(a, b, scale), downlink=[a, b])


def init_hetlora(pair: LoraPair, target: TargetModule, r_i: int) -> ModuleInit:
    if r_i < 1 or r_i > pair.rank:
        raise ConfigError(f"client rank {r_i} outside [1, {pair.rank}]")
    a, b = pair.a[:r_i].copy(), pair.b[:, :r_i].copy()
    return ModuleInit(TargetModule(target.w0), LoraPair(a, b, pair.scale), downlink=[a, b])


# -- aggregation -------------------------------------------------------------

def _weights(n: int, weights) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != n or w.sum() <= 0:
        raise ValueError("aggregation weights must match uploads and sum to a positive value")
    return w / w.sum()


def aggregate_fedplora(prev: PloraStack, uploads, weights=None) -> PloraStack:
    """Rank-wise mean over the clients that trained each component.

    ``uploads`` is a list of ``(client_id, selected, trained_stack)``; component
    ``m`` of ``trained_stack`` is the client's copy of global component
    ``selected[m]``. Components nobody trained are carried over unchanged.
    """
    R = len(prev)
    w_all = np.ones(len(uploads)) if weights is None else np.asarray(weights, dtype=np.float64)
    order = sorted(range(len(uploads)), key=lambda u: uploads[u][0])
    new = []
    for j in range(R):
        contrib = []
        for u in order:
            _, sel, stack = uploads[u]
            if len(sel) != len(stack):
                raise ShapeError("selected set and trained stack disagree in size")
            if j in sel:
                c = stack.components[sel.index(j)]
                if c.a.shape != prev.components[j].a.shape or c.b.shape != prev.components[j].b.shape:
                    raise ShapeError(f"upload component shape mismatch at index {j}")
                contrib.append((w_all[u], c))
        if not contrib:
            new.append(prev.components[j].copy())
            continue
        w = _weights(len(contrib), [x[0] for x in contrib])
        a = sum(wi * c.a for wi, (_, c) in zip(w, contrib))
        b = sum(wi * c.b for wi, (_, c) in zip(w, contrib))
        new.append(Component(a, b))
    return PloraStack(new, prev.scale)


def aggregate_fedit(uploads, weights=None) -> LoraPair:
    R = uploads[0].rank
    if any(p.rank != R for p in uploads):
        raise ShapeError("FedIT aggregation needs equal ranks")
    w = _weights(len(uploads), weights)
    a = sum(wi * p.a for wi, p in zip(w, uploads))
    b = sum(wi * p.b for wi, p in zip(w, uploads))
    return LoraPair(a, b, uploads[0].scale)


def stack_uploads(uploads, weights=None) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate client factors along the rank axis; B carries the client weight."""
    w = _weights(len(uploads), weights)
    a = np.vstack([p.a for p in uploads])
    b = np.hstack([wi * p.scale * p.b for wi, p in zip(w, uploads)])
    return a, b


def aggregate_flora(prev_delta: np.ndarray, uploads, weights=None):
    """Stacked update added to the running full-weight delta.

    Returns ``(new_delta, update, (A_stack, B_stack))``.
    """
    a, b = stack_uploads(uploads, weights)
    update = b @ a
    if update.shape != prev_delta.shape:
        raise ShapeError("upload shape differs from the global delta")
    return prev_delta + update, update, (a, b)


def aggregate_flexlora(uploads, weights=None) -> np.ndarray:
    w = _weights(len(uploads), weights)
    out = np.zeros(uploads[0].shape)
    for wi, p in zip(w, uploads):
        out += wi * lora_delta(p)
    return out


def pad_to_rank(p: LoraPair, R: int) -> LoraPair:
    if p.rank > R:
        raise ShapeError(f"rank {p.rank} exceeds global rank {R}")
    d, k = p.shape
    a = np.zeros((R, k))
    b = np.zeros((d, R))
    a[:p.rank] = p.a
    b[:, :p.rank] = p.b
    return LoraPair(a, b, p.scale)


def aggregate_hetlora(uploads, R: int, weights=None) -> LoraPair:
    return aggregate_fedit([pad_to_rank(p, R) for p in uploads], weights)


# -- the strategy object used by the round loop -------------------------------

class Strategy:
    """Binds one strategy name to global-state init, client init and aggregation."""

    def __init__(self, name: str, R: int, selection: str = "fold", init_std: float = 0.02,
                 scale: float = 1.0, weighting: str = "uniform"):
        if name not in STRATEGIES:
            raise ConfigError(f"unknown strategy {name!r}; expected one of {STRATEGIES}")
        if selection not in SELECTIONS:
            raise ConfigError(f"unknown selection {selection!r}; expected one of {SELECTIONS}")
        if weighting not in ("uniform", "samples"):
            raise ConfigError(f"unknown weighting {weighting!r}")
        self.name, self.R, self.selection = name, R, selection
        self.init_std, self.scale, self.weighting = init_std, scale, weighting

    def __repr__(self):
        return f"Strategy({self.name!r}, R={self.R}, selection={self.selection!r})"

    def initial_state(self, shapes, rng):
        R = self.R
        if self.name == "fedplora":
            return PloraGlobal([init_plora(d, k, R, self.init_std, rng.child(l), self.scale)
                                for l, (d, k) in enumerate(shapes)])
        if self.name in ("fedit", "hetlora"):
            return AdapterGlobal([init_lora(d, k, R, self.init_std, rng.child(l), self.scale)
                                  for l, (d, k) in enumerate(shapes)])
        if self.name == "flexlora" and R > min(min(s) for s in shapes):
            raise ConfigError(f"FlexLoRA needs R <= min(d, k) for every module")
        return FullDeltaGlobal([np.zeros(s) for s in shapes])

    def init_client(self, state, targets, client_id: int, r_i: int, rng) -> ClientRoundState:
        mods = []
        for l, t in enumerate(targets):
            mrng = rng.child(l)
            if self.name == "fedplora":
                mods.append(init_fedplora(state.stacks[l], t, r_i, self.selection, mrng))
            elif self.name == "fedit":
                mods.append(init_fedit(state.pairs[l], t, r_i))
            elif self.name == "hetlora":
                mods.append(init_hetlora(state.pairs[l], t, r_i))
            elif self.name == "flora":
                mods.append(init_flora(state.deltas[l], t, r_i, self.init_std, mrng, self.scale))
            else:
                mods.append(init_flexlora(state.deltas[l], t, r_i, self.R, self.scale))
        return ClientRoundState(client_id, r_i, mods)

    def aggregate(self, state, uploads):
        """New global state plus, per module, the round's actual global update."""
        uploads = sorted(uploads, key=lambda u: u.client_id)
        w = None if self.weighting == "uniform" else [u.n_samples for u in uploads]
        n_mod = len(uploads[0].adapters)
        if self.name == "fedplora":
            stacks = [aggregate_fedplora(state.stacks[l],
                                         [(u.client_id, list(u.selected[l]), u.adapters[l]) for u in uploads], w)
                      for l in range(n_mod)]
            return PloraGlobal(stacks), [plora_delta(s) for s in stacks]
        if self.name in ("fedit", "hetlora"):
            mods = [[u.adapters[l] for u in uploads] for l in range(n_mod)]
            if self.name == "fedit":
                pairs = [aggregate_fedit(m, w) for m in mods]
            else:
                pairs = [aggregate_hetlora(m, self.R, w) for m in mods]
            return AdapterGlobal(pairs), [lora_delta(p) for p in pairs]
        if self.name == "flora":
            deltas, updates, stacked = [], [], []
            for l in range(n_mod):
                new, upd, st = aggregate_flora(state.deltas[l], [u.adapters[l] for u in uploads], w)
                deltas.append(new)
                updates.append(upd)
                stacked.append(st)
            return FullDeltaGlobal(deltas, stacked), updates
        deltas = [aggregate_flexlora([u.adapters[l] for u in uploads], w) for l in range(n_mod)]
        realised = []
        for dl in deltas:
            a_svd, b_svd = flexlora_factors(dl, self.R)
            realised.append(b_svd @ a_svd)
        return FullDeltaGlobal(deltas), realised

    def global_deltas(self, state) -> list[np.ndarray]:
        """Materialised adapter update per module for evaluation."""
        if isinstance(state, PloraGlobal):
            return [plora_delta(s) for s in state.stacks]
        if isinstance(state, AdapterGlobal):
            return [lora_delta(p) for p in state.pairs]
        return [d.copy() for d in state.deltas]
