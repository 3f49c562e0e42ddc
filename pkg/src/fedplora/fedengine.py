"""Synchronous federated round loop: sample, initialise, train locally, aggregate, measure."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import costmeter, noiselab
from .adapters import PloraStack, TargetModule, effective_weight
from .datagen import (gen_teacher_dataset, make_teacher, split_dirichlet, split_iid,
                      split_pathological)
from .numkit import ConfigError, RngStream, frobenius_norm
from .strategies import PloraGlobal, Strategy, Upload
from .tinynet import MlpSpec, dense_forward, local_sgd, loss_and_grad

# stream-id prefixes, one per source of randomness
_TEACHER, _TRAIN, _TEST, _SPLIT, _GLOBAL, _SAMPLE, _CLIENT_INIT, _CLIENT_TRAIN = range(8)


@dataclass
class ExperimentConfig:
    v: int = 50
    rounds: int = 50
    sample_frac: float = 0.1
    ranks: str = "1,4,8"
    strategy: str = "fedplora"
    selection: str = "fold"
    local_epochs: int = 1
    batch_size: int = 5
    lr: float = 0.05
    seed: int = 0
    eval_every: int = 1
    weighting: str = "uniform"
    dims: str = "16,32,16"
    activation: str = "relu"
    loss: str = "mse"
    kind: str = "regression"
    n_train: int = 5000
    n_test: int = 500
    partition: str = "iid"
    alpha: float = 0.5
    classes_per_client: int = 1
    clusters: int = 5
    true_rank: int = 0          # 0 means "use R"
    delta_scale: float = 0.5
    label_noise: float = 0.0
    init_std: float = 0.02
    lora_scale: float = 1.0
    bytes_per_param: int = 2
    cosine: bool = True

    # dotted config-file keys -> field names
    KEYS = {
        "fed.v": "v", "fed.rounds": "rounds", "fed.sample_frac": "sample_frac",
        "fed.local_epochs": "local_epochs", "fed.batch_size": "batch_size", "fed.lr": "lr",
        "fed.eval_every": "eval_every", "fed.weighting": "weighting",
        "model.dims": "dims", "model.activation": "activation", "model.loss": "loss",
        "data.kind": "kind", "data.n_train": "n_train", "data.n_test": "n_test",
        "data.partition": "partition", "data.alpha": "alpha",
        "data.classes_per_client": "classes_per_client", "data.clusters": "clusters",
        "data.true_rank": "true_rank", "data.delta_scale": "delta_scale",
        "data.label_noise": "label_noise", "lora.init_std": "init_std", "lora.scale": "lora_scale",
        "cost.bytes_per_param": "bytes_per_param", "metrics.cosine": "cosine",
    }

    @classmethod
    def from_flat(cls, flat: dict) -> "ExperimentConfig":
        names = {f.name: f for f in fields(cls)}
        kw = {}
        for key, value in flat.items():
            name = cls.KEYS.get(key, key)
            if name not in names:
                raise ConfigError(f"unknown config key {key!r}")
            kw[name] = _coerce(names[name].type, value, key)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_flat(self) -> dict:
        rev = {v: k for k, v in self.KEYS.items()}
        return {rev.get(k, k): v for k, v in asdict(self).items()}

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return tuple(int(x) for x in str(self.dims).split(","))

    @property
    def client_ranks(self) -> list[int]:
        return parse_ranks(self.ranks, self.v)

    @property
    def R(self) -> int:
        return max(self.client_ranks)

    def spec(self) -> MlpSpec:
        return MlpSpec(self.layer_dims, self.activation, self.loss)

    def validate(self):
        if self.v < 1 or self.rounds < 0:
            raise ConfigError("need v >= 1 and rounds >= 0")
        if not 0 < self.sample_frac <= 1:
            raise ConfigError("sample_frac must lie in (0, 1]")
        if self.local_epochs < 1 or self.batch_size < 1 or not self.lr > 0 or self.eval_every < 1:
            raise ConfigError("local_epochs, batch_size, eval_every must be >= 1 and lr > 0")
        if self.n_train < self.v or self.n_test < 1:
            raise ConfigError("need n_train >= v and n_test >= 1")
        if self.kind not in ("regression", "classification"):
            raise ConfigError(f"unknown data kind {self.kind!r}")
        if self.partition not in ("iid", "pathological", "dirichlet", "cluster"):
            raise ConfigError(f"unknown partition {self.partition!r}")
        if self.partition in ("pathological", "dirichlet") and self.kind != "classification":
            raise ConfigError("label partitions need classification data; use 'cluster' for regression")
        if self.partition == "cluster" and self.kind != "regression":
            raise ConfigError("cluster partition is the regression analogue of label skew")
        if self.kind == "classification" and self.loss != "cross_entropy":
            raise ConfigError("classification needs loss = cross_entropy")
        spec = self.spec()
        ranks = self.client_ranks
        R = max(ranks)
        if R > min(min(s) for s in spec.weight_shapes()):
            raise ConfigError(f"global rank {R} exceeds the smallest layer dimension")
        if self.true_rank < 0 or (self.true_rank or R) > min(min(s) for s in spec.weight_shapes()):
            raise ConfigError("true_rank out of range")
        Strategy(self.strategy, R, self.selection, self.init_std, self.lora_scale, self.weighting)
        if self.strategy == "fedit" and min(ranks) != R:
            raise ConfigError("fedit needs homogeneous ranks")


def _coerce(typ, value, key):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                return value.lower() in ("true", "1")
            return bool(value)
        if typ == "int":
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if typ == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for {key}") from None


def parse_ranks(text: str, v: int) -> list[int]:
    """``"1x17,4x17,8x16"`` (rank x count) or ``"1,4,8"`` (equal groups over v clients)."""
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty rank profile")
    try:
        if all("x" in p for p in parts):
            groups = [tuple(int(x) for x in p.split("x")) for p in parts]
        else:
            rs = [int(p) for p in parts]
            base, extra = divmod(v, len(rs))
            groups = [(r, base + (1 if g < extra else 0)) for g, r in enumerate(rs)]
    except ValueError:
        raise ConfigError(f"cannot parse rank profile {text!r}") from None
    ranks = [r for r, n in groups for _ in range(n)]
    if len(ranks) != v:
        raise ConfigError(f"rank profile covers {len(ranks)} clients, expected {v}")
    if min(ranks) < 1:
        raise ConfigError("ranks must be >= 1")
    return ranks


@dataclass
class RoundRecord:
    round: int
    participants: list
    eval_loss: float | None
    recovery_error: float | None
    noise: dict
    comm_up_bytes: int
    comm_down_bytes: int
    fold_flops: int
    max_init_gap: float
    q_counts: list | None = None
    cosine: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        return cls(**d)


def sample_clients(v: int, sample_frac: float, rng: RngStream) -> list[int]:
    if not 0 < sample_frac <= 1:
        raise ConfigError("sample_frac must lie in (0, 1]")
    m = math.ceil(sample_frac * v - 1e-9)
    return sorted(int(i) for i in rng.generator.choice(v, size=m, replace=False))


def evaluate(global_state, strategy: Strategy, backbone, test_set, spec: MlpSpec,
             true_deltas=None) -> tuple[float, float | None]:
    """Mean test loss of the materialised global model, and recovery error when the
    true deltas are known (regression teachers)."""
    if len(test_set) < 1:
        raise ValueError("empty test set")
    deltas = strategy.global_deltas(global_state)
    weights = [t.w0 + dw for t, dw in zip(backbone, deltas)]
    out = dense_forward(spec, weights, test_set.batch.inputs)
    loss = loss_and_grad(spec, out, test_set.batch.targets)[0]
    rec = None
    if true_deltas is not None:
        rec = sum(frobenius_norm(dw - tw) for dw, tw in zip(deltas, true_deltas))
    return loss, rec


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FEDLORA_THREADS", "1")))
    except ValueError:
        return 1


def _cosine_summary(per_module_uploads, R):
    grids_a, grids_b, diag_a, diag_b = [], [], [], []
    for ups in per_module_uploads:
        if len(ups) < 2:
            return None
        ga = noiselab.cosine_grid(ups, R, "a")
        gb = noiselab.cosine_grid(ups, R, "b")
        grids_a.append(ga)
        grids_b.append(gb)
        diag_a.append(np.diag(ga))
        diag_b.append(np.diag(gb))

    def mean_or_none(xs):
        x = np.concatenate(xs)
        x = x[~np.isnan(x)]
        return float(x.mean()) if x.size else None

    def nulls(g):
        return [[None if np.isnan(x) else float(x) for x in row] for row in g]

    return {"diag_a": mean_or_none(diag_a), "diag_b": mean_or_none(diag_b),
            "grid_a": [nulls(g) for g in grids_a], "grid_b": [nulls(g) for g in grids_b]}


class Experiment:
    """One configured run; :meth:`step` executes a single round."""

    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.config = c = config
        self.spec = c.spec()
        self.ranks = c.client_ranks
        self.R = max(self.ranks)
        self.strategy = Strategy(c.strategy, self.R, c.selection, c.init_std, c.lora_scale, c.weighting)
        root = RngStream(c.seed)
        n_clusters = c.clusters if c.partition == "cluster" else 0
        self.task = make_teacher(self.spec, c.true_rank or self.R, root.child(_TEACHER), c.kind,
                                 c.delta_scale, n_clusters, label_noise=c.label_noise)
        self.train = gen_teacher_dataset(self.task, c.n_train, root.child(_TRAIN))
        self.test = gen_teacher_dataset(self.task, c.n_test, root.child(_TEST))
        split_rng = root.child(_SPLIT)
        if c.partition == "iid":
            self.partition = split_iid(c.n_train, c.v, split_rng)
        elif c.partition == "dirichlet":
            self.partition = split_dirichlet(self.train.labels, c.v, c.alpha, split_rng)
        else:
            self.partition = split_pathological(self.train.labels, c.v, c.classes_per_client, split_rng)
        self.backbone = self.task.frozen_modules()
        self.shapes = self.spec.weight_shapes()
        self.state = self.strategy.initial_state(self.shapes, root.child(_GLOBAL))
        self.root = root
        self.t = 0
        self.last_clients = []
        self.true_deltas = self.task.true_deltas if c.kind == "regression" else None

    def _train_client(self, cs):
        c = self.config
        shard = self.train.batch.take(self.partition.shards[cs.client_id])
        rng = self.root.child(_CLIENT_TRAIN, self.t, cs.client_id)
        trained = local_sgd(self.spec, cs.frozen, cs.trainable, shard, c.local_epochs,
                            c.batch_size, c.lr, rng)
        sel = cs.selected if self.strategy.name == "fedplora" else None
        return Upload(cs.client_id, cs.rank, trained, sel, len(shard))

    def step(self) -> RoundRecord:
        c = self.config
        self.t += 1
        t = self.t
        prev = self.state
        clients = sample_clients(c.v, c.sample_frac, self.root.child(_SAMPLE, t))
        inits = [self.strategy.init_client(prev, self.backbone, i, self.ranks[i],
                                           self.root.child(_CLIENT_INIT, t, i)) for i in clients]
        self.last_clients = inits

        global_eff = [t_.w0 + dw for t_, dw in zip(self.backbone, self.strategy.global_deltas(prev))]
        gap = 0.0
        for cs in inits:
            for l, m in enumerate(cs.modules):
                gap = max(gap, frobenius_norm(effective_weight(m.frozen, m.trainable) - global_eff[l]))

        threads = _threads()
        if threads > 1 and len(inits) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                uploads = list(pool.map(self._train_client, inits))
        else:
            uploads = [self._train_client(cs) for cs in inits]

        self.state, actual = self.strategy.aggregate(prev, uploads)
        report, q_counts, cos = self._noise(prev, inits, uploads, actual)

        bpp = c.bytes_per_param
        up = sum(a.n_params() for u in uploads for a in u.adapters) * bpp
        down = sum(arr.size for cs in inits for m in cs.modules for arr in m.downlink) * bpp
        folds = 0
        if self.strategy.name == "fedplora" and c.selection != "drop":
            for cs in inits:
                for (d, k), m in zip(self.shapes, cs.modules):
                    folds += 2 * d * k * (self.R - len(m.selected))

        loss = rec = None
        if t % c.eval_every == 0 or t == c.rounds:
            loss, rec = evaluate(self.state, self.strategy, self.backbone, self.test, self.spec,
                                 self.true_deltas)
        return RoundRecord(t, clients, loss, rec, report.to_dict(), int(up), int(down), int(folds),
                           gap, q_counts, cos)

    def _noise(self, prev, inits, uploads, actual):
        name, R = self.strategy.name, self.R
        uploads = sorted(uploads, key=lambda u: u.client_id)
        uniform = self.strategy.weighting == "uniform"
        init = noiselab.init_noise(name, prev, inits, R)
        per_module, q_counts, cos_inputs = [], None, []
        agg = closed = bound = full = 0.0
        have_closed = uniform
        for l in range(len(self.shapes)):
            ups = [u.adapters[l] for u in uploads]
            entry = {}
            if name == "fedplora":
                pairs = [(tuple(u.selected[l]), u.adapters[l]) for u in uploads]
                cos_inputs.append(pairs)
                ideal = noiselab.ideal_update(pairs, "per_rank", prev.stacks[l])
                entry["agg"] = noiselab.agg_noise(ideal, actual[l])
                entry["full_client"] = noiselab.agg_noise(noiselab.ideal_update(ups), actual[l])
                if uniform:
                    entry["closed_form"], entry["cs_bound"] = noiselab.fedplora_closed_form(pairs, R)
                q_counts = (q_counts or []) + [[sum(j in p[0] for p in pairs) for j in range(R)]]
            else:
                ideal = noiselab.ideal_update(ups)
                entry["agg"] = noiselab.agg_noise(ideal, actual[l])
                if name in ("fedit", "hetlora") and uniform:
                    padded = [noiselab.pad_to_rank(p, R) for p in ups]
                    entry["closed_form"] = noiselab.hetlora_closed_form(padded)
                elif name == "flexlora":
                    s = np.linalg.svd(ideal, compute_uv=False)
                    entry["closed_form"] = float(np.sqrt(np.sum(s[R:] ** 2)))
                elif name == "flora":
                    entry["closed_form"] = 0.0
                else:
                    have_closed = False
            agg += entry["agg"]
            closed += entry.get("closed_form", 0.0)
            bound += entry.get("cs_bound", 0.0)
            full += entry.get("full_client", 0.0)
            per_module.append(entry)
        report = noiselab.NoiseReport(
            init_noise=init, agg_noise=agg,
            agg_noise_closed_form=closed if have_closed else None,
            cs_bound=bound if (name == "fedplora" and uniform) else None,
            agg_noise_full_client=full if name == "fedplora" else None,
            per_module=per_module)
        cos = None
        if name == "fedplora" and self.config.cosine:
            cos = _cosine_summary(cos_inputs, R)
        return report, q_counts, cos


def run(config: ExperimentConfig, experiment: Experiment | None = None) -> list[RoundRecord]:
    exp = experiment or Experiment(config)
    return [exp.step() for _ in range(config.rounds)]
