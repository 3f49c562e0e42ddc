"""Invariant suite run by ``fedplora verify``.

Each check raises ``AssertionError`` carrying the offending values. The noise
closed forms are looked up through the ``noiselab`` module at call time so a
patched implementation is what gets checked.
"""
from __future__ import annotations

import csv
import json
import statistics
import tempfile
from pathlib import Path

import numpy as np

from . import adapters, costmeter, datagen, noiselab, numkit, strategies, tinynet
from .fedengine import Experiment, ExperimentConfig, run
from .numkit import RngStream


# -- random instance generators (shared with the tests) -----------------------

def random_pair(g, d, k, r, scale=1.0) -> adapters.LoraPair:
    return adapters.LoraPair(g.standard_normal((r, k)), g.standard_normal((d, r)), scale)


def random_stack(g, d, k, R, scale=1.0) -> adapters.PloraStack:
    return adapters.lora_to_plora(random_pair(g, d, k, R, scale))


def random_hetlora_uploads(g, v=None, R=None):
    R = R or int(g.integers(1, 7))
    v = v or int(g.integers(1, 6))
    d, k = int(g.integers(R, 10)), int(g.integers(R, 10))
    ranks = g.integers(1, R + 1, size=v)
    return [random_pair(g, d, k, int(r)) for r in ranks], R


def random_fedplora_uploads(g, spread=0.3):
    """Uploads shaped like one round of local training.

    Each client's copy of component ``j`` is a shared base plus a small
    perturbation. A random subset of indices is never selected (empty Q) and
    at least one index usually has a single holder.
    """
    R = int(g.integers(2, 7))
    v = int(g.integers(1, 6))
    d, k = int(g.integers(2, 9)), int(g.integers(2, 9))
    base = random_stack(g, d, k, R)
    pool = [j for j in range(R) if g.random() < 0.8] or [0]
    uploads = []
    for _ in range(v):
        r = int(g.integers(1, len(pool) + 1))
        sel = tuple(sorted(int(j) for j in g.choice(pool, size=r, replace=False)))
        comps = [adapters.Component(base.components[j].a + spread / np.sqrt(k) * g.standard_normal((1, k)),
                                    base.components[j].b + spread / np.sqrt(d) * g.standard_normal((d, 1)))
                 for j in sel]
        uploads.append((sel, adapters.PloraStack(comps, base.scale)))
    return uploads, base


def svd_tail_oracle(m: np.ndarray, r: int) -> float:
    """sqrt of the sum of squared singular values beyond ``r``.

    The singular values are read off the symmetric embedding [[0, M], [M^T, 0]],
    whose eigenvalues are +-sigma; this avoids squaring M and keeps tiny tails accurate.
    """
    d, k = m.shape
    emb = np.zeros((d + k, d + k))
    emb[:d, d:] = m
    emb[d:, :d] = m.T
    sv = np.sort(np.linalg.eigvalsh(emb))[::-1][:min(d, k)]
    return float(np.sqrt(np.sum(np.clip(sv[r:], 0.0, None) ** 2)))


def _rel(x, y) -> float:
    return float(np.linalg.norm(x - y) / max(np.linalg.norm(y), 1e-300))


# -- numkit -------------------------------------------------------------------

def check_matmul_associativity():
    g = np.random.default_rng(0)
    for _ in range(50):
        a, b, c = (g.standard_normal((5, 5)) for _ in range(3))
        left = numkit.matmul(numkit.matmul(a, b), c)
        right = numkit.matmul(a, numkit.matmul(b, c))
        err = _rel(left, right)
        assert err <= 1e-10, f"associativity relative error {err:.3e}"


def check_svd_tail():
    g = np.random.default_rng(1)
    for _ in range(50):
        d, k = (int(x) for x in g.integers(1, 12, size=2))
        m = g.standard_normal((d, k))
        r = int(g.integers(1, min(d, k) + 1))
        u, s, vt = numkit.truncated_svd(m, r)
        resid = numkit.frobenius_norm(m - (u * s) @ vt)
        want = svd_tail_oracle(m, r)
        assert abs(resid - want) <= 1e-8, f"{d}x{k} rank {r}: residual {resid!r} vs oracle {want!r}"


def check_frobenius_unitary():
    g = np.random.default_rng(2)
    for _ in range(50):
        d, k = (int(x) for x in g.integers(1, 10, size=2))
        m = g.standard_normal((d, k))
        q1, _ = np.linalg.qr(g.standard_normal((d, d)))
        q2, _ = np.linalg.qr(g.standard_normal((k, k)))
        a, b = numkit.frobenius_norm(q1 @ m @ q2), numkit.frobenius_norm(m)
        assert abs(a - b) <= 1e-10 * b, f"{a!r} vs {b!r}"


# -- adapters -----------------------------------------------------------------

def check_plora_lora_equivalence(n=200, seed=3):
    g = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d, k = (int(x) for x in g.integers(1, 33, size=2))
        R = int(g.integers(1, 9))
        p = random_pair(g, d, k, R, float(g.uniform(0.5, 2.0)))
        ref = adapters.lora_delta(p)
        gap = numkit.frobenius_norm(adapters.plora_delta(adapters.lora_to_plora(p)) - ref)
        worst = max(worst, gap / max(numkit.frobenius_norm(ref), 1e-300))
    assert worst <= 1e-12, f"worst relative gap {worst:.3e}"
    return worst


def check_fold_partition():
    g = np.random.default_rng(4)
    for _ in range(100):
        d, k, R = int(g.integers(1, 12)), int(g.integers(1, 12)), int(g.integers(1, 9))
        s = random_stack(g, d, k, R)
        t = adapters.TargetModule(g.standard_normal((d, k)))
        mask = g.random(R) < 0.5
        sel = [j for j in range(R) if mask[j]]
        rest = [j for j in range(R) if not mask[j]]
        folded = adapters.fold(s, rest, t)
        trainable = s.subset(sel) if sel else None
        got = adapters.effective_weight(folded, trainable)
        want = adapters.effective_weight(t, s)
        gap = numkit.frobenius_norm(got - want)
        assert gap <= 1e-12 * max(1.0, numkit.frobenius_norm(want)), f"selected {sel}: gap {gap:.3e}"


def check_param_parity():
    g = np.random.default_rng(5)
    for _ in range(50):
        d, k, R = int(g.integers(1, 20)), int(g.integers(1, 20)), int(g.integers(1, 9))
        r = int(g.integers(1, R + 1))
        sel = sorted(g.choice(R, size=r, replace=False).tolist())
        n_plora = random_stack(g, d, k, R).subset(sel).n_params()
        n_lora = adapters.init_lora(d, k, r, 0.1, RngStream(0)).n_params()
        assert n_plora == n_lora == r * (d + k), f"{n_plora} / {n_lora} / {r * (d + k)}"


# -- tinynet ------------------------------------------------------------------

def _random_net(g):
    depth = int(g.integers(1, 4))
    dims = tuple(int(x) for x in g.integers(2, 6, size=depth + 1))
    act = "relu" if g.random() < 0.5 else "identity"
    loss = "mse" if g.random() < 0.5 else "cross_entropy"
    spec = tinynet.MlpSpec(dims, act, loss)
    frozen, sites = [], []
    for d, k in spec.weight_shapes():
        frozen.append(adapters.TargetModule(g.standard_normal((d, k)) / np.sqrt(k),
                                            0.1 * g.standard_normal((d, k)) if g.random() < 0.5 else None))
        r = int(g.integers(1, min(d, k) + 1))
        p = adapters.LoraPair(0.5 * g.standard_normal((r, k)), 0.5 * g.standard_normal((d, r)),
                              float(g.uniform(0.5, 2.0)))
        sites.append(adapters.lora_to_plora(p) if g.random() < 0.5 else p)
    n = int(g.integers(1, 6))
    x = g.standard_normal((n, dims[0]))
    y = g.integers(0, dims[-1], size=n) if loss == "cross_entropy" else g.standard_normal((n, dims[-1]))
    return spec, frozen, sites, tinynet.Batch(x, y)


def random_gradcheck_instance(g):
    """A random net whose pre-activations stay clear of relu kinks."""
    while True:
        spec, frozen, sites, batch = _random_net(g)
        _, cache = tinynet.forward(spec, frozen, sites, batch)
        if spec.activation == "identity" or min(np.abs(z).min() for z in cache["zs"]) >= 1e-4:
            return spec, frozen, sites, batch


def gradcheck_error(spec, frozen, sites, batch) -> float:
    _, cache = tinynet.forward(spec, frozen, sites, batch)
    analytic = tinynet.backward(spec, cache, batch)
    numeric = tinynet.finite_diff_grad(spec, frozen, sites, batch, 1e-6)
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        for x, y in zip(ga, gn):
            denom = max(np.abs(x).max(), np.abs(y).max(), 1e-8)
            worst = max(worst, float(np.abs(x - y).max() / denom))
    return worst


def check_gradients(n=20, seed=6):
    g = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n):
        err = gradcheck_error(*random_gradcheck_instance(g))
        assert err < 1e-5, f"instance {i}: relative error {err:.3e}"
        worst = max(worst, err)
    return worst


def check_frozen_backbone():
    g = np.random.default_rng(7)
    spec, frozen, sites, batch = random_gradcheck_instance(g)
    w0 = [t.w0.copy() for t in frozen]
    fd = [None if t.fold_delta is None else t.fold_delta.copy() for t in frozen]
    tinynet.local_sgd(spec, frozen, sites, batch, 3, 2, 0.05, RngStream(0))
    for l, t in enumerate(frozen):
        assert np.array_equal(t.w0, w0[l]), f"layer {l}: w0 changed"
        if fd[l] is None:
            assert t.fold_delta is None, f"layer {l}: fold delta appeared"
        else:
            assert np.array_equal(t.fold_delta, fd[l]), f"layer {l}: fold delta changed"


def check_forward_dense():
    g = np.random.default_rng(8)
    for _ in range(30):
        spec, frozen, sites, batch = _random_net(g)
        out, _ = tinynet.forward(spec, frozen, sites, batch)
        weights = [t.frozen_weight() + adapters.adapter_delta(s) for t, s in zip(frozen, sites)]
        ref = tinynet.dense_forward(spec, weights, batch.inputs)
        err = float(np.abs(out - ref).max())
        assert err <= 1e-12 * max(1.0, float(np.abs(ref).max())), f"max deviation {err:.3e}"


# -- datagen ------------------------------------------------------------------

def _labels(seed, n=300, n_classes=6):
    return np.random.default_rng(seed).integers(0, n_classes, size=n)


def _partitions(seed):
    labels = _labels(seed)
    rng = RngStream(seed)
    return {
        "iid": datagen.split_iid(len(labels), 10, rng.child(0)),
        "pathological": datagen.split_pathological(labels, 10, 2, rng.child(1)),
        "dirichlet": datagen.split_dirichlet(labels, 10, 0.3, rng.child(2)),
    }, len(labels)


def check_partitions_cover():
    for seed in range(5):
        parts, n = _partitions(seed)
        for name, p in parts.items():
            allidx = np.concatenate(p.shards)
            assert len(allidx) == n and np.array_equal(np.sort(allidx), np.arange(n)), \
                f"{name} seed {seed}: {len(allidx)} indices, {len(np.unique(allidx))} distinct, n={n}"


def check_partitions_deterministic():
    a, _ = _partitions(11)
    b, _ = _partitions(11)
    for name in a:
        assert all(np.array_equal(x, y) for x, y in zip(a[name].shards, b[name].shards)), name


def check_teacher_realizable():
    spec = tinynet.MlpSpec((6, 8, 4))
    task = datagen.make_teacher(spec, 2, RngStream(0))
    test = datagen.gen_teacher_dataset(task, 100, RngStream(1))
    strat = strategies.Strategy("flora", 2)
    state = strategies.FullDeltaGlobal(task.true_deltas)
    from .fedengine import evaluate
    loss, rec = evaluate(state, strat, task.frozen_modules(), test, spec, task.true_deltas)
    assert loss < 1e-18 and rec == 0.0, f"loss {loss!r}, recovery {rec!r}"


# -- strategies / fedengine ---------------------------------------------------

def check_staleness_guard(seeds=range(10)):
    for seed in seeds:
        records = run(ExperimentConfig(seed=seed, rounds=50, cosine=False))
        n_mod, R = len(records[0].q_counts), len(records[0].q_counts[0])
        for l in range(n_mod):
            for j in range(R):
                hits = sum(r.q_counts[l][j] > 0 for r in records)
                assert hits >= 1, f"seed {seed}: module {l} index {j} never updated in 50 rounds"


def check_zero_init_noise(seed=0):
    records = run(ExperimentConfig(seed=seed, rounds=50, cosine=False))
    for r in records:
        assert r.noise["init_noise"] == 0.0, f"round {r.round}: init noise {r.noise['init_noise']!r}"
        assert r.max_init_gap <= 1e-12, f"round {r.round}: init gap {r.max_init_gap:.3e}"
    return max(r.max_init_gap for r in records)


def check_truncation_noise_identity():
    g = np.random.default_rng(9)
    for _ in range(50):
        R = int(g.integers(1, 7))
        d, k = int(g.integers(R, 10)), int(g.integers(R, 10))
        pair = random_pair(g, d, k, R)
        delta = g.standard_normal((d, k))
        t = adapters.TargetModule(np.zeros((d, k)))
        ranks = [int(x) for x in g.integers(1, R + 1, size=3)]
        het = strategies.ClientRoundState
        h_clients = [het(i, r, [strategies.init_hetlora(pair, t, r)]) for i, r in enumerate(ranks)]
        f_clients = [het(i, r, [strategies.init_flexlora(delta, t, r, R)]) for i, r in enumerate(ranks)]
        got_h = noiselab.init_noise("hetlora", strategies.AdapterGlobal([pair]), h_clients, R)
        fro = numkit.frobenius_norm
        want_h = sum(fro(pair.a[r:]) + fro(pair.b[:, r:]) for r in ranks)
        assert got_h == want_h, f"hetlora {got_h!r} vs slicing {want_h!r}"
        a, b = strategies.flexlora_factors(delta, R)
        got_f = noiselab.init_noise("flexlora", strategies.FullDeltaGlobal([delta]), f_clients, R)
        want_f = sum(fro(a[r:]) + fro(b[:, r:]) for r in ranks)
        assert got_f == want_f, f"flexlora {got_f!r} vs slicing {want_f!r}"


def check_fedit_hetlora_degeneracy():
    base = dict(ranks="4", v=10, rounds=3, cosine=False, dims="8,8,8")
    fa = Experiment(ExperimentConfig(strategy="fedit", **base))
    fb = Experiment(ExperimentConfig(strategy="hetlora", **base))
    for _ in range(3):
        fa.step()
        fb.step()
    for l, (p, q) in enumerate(zip(fa.state.pairs, fb.state.pairs)):
        gap = max(float(np.abs(p.a - q.a).max()), float(np.abs(p.b - q.b).max()))
        assert gap <= 1e-12, f"module {l}: fedit vs hetlora gap {gap:.3e}"


def check_determinism():
    cfg = ExperimentConfig(rounds=5, seed=3)
    a = [json.dumps(r.to_dict()) for r in run(cfg)]
    b = [json.dumps(r.to_dict()) for r in run(cfg)]
    assert a == b, "record streams differ"


def check_backbone_conservation():
    exp = Experiment(ExperimentConfig(rounds=5, cosine=False))
    before = [t.w0.copy() for t in exp.backbone]
    run(exp.config, exp)
    for l, (t, w) in enumerate(zip(exp.backbone, before)):
        assert np.array_equal(t.w0, w), f"backbone {l} changed"


# -- noiselab -----------------------------------------------------------------

def check_flora_zero_noise(n=100):
    g = np.random.default_rng(10)
    for _ in range(n):
        ups, _ = random_hetlora_uploads(g)
        ideal = noiselab.ideal_update(ups)
        _, update, _ = strategies.aggregate_flora(np.zeros(ideal.shape), ups)
        noise = noiselab.agg_noise(ideal, update)
        assert noise <= 1e-10 * numkit.frobenius_norm(ideal), f"noise {noise:.3e}"


def check_flexlora_tail(n=100):
    g = np.random.default_rng(11)
    for _ in range(n):
        ups, R = random_hetlora_uploads(g)
        ideal = noiselab.ideal_update(ups)
        a, b = strategies.flexlora_factors(strategies.aggregate_flexlora(ups), R)
        noise = noiselab.agg_noise(ideal, b @ a)
        want = svd_tail_oracle(ideal, R)
        assert abs(noise - want) <= 1e-8, f"noise {noise!r} vs tail {want!r}"


def check_hetlora_closed_form(n=100):
    g = np.random.default_rng(12)
    for _ in range(n):
        ups, R = random_hetlora_uploads(g)
        ideal, actual, padded = noiselab.hetlora_actual_and_ideal(ups, R)
        brute = noiselab.agg_noise(ideal, actual)
        closed = noiselab.hetlora_closed_form(padded)
        assert abs(brute - closed) <= 1e-10 * max(1.0, brute), f"brute {brute!r} vs closed form {closed!r}"


def check_fedplora_closed_form(n=100):
    g = np.random.default_rng(13)
    saw_empty = saw_single = False
    for _ in range(n):
        ups, base = random_fedplora_uploads(g)
        R = len(base)
        q = [sum(j in sel for sel, _ in ups) for j in range(R)]
        saw_empty |= 0 in q
        saw_single |= 1 in q
        actual = adapters.plora_delta(strategies.aggregate_fedplora(
            base, [(i, list(sel), st) for i, (sel, st) in enumerate(ups)]))
        brute = noiselab.agg_noise(noiselab.ideal_update(ups, "per_rank", base), actual)
        noise, bound = noiselab.fedplora_closed_form(ups, R)
        assert abs(brute - noise) <= 1e-10 * max(1.0, brute), f"brute {brute!r} vs closed form {noise!r}"
        assert noise <= bound + 1e-9, f"noise {noise!r} exceeds bound {bound!r}"
    assert saw_empty and saw_single, "generator never produced empty or singleton Q"


def check_init_noise_zero():
    g = np.random.default_rng(14)
    d, k, R = 6, 5, 4
    t = adapters.TargetModule(g.standard_normal((d, k)))
    stack = random_stack(g, d, k, R)
    for rule in ("fold", "fixed", "weightnorm"):
        cs = [strategies.ClientRoundState(i, r, [strategies.init_fedplora(stack, t, r, rule, RngStream(i))])
              for i, r in enumerate((1, 2, 4))]
        val = noiselab.init_noise("fedplora", strategies.PloraGlobal([stack]), cs, R)
        assert val == 0.0, f"fedplora/{rule}: {val!r}"
    pair = random_pair(g, d, k, R)
    delta = g.standard_normal((d, k))
    full = [strategies.ClientRoundState(0, R, [m]) for m in (strategies.init_hetlora(pair, t, R),)]
    assert noiselab.init_noise("hetlora", strategies.AdapterGlobal([pair]), full, R) == 0.0
    assert noiselab.init_noise("fedit", strategies.AdapterGlobal([pair]),
                               [strategies.ClientRoundState(0, R, [strategies.init_fedit(pair, t, R)])], R) == 0.0
    flex = [strategies.ClientRoundState(0, R, [strategies.init_flexlora(delta, t, R, R)])]
    assert noiselab.init_noise("flexlora", strategies.FullDeltaGlobal([delta]), flex, R) == 0.0


def check_init_noise_monotone():
    g = np.random.default_rng(15)
    for _ in range(50):
        R = int(g.integers(2, 7))
        d, k = int(g.integers(R, 10)), int(g.integers(R, 10))
        pair = random_pair(g, d, k, R)
        delta = g.standard_normal((d, k))
        for method, gm in (("hetlora", pair), ("flexlora", (delta, R))):
            vals = [noiselab.init_noise_module(method, gm, None, r) for r in range(1, R + 1)]
            assert all(x >= y for x, y in zip(vals, vals[1:])), f"{method} R={R}: {vals}"


# -- costmeter ----------------------------------------------------------------

def check_downlink_identities():
    g = np.random.default_rng(16)
    for _ in range(50):
        R = int(g.integers(1, 33))
        p = costmeter.CostProfile(int(g.integers(1, 2000)), int(g.integers(1, 2000)),
                                  int(g.integers(1, 25)), R, int(g.integers(1, R + 1)), int(g.integers(1, 5)))
        diff = costmeter.downlink_bytes("fedplora", p) - costmeter.downlink_bytes("hetlora", p)
        assert diff == p.L * (p.d + p.k) * (p.R - p.r_i) * p.bytes_per_param, f"{p}: {diff}"
        save = costmeter.downlink_bytes("flora", p) - costmeter.downlink_bytes("fedplora", p)
        assert save == p.L * (p.d * p.k - (p.d + p.k) * p.R) * p.bytes_per_param, f"{p}: {save}"
        if p.d * p.k > (p.d + p.k) * p.R:
            assert save > 0


def check_measured_bytes():
    for name in strategies.STRATEGIES:
        ranks = "4" if name == "fedit" else "1,2,4"
        exp = Experiment(ExperimentConfig(strategy=name, ranks=ranks, v=12, sample_frac=0.25,
                                          n_train=240, dims="8,6,5", cosine=False))
        for _ in range(3):
            rec = exp.step()
            want = costmeter.modeled_round_bytes(name, exp.shapes, exp.R,
                                                 [exp.ranks[i] for i in rec.participants],
                                                 exp.config.bytes_per_param)
            got = (rec.comm_up_bytes, rec.comm_down_bytes)
            assert got == want, f"{name} round {rec.round}: measured {got} vs modeled {want}"


# -- cli ----------------------------------------------------------------------

def check_cli_artifacts():
    from .cli import read_records, summarize, write_run
    cfg = ExperimentConfig(rounds=4, seed=5)
    records = run(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        write_run(Path(tmp), cfg, records)
        back = read_records(Path(tmp) / "rounds.jsonl")
        assert [r.to_dict() for r in back] == [r.to_dict() for r in records], "rounds.jsonl round trip is lossy"
        with open(Path(tmp) / "summary.csv") as f:
            row = next(csv.DictReader(f))
    again = summarize(back, cfg)
    for key, val in again.items():
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            assert abs(float(row[key]) - val) <= 1e-12 * max(1.0, abs(val)), f"{key}: {row[key]} vs {val!r}"


# -- slow: method ordering -----------------------------------------------------

def ordering_medians(seeds=range(5), rounds=100, configs=None):
    """Median final recovery error per (strategy, selection) on the default task."""
    configs = configs or [("fedplora", "fold"), ("hetlora", "fold"), ("flexlora", "fold"), ("flora", "fold")]
    out = {}
    for name, sel in configs:
        finals = [run(ExperimentConfig(strategy=name, selection=sel, rounds=rounds, seed=s,
                                       cosine=False))[-1].recovery_error for s in seeds]
        out[(name, sel)] = statistics.median(finals)
    return out


def check_method_ordering():
    med = ordering_medians()
    ours = med[("fedplora", "fold")]
    for other in ("hetlora", "flexlora", "flora"):
        theirs = med[(other, "fold")]
        assert ours < theirs, f"fedplora {ours:.4f} not below {other} {theirs:.4f}"


CHECKS = [
    ("numkit.matmul_associativity", check_matmul_associativity, False),
    ("numkit.svd_tail_residual", check_svd_tail, False),
    ("numkit.frobenius_unitary_invariance", check_frobenius_unitary, False),
    ("adapters.plora_lora_equivalence", check_plora_lora_equivalence, False),
    ("adapters.fold_partition_identity", check_fold_partition, False),
    ("adapters.param_count_parity", check_param_parity, False),
    ("tinynet.gradient_check", check_gradients, False),
    ("tinynet.frozen_backbone", check_frozen_backbone, False),
    ("tinynet.forward_dense_equivalence", check_forward_dense, False),
    ("datagen.partition_disjoint_cover", check_partitions_cover, False),
    ("datagen.partition_deterministic", check_partitions_deterministic, False),
    ("datagen.teacher_realizable", check_teacher_realizable, False),
    ("strategies.staleness_guard", check_staleness_guard, False),
    ("strategies.zero_init_noise", check_zero_init_noise, False),
    ("strategies.truncation_noise_identity", check_truncation_noise_identity, False),
    ("strategies.fedit_hetlora_degeneracy", check_fedit_hetlora_degeneracy, False),
    ("noiselab.flora_zero_agg_noise", check_flora_zero_noise, False),
    ("noiselab.flexlora_svd_tail", check_flexlora_tail, False),
    ("noiselab.hetlora_closed_form", check_hetlora_closed_form, False),
    ("noiselab.fedplora_closed_form_and_bound", check_fedplora_closed_form, False),
    ("noiselab.init_noise_zero", check_init_noise_zero, False),
    ("noiselab.init_noise_monotone", check_init_noise_monotone, False),
    ("fedengine.determinism", check_determinism, False),
    ("fedengine.backbone_conservation", check_backbone_conservation, False),
    ("costmeter.downlink_identities", check_downlink_identities, False),
    ("costmeter.measured_equals_modeled", check_measured_bytes, False),
    ("cli.artifact_round_trip", check_cli_artifacts, False),
    ("fedengine.method_ordering", check_method_ordering, True),
]


def run_all(skip_slow: bool = False):
    """Yield ``(name, passed, detail)`` for every registered check."""
    for name, fn, slow in CHECKS:
        if slow and skip_slow:
            continue
        try:
            fn()
        except AssertionError as e:
            yield name, False, str(e) or "assertion failed"
        except Exception as e:
            yield name, False, f"{type(e).__name__}: {e}"
        else:
            yield name, True, ""
