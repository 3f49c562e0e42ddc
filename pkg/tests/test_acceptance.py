"""One test per acceptance criterion, at the stated tolerances.

Each test prints a PASS/FAIL line (also collected into the terminal summary).
"""
import statistics
import time

import numpy as np

from fedplora import checks, costmeter, noiselab
from fedplora.fedengine import Experiment, ExperimentConfig, run

from conftest import ACCEPTANCE_LINES


def report(label, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_c01_plora_lora_equivalence():
    t0 = time.perf_counter()
    worst = checks.check_plora_lora_equivalence(n=200, seed=101)
    dt = time.perf_counter() - t0
    report("C1 PLoRA equals LoRA", worst <= 1e-12 and dt < 1.0,
           f"worst relative gap {worst:.2e} (<= 1e-12) over 200 instances in {dt:.2f}s (< 1s)")


def test_c02_zero_init_noise():
    t0 = time.perf_counter()
    records = run(ExperimentConfig(rounds=50, cosine=False))
    dt = time.perf_counter() - t0
    gap = max(r.max_init_gap for r in records)
    noise = max(r.noise["init_noise"] for r in records)
    report("C2 Fed-PLoRA zero init noise", gap <= 1e-12 and noise == 0.0 and dt < 30,
           f"max client/global gap {gap:.2e} (<= 1e-12), max init noise {noise!r} (== 0), {dt:.1f}s")


def test_c03_flora_zero_agg_noise():
    worst = 0.0
    for seed in range(3):
        exp = Experiment(ExperimentConfig(strategy="flora", rounds=50, seed=seed))
        for _ in range(50):
            prev = [d.copy() for d in exp.state.deltas]
            rec = exp.step()
            # the round's ideal equals the applied update up to the measured noise
            scale = sum(np.linalg.norm(n - p) for n, p in zip(exp.state.deltas, prev))
            worst = max(worst, rec.noise["agg_noise"] / max(scale, 1e-300))
    report("C3 FLoRA zero aggregation noise", worst <= 1e-10,
           f"worst relative agg noise {worst:.2e} (<= 1e-10) over 3 seeds x 50 rounds")


def test_c04_hetlora_closed_form():
    g = np.random.default_rng(404)
    worst = 0.0
    for _ in range(100):
        ups, R = checks.random_hetlora_uploads(g)
        ideal, actual, padded = noiselab.hetlora_actual_and_ideal(ups, R)
        worst = max(worst, abs(noiselab.agg_noise(ideal, actual) - noiselab.hetlora_closed_form(padded)))
    report("C4 HETLoRA closed form", worst <= 1e-10, f"max |brute - closed| {worst:.2e} (<= 1e-10) on 100 sets")


def test_c05_flexlora_svd_tail():
    from fedplora.strategies import aggregate_flexlora, flexlora_factors
    g = np.random.default_rng(505)
    worst = 0.0
    for _ in range(100):
        ups, R = checks.random_hetlora_uploads(g)
        ideal = noiselab.ideal_update(ups)
        a, b = flexlora_factors(aggregate_flexlora(ups), R)
        worst = max(worst, abs(noiselab.agg_noise(ideal, b @ a) - checks.svd_tail_oracle(ideal, R)))
    report("C5 FlexLoRA SVD tail", worst <= 1e-8, f"max |noise - tail| {worst:.2e} (<= 1e-8) on 100 instances")


def test_c06_fedplora_closed_form_and_bound():
    from fedplora.adapters import plora_delta
    from fedplora.strategies import aggregate_fedplora
    g = np.random.default_rng(606)
    worst, slack, empty, single = 0.0, np.inf, 0, 0
    for _ in range(100):
        ups, base = checks.random_fedplora_uploads(g)
        R = len(base)
        q = [sum(j in sel for sel, _ in ups) for j in range(R)]
        empty += 0 in q
        single += 1 in q
        actual = plora_delta(aggregate_fedplora(base, [(i, list(s), st) for i, (s, st) in enumerate(ups)]))
        brute = noiselab.agg_noise(noiselab.ideal_update(ups, "per_rank", base), actual)
        noise, bound = noiselab.fedplora_closed_form(ups, R)
        worst = max(worst, abs(brute - noise))
        slack = min(slack, bound - noise)
    ok = worst <= 1e-10 and slack >= -1e-9 and empty > 0 and single > 0
    report("C6 Fed-PLoRA closed form and bound", ok,
           f"max |brute - closed| {worst:.2e} (<= 1e-10), min bound slack {slack:.3g} (>= 0), "
           f"{empty} instances with empty Q, {single} with singleton Q")


def test_c07_gradients():
    t0 = time.perf_counter()
    worst = checks.check_gradients(n=20, seed=707)
    dt = time.perf_counter() - t0
    report("C7 gradient check", worst < 1e-5 and dt < 10,
           f"max relative error {worst:.2e} (< 1e-5) over 20 nets in {dt:.2f}s (< 10s)")


_MEDIANS = {}


def _medians():
    if not _MEDIANS:
        t0 = time.perf_counter()
        configs = [("fedplora", "fold"), ("hetlora", "fold"), ("flexlora", "fold"), ("flora", "fold"),
                   ("fedplora", "drop"), ("fedplora", "fixed")]
        _MEDIANS.update(checks.ordering_medians(range(5), 100, configs))
        _MEDIANS["seconds"] = time.perf_counter() - t0
    return _MEDIANS


def test_c08a_method_ordering():
    med = _medians()
    ours = med[("fedplora", "fold")]
    others = {m: med[(m, "fold")] for m in ("hetlora", "flexlora", "flora")}
    ok = all(ours < v for v in others.values()) and med["seconds"] < 300
    detail = ", ".join(f"{m} {v:.3f}" for m, v in others.items())
    report("C8a Fed-PLoRA beats baselines", ok,
           f"median final recovery error fedplora {ours:.3f} vs {detail}; 6 configs x 5 seeds in {med['seconds']:.0f}s")


def test_c08b_selection_ordering():
    # Expected to fail at desk scale; see the decisions ledger. Fixed keeps the
    # fold (zero init noise) and so beats Drop, which discards global components.
    med = _medians()
    fold, drop, fixed = (med[("fedplora", s)] for s in ("fold", "drop", "fixed"))
    report("C8b Fold <= Drop <= Fixed", fold <= drop <= fixed,
           f"median final recovery error fold {fold:.3f}, drop {drop:.3f}, fixed {fixed:.3f}")


def test_c09_cost_model():
    p = costmeter.CostProfile(768, 768, 12, 16, 1, 2)
    MB, MIB = costmeter.MB, costmeter.MIB
    up = costmeter.uplink_bytes("hetlora", p)
    down_ours = costmeter.downlink_bytes("fedplora", p)
    down_flora = costmeter.downlink_bytes("flora", p)
    mem_ours = costmeter.temp_memory_bytes("fedplora", p)
    mem_flora = costmeter.temp_memory_bytes("flora", p)

    def within(x, ref, tol):
        return abs(x / MB - ref) / ref <= tol

    ok = (within(up, 0.04, 0.10) and within(down_ours, 0.54, 0.10) and within(down_flora, 13.54, 0.05)
          and within(mem_ours, 0.54, 0.10) and within(mem_flora, 13.54, 0.05))
    ok &= down_ours - costmeter.downlink_bytes("hetlora", p) == p.L * (p.d + p.k) * (p.R - p.r_i) * p.bytes_per_param
    checks.check_measured_bytes()
    report("C9 cost model", ok,
           f"uplink {up / MB:.4f} MB ({up / MIB:.4f} MiB) vs 0.04; fedplora downlink {down_ours / MB:.4f} MB "
           f"({down_ours / MIB:.4f} MiB) vs 0.54; flora downlink {down_flora / MB:.2f} MB ({down_flora / MIB:.2f} MiB) "
           f"vs 13.54; temp memory equals downlink; overhead identity and measured == modeled bytes hold")


def test_c10_staleness_guard():
    misses = []
    for seed in range(10):
        recs = run(ExperimentConfig(seed=seed, rounds=50, cosine=False))
        for l in range(len(recs[0].q_counts)):
            for j in range(len(recs[0].q_counts[l])):
                if not any(r.q_counts[l][j] > 0 for r in recs):
                    misses.append((seed, l, j))
    report("C10 staleness guard", not misses,
           f"{10 - len({m[0] for m in misses})}/10 seeds update every module index within 50 rounds")


def test_c11_cosine_trend():
    recs = run(ExperimentConfig(partition="cluster", rounds=50))
    first, last = recs[0].cosine["diag_a"], recs[-1].cosine["diag_a"]
    report("C11 within-rank similarity rises", last > first,
           f"mean diagonal of grid_a: round 1 {first:.3f}, round 50 {last:.3f} (magnitude reported, not asserted)")
