import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedplora import checks
from fedplora.adapters import (Component, LoraPair, PloraStack, TargetModule, effective_weight, fold,
                               init_lora, init_plora, lora_delta, lora_to_plora, plora_delta, plora_to_lora)
from fedplora.numkit import RngStream, ShapeError


def test_lora_delta_examples():
    p = LoraPair(np.array([[3.0, 4.0]]), np.array([[1.0], [2.0]]))
    assert np.array_equal(lora_delta(p), [[3, 4], [6, 8]])
    p2 = LoraPair(p.a, p.b, 2.0)
    assert np.array_equal(lora_delta(p2), 2 * lora_delta(p))
    z = init_lora(5, 4, 3, 0.02, RngStream(0))
    assert np.array_equal(lora_delta(z), np.zeros((5, 4)))


def test_pair_validation():
    with pytest.raises(ShapeError):
        LoraPair(np.ones((2, 3)), np.ones((4, 3)))
    with pytest.raises((ShapeError, ValueError)):
        LoraPair(np.ones((1, 3)), np.ones((4, 1)), 0.0)
    with pytest.raises((ShapeError, ValueError)):
        PloraStack([], 1.0)


def test_plora_zero_and_roundtrip():
    s = init_plora(4, 3, 2, 0.1, RngStream(1))
    assert np.array_equal(plora_delta(s), np.zeros((4, 3)))
    p = checks.random_pair(np.random.default_rng(0), 5, 6, 4)
    back = plora_to_lora(lora_to_plora(p))
    assert np.array_equal(back.a, p.a) and np.array_equal(back.b, p.b)
    one = lora_to_plora(LoraPair(p.a[:1], p.b[:, :1]))
    assert len(one) == 1 and np.array_equal(one.components[0].a, p.a[:1])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 32), st.integers(1, 32), st.integers(1, 8), st.integers(0, 10**6))
def test_plora_equals_lora(d, k, R, seed):
    p = checks.random_pair(np.random.default_rng(seed), d, k, R)
    ref = lora_delta(p)
    assert np.linalg.norm(plora_delta(lora_to_plora(p)) - ref) <= 1e-12 * np.linalg.norm(ref)


def test_permutation_invariance():
    g = np.random.default_rng(2)
    s = checks.random_stack(g, 4, 5, 4)
    perm = PloraStack([s.components[j] for j in (2, 0, 3, 1)], s.scale)
    assert np.allclose(plora_delta(perm), plora_delta(s), rtol=0, atol=1e-14)


def test_fold_examples():
    g = np.random.default_rng(3)
    s = checks.random_stack(g, 4, 3, 3)
    t = TargetModule(g.standard_normal((4, 3)))
    assert np.array_equal(fold(s, [], t).fold_delta, np.zeros((4, 3)))
    assert np.allclose(fold(s, [0, 1, 2], t).fold_delta, plora_delta(s), atol=1e-14)
    c = s.components[2]
    assert np.array_equal(fold(s, [2], t).fold_delta, c.b @ c.a)
    with pytest.raises(ShapeError):
        fold(s, [3], t)


def test_fold_never_touches_w0():
    g = np.random.default_rng(4)
    s = checks.random_stack(g, 3, 3, 2)
    t = TargetModule(g.standard_normal((3, 3)))
    before = t.w0.copy()
    folded = fold(s, [1], t)
    assert folded.w0 is t.w0 and np.array_equal(t.w0, before)
    assert np.array_equal(t.fold_delta, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        t.w0[0, 0] = 1.0


def test_effective_weight_examples():
    g = np.random.default_rng(5)
    s = checks.random_stack(g, 4, 6, 3)
    t = TargetModule(g.standard_normal((4, 6)))
    assert np.array_equal(effective_weight(t), t.w0)
    full = effective_weight(fold(s, [0, 1, 2], t))
    assert np.allclose(full, t.w0 + plora_delta(s), atol=1e-13)
    split = effective_weight(fold(s, [1], t), s.subset([0, 2]))
    assert np.linalg.norm(split - (t.w0 + plora_delta(s))) <= 1e-12
    with pytest.raises(ShapeError):
        effective_weight(t, checks.random_stack(g, 3, 6, 1))


@pytest.mark.parametrize("check", [checks.check_plora_lora_equivalence, checks.check_fold_partition,
                                   checks.check_param_parity])
def test_adapter_invariants(check):
    check()
