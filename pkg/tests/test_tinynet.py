import numpy as np
import pytest

from fedplora import checks
from fedplora.adapters import LoraPair, TargetModule, lora_to_plora
from fedplora.numkit import ConfigError, RngStream, ShapeError
from fedplora.tinynet import (Batch, MlpSpec, backward, dense_forward, finite_diff_grad, forward, local_sgd,
                              loss, loss_and_grad, sgd_step)


def _one_layer(g, d=3, k=4, r=2, act="identity"):
    spec = MlpSpec((k, d), act)
    frozen = [TargetModule(g.standard_normal((d, k)))]
    site = LoraPair(g.standard_normal((r, k)), g.standard_normal((d, r)))
    return spec, frozen, [site]


def test_spec_validation():
    with pytest.raises(ConfigError):
        MlpSpec((3,))
    with pytest.raises(ConfigError):
        MlpSpec((3, 0))
    with pytest.raises(ConfigError):
        MlpSpec((3, 2), "tanh")
    assert MlpSpec((4, 5, 6)).weight_shapes() == [(5, 4), (6, 5)]


def test_backbone_only_forward():
    g = np.random.default_rng(0)
    spec = MlpSpec((4, 3), "identity")
    t = TargetModule(g.standard_normal((3, 4)))
    x = g.standard_normal((5, 4))
    zero = LoraPair(g.standard_normal((1, 4)), np.zeros((3, 1)))
    out, _ = forward(spec, [t], [zero], Batch(x, np.zeros((5, 3))))
    assert np.allclose(out, x @ t.w0.T, atol=1e-14)


def test_zero_input_relu_zero_output():
    g = np.random.default_rng(1)
    spec = MlpSpec((4, 5, 3))
    frozen = [TargetModule(g.standard_normal(s)) for s in spec.weight_shapes()]
    sites = [checks.random_pair(g, d, k, 1) for d, k in spec.weight_shapes()]
    out, _ = forward(spec, frozen, sites, Batch(np.zeros((2, 4)), np.zeros((2, 3))))
    assert np.array_equal(out, np.zeros((2, 3)))


def test_forward_shape_errors():
    g = np.random.default_rng(2)
    spec, frozen, sites = _one_layer(g)
    with pytest.raises(ShapeError):
        forward(spec, frozen, sites, Batch(np.zeros((2, 5)), np.zeros((2, 3))))
    with pytest.raises(ShapeError):
        forward(spec, frozen + frozen, sites, Batch(np.zeros((2, 4)), np.zeros((2, 3))))


def test_gradients_zero_at_minimum():
    g = np.random.default_rng(3)
    spec, frozen, sites = _one_layer(g)
    x = g.standard_normal((4, 4))
    out, _ = forward(spec, frozen, sites, Batch(x, np.zeros((4, 3))))
    batch = Batch(x, out)
    _, cache = forward(spec, frozen, sites, batch)
    for gm in backward(spec, cache, batch)[0]:
        assert np.array_equal(gm, np.zeros_like(gm))


def test_duplicated_batch_same_gradient():
    g = np.random.default_rng(4)
    spec, frozen, sites, batch = checks.random_gradcheck_instance(g)
    dup = Batch(np.vstack([batch.inputs, batch.inputs]), np.concatenate([batch.targets, batch.targets]))
    _, c1 = forward(spec, frozen, sites, batch)
    _, c2 = forward(spec, frozen, sites, dup)
    for g1, g2 in zip(backward(spec, c1, batch), backward(spec, c2, dup)):
        for x, y in zip(g1, g2):
            assert np.allclose(x, y, rtol=0, atol=1e-12)


def test_gradient_check_random_nets():
    assert checks.check_gradients(n=20, seed=11) < 1e-5


def test_plora_site_gradients_match_lora_site():
    g = np.random.default_rng(5)
    spec, frozen, sites = _one_layer(g, act="identity")
    batch = Batch(g.standard_normal((3, 4)), g.standard_normal((3, 3)))
    _, c1 = forward(spec, frozen, sites, batch)
    _, c2 = forward(spec, frozen, [lora_to_plora(sites[0])], batch)
    for x, y in zip(backward(spec, c1, batch)[0], backward(spec, c2, batch)[0]):
        assert np.allclose(x, y, rtol=0, atol=1e-12)


def test_sgd_step_examples():
    g = np.random.default_rng(6)
    spec, frozen, sites = _one_layer(g)
    zero = [(np.zeros_like(sites[0].a), np.zeros_like(sites[0].b))]
    same = sgd_step(sites, zero, 0.1)[0]
    assert np.array_equal(same.a, sites[0].a) and np.array_equal(same.b, sites[0].b)
    fixed = sgd_step(sites, [(sites[0].a, sites[0].b)], 1.0)[0]
    assert not fixed.a.any() and not fixed.b.any()
    with pytest.raises(ConfigError):
        sgd_step(sites, zero, 0.0)


def test_sgd_step_decreases_convex_loss():
    g = np.random.default_rng(7)
    for _ in range(10):
        spec, frozen, sites = _one_layer(g)
        batch = Batch(g.standard_normal((6, 4)), g.standard_normal((6, 3)))
        before = loss(spec, frozen, sites, batch)
        _, cache = forward(spec, frozen, sites, batch)
        after = loss(spec, frozen, sgd_step(sites, backward(spec, cache, batch), 1e-3), batch)
        assert after < before


def test_finite_diff_quadratic_and_order():
    # a 1x1 identity net with mse is quadratic in a, so central differences are exact up to rounding
    spec = MlpSpec((1, 1), "identity")
    frozen = [TargetModule(np.array([[0.5]]))]
    sites = [LoraPair(np.array([[2.0]]), np.array([[1.5]]))]
    batch = Batch(np.array([[1.0]]), np.array([[0.25]]))
    # loss = 0.5 (0.5 + b a - 0.25)^2, d/da = (0.25 + b a) b
    want = (0.25 + 3.0) * 1.5
    assert finite_diff_grad(spec, frozen, sites, batch, 1e-4)[0][0][0, 0] == pytest.approx(want, abs=1e-8)

    g = np.random.default_rng(8)
    spec = MlpSpec((3, 4, 2), "identity", "cross_entropy")
    frozen = [TargetModule(g.standard_normal(s)) for s in spec.weight_shapes()]
    sites = [checks.random_pair(g, d, k, 2) for d, k in spec.weight_shapes()]
    batch = Batch(g.standard_normal((4, 3)), np.array([0, 1, 1, 0]))
    _, cache = forward(spec, frozen, sites, batch)
    exact = backward(spec, cache, batch)

    def err(h):
        fd = finite_diff_grad(spec, frozen, sites, batch, h)
        return max(np.abs(x - y).max() for ge, gf in zip(exact, fd) for x, y in zip(ge, gf))

    ratio = err(2e-3) / err(1e-3)
    assert 3.0 < ratio < 5.0


def test_local_sgd_keeps_kind_and_backbone():
    checks.check_frozen_backbone()
    g = np.random.default_rng(9)
    spec, frozen, sites = _one_layer(g)
    batch = Batch(g.standard_normal((10, 4)), g.standard_normal((10, 3)))
    out = local_sgd(spec, frozen, [lora_to_plora(sites[0])], batch, 2, 3, 0.01, RngStream(0))
    assert type(out[0]).__name__ == "PloraStack" and len(out[0]) == 2
    again = local_sgd(spec, frozen, [lora_to_plora(sites[0])], batch, 2, 3, 0.01, RngStream(0))
    assert all(np.array_equal(a.a, b.a) for a, b in zip(out[0].components, again[0].components))


def test_cross_entropy_stable():
    spec = MlpSpec((2, 3), "identity", "cross_entropy")
    val, grad = loss_and_grad(spec, np.array([[1000.0, 0.0, -1000.0]]), np.array([0]))
    assert np.isfinite(val) and val == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.isfinite(grad))


def test_forward_matches_dense():
    checks.check_forward_dense()
