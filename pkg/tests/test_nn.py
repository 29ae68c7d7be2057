import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hallpilot import nn
from hallpilot.nn import (GRU, Adam, Conv2d, LayerSpec, Linear, LossSpec,
                          Model, SGD, Tensor, grad_check, inverse_freq_weights,
                          loss_ce, loss_gaussian_ce, loss_mse,
                          loss_weighted_ce, softmax, xavier_init)


class TestXavier:
    def test_bound_for_equal_fans(self):
        w = xavier_init((1000,), fan_in=3, fan_out=3, seed=0)
        assert np.all(np.abs(w) <= 1.0)   # sqrt(6/6) = 1
        assert np.abs(w).max() > 0.9      # actually fills the range

    def test_variance_statistical(self):
        # oracle: variance of U(-a, a) is a^2/3 = 2/(fan_in+fan_out)
        fan_in, fan_out = 40, 60
        w = xavier_init((100000,), fan_in, fan_out, seed=1)
        expected = 2.0 / (fan_in + fan_out)
        assert w.var() == pytest.approx(expected, rel=0.05)

    def test_same_seed_identical(self):
        a = xavier_init((64,), 8, 8, seed=42)
        b = xavier_init((64,), 8, 8, seed=42)
        assert np.array_equal(a, b)

    def test_biases_zero_in_layers(self):
        layer = Linear(4, 3)
        assert np.all(layer.b.data == 0)
        conv = Conv2d(3, 8, 3)
        assert np.all(conv.b.data == 0)


class TestForwardOracles:
    def test_identity_linear(self):
        layer = Linear(4, 4)
        layer.w.data = np.eye(4, dtype=np.float32)
        layer.b.data = np.zeros(4, dtype=np.float32)
        x = np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32)
        assert np.allclose(layer.forward(x), x)

    def test_1x1_conv_scales(self):
        conv = Conv2d(1, 1, kernel=1)
        conv.w.data = np.full((1, 1, 1, 1), 2.5, dtype=np.float32)
        conv.b.data = np.zeros(1, dtype=np.float32)
        x = np.random.default_rng(1).standard_normal((2, 1, 4, 5)).astype(np.float32)
        assert np.allclose(conv.forward(x), 2.5 * x, rtol=1e-6)

    def test_3x3_conv_hand_oracle(self):
        # oracle: naive quadruple loop over a 4x4 image with a known kernel
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 1, 4, 4))
        k = rng.standard_normal((1, 1, 3, 3))
        conv = Conv2d(1, 1, kernel=3)
        conv.w.data = k.astype(np.float32)
        conv.b.data = np.zeros(1, dtype=np.float32)
        expected = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                expected[i, j] = (x[0, 0, i:i + 3, j:j + 3] * k[0, 0]).sum()
        got = conv.forward(x.astype(np.float32))[0, 0]
        assert np.allclose(got, expected, atol=1e-5)

    def test_gru_zero_everything_outputs_zero(self):
        gru = GRU(3, 4)
        for p in gru.params():
            p.data = np.zeros_like(p.data)
        x = np.zeros((2, 3, 3), dtype=np.float32)
        assert np.all(gru.forward(x) == 0.0)

    def test_gru_bias_only_hand_unroll(self):
        # oracle: unroll the gating equations by hand for 3 steps with zero
        # weights and known biases; h' = (1-z) h + z tanh-path
        gru = GRU(2, 2)
        for p in gru.params():
            p.data = np.zeros_like(p.data)
        bz, bh = 1.0, 0.5
        gru.bz.data = np.full(2, bz, dtype=np.float32)
        gru.bh.data = np.full(2, bh, dtype=np.float32)

        def sig(v):
            return 1 / (1 + math.exp(-v))

        h = 0.0
        for _ in range(3):
            z = sig(bz)
            htil = math.tanh(bh)
            h = (1 - z) * h + z * htil
        x = np.zeros((1, 3, 2), dtype=np.float32)
        out = gru.forward(x)
        assert np.allclose(out, h, atol=1e-6)

    def test_shape_mismatch_names_layer(self):
        specs = [LayerSpec("conv2d", {"filters": 2, "kernel": 5})]
        with pytest.raises(ValueError, match="conv2d0"):
            Model.build(specs, (3, 4, 4))


class TestLosses:
    def test_mse_zero_at_target(self):
        loss, grad = loss_mse(np.array([0.3]), np.array([0.3]))
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_mse_hand_value(self):
        loss, grad = loss_mse(np.array([0.5]), np.array([-0.5]))
        assert loss == pytest.approx(1.0)
        assert grad[0] == pytest.approx(2.0)

    def test_ce_uniform_logits(self):
        loss, _ = loss_ce(np.zeros((1, 15)), np.array([4]))
        assert loss == pytest.approx(math.log(15))

    def test_ce_confident_goes_to_zero(self):
        logits = np.zeros((1, 5))
        logits[0, 2] = 20.0
        loss, _ = loss_ce(logits, np.array([2]))
        assert loss < 1e-6

    def test_weighted_ce_weight_one_equals_ce(self):
        rng = np.random.default_rng(3)
        logits = rng.standard_normal((4, 7))
        t = np.array([0, 3, 6, 1])
        l1, g1 = loss_ce(logits, t)
        l2, g2 = loss_weighted_ce(logits, t, np.ones(7))
        assert l1 == pytest.approx(l2)
        assert np.allclose(g1, g2)

    def test_weighted_ce_weight_two_doubles(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((3, 5))
        t = np.array([1, 2, 4])
        l1, g1 = loss_ce(logits, t)
        l2, g2 = loss_weighted_ce(logits, t, np.full(5, 2.0))
        assert l2 == pytest.approx(2 * l1)
        assert np.allclose(g2, 2 * g1)

    def test_gaussian_ce_lambda_zero_equals_ce(self):
        rng = np.random.default_rng(5)
        logits = rng.standard_normal((3, 9))
        t = np.array([0, 4, 8])
        l1, g1 = loss_ce(logits, t)
        l2, g2 = loss_gaussian_ce(logits, t, sigma=1.5, lam=0.0)
        assert l2 == pytest.approx(l1)
        assert np.allclose(g2, g1)

    def test_gaussian_ce_no_penalty_when_mass_on_target(self):
        logits = np.full((1, 7), -30.0)
        logits[0, 3] = 30.0
        loss, _ = loss_gaussian_ce(logits, np.array([3]), sigma=1.0, lam=5.0)
        assert loss < 1e-6          # D(target, target) = 0

    def test_gaussian_ce_penalizes_distant_mass(self):
        near = np.array([[0.0, 8.0, 0.0, 0.0, 0.0]])   # mass next to target 0
        far = np.array([[0.0, 0.0, 0.0, 0.0, 8.0]])    # mass far from target 0
        l_near, _ = loss_gaussian_ce(near, np.array([0]), sigma=1.0, lam=1.0)
        l_far, _ = loss_gaussian_ce(far, np.array([0]), sigma=1.0, lam=1.0)
        assert l_far > l_near

    def test_gaussian_ce_sigma_validation(self):
        with pytest.raises(ValueError):
            loss_gaussian_ce(np.zeros((1, 3)), np.array([0]), sigma=0.0, lam=1.0)

    def test_all_losses_nonnegative(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            logits = rng.standard_normal((2, 5)) * 3
            t = rng.integers(0, 5, 2)
            assert loss_ce(logits, t)[0] >= 0
            assert loss_weighted_ce(logits, t, rng.uniform(0.1, 3, 5))[0] >= 0
            assert loss_gaussian_ce(logits, t, 1.5, 1.0)[0] >= 0
            pred = rng.uniform(-1, 1, 4)
            assert loss_mse(pred, rng.uniform(-1, 1, 4))[0] >= 0

    def test_loss_grads_vs_finite_differences(self):
        # oracle: central differences on the loss wrt logits
        rng = np.random.default_rng(7)
        logits = rng.standard_normal((3, 6))
        t = np.array([0, 2, 5])
        wts = rng.uniform(0.2, 3.0, 6)
        cases = [
            (lambda l: loss_ce(l, t), "ce"),
            (lambda l: loss_weighted_ce(l, t, wts), "weighted"),
            (lambda l: loss_gaussian_ce(l, t, 1.5, 0.7), "gaussian"),
        ]
        h = 1e-6
        for fn, name in cases:
            _, grad = fn(logits)
            for i in range(logits.shape[0]):
                for j in range(logits.shape[1]):
                    lp = logits.copy()
                    lp[i, j] += h
                    lm = logits.copy()
                    lm[i, j] -= h
                    gn = (fn(lp)[0] - fn(lm)[0]) / (2 * h)
                    rel = abs(grad[i, j] - gn) / max(abs(grad[i, j]), abs(gn), 1e-8)
                    assert rel < 1e-6, f"{name} grad at {i},{j}"

    def test_mse_grad_vs_finite_differences(self):
        rng = np.random.default_rng(8)
        pred = rng.uniform(-1, 1, 5)
        target = rng.uniform(-1, 1, 5)
        _, grad = loss_mse(pred, target)
        h = 1e-6
        for i in range(5):
            pp, pm = pred.copy(), pred.copy()
            pp[i] += h
            pm[i] -= h
            gn = (loss_mse(pp, target)[0] - loss_mse(pm, target)[0]) / (2 * h)
            assert abs(grad[i] - gn) / max(abs(grad[i]), abs(gn), 1e-8) < 1e-6


class TestSoftmax:
    def test_sums_to_one(self):
        rng = np.random.default_rng(9)
        p = softmax(rng.standard_normal((10, 8)) * 5)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(10)
        logits = rng.standard_normal((4, 6))
        p1 = softmax(logits)
        p2 = softmax(logits + 123.0)
        assert np.allclose(p1, p2, atol=1e-9)
        assert np.array_equal(p1.argmax(axis=1), p2.argmax(axis=1))


class TestInverseFreqWeights:
    def test_uniform_hist_all_ones(self):
        assert np.allclose(inverse_freq_weights(np.full(5, 20)), 1.0)

    def test_stated_formula_70_20_10(self):
        w = inverse_freq_weights(np.array([70, 20, 10]))
        assert w == pytest.approx([10 / 21, 10 / 6, 10 / 3])
        assert (np.array([70, 20, 10]) * w).sum() == pytest.approx(100.0)

    def test_empty_bin_gets_zero(self):
        w = inverse_freq_weights(np.array([100, 0]))
        assert w.tolist() == [1.0, 0.0]

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            inverse_freq_weights(np.zeros(4))

    @settings(max_examples=100, deadline=None)
    @given(hist=st.lists(st.integers(0, 10000), min_size=1, max_size=30))
    def test_mean_weight_is_one(self, hist):
        hist = np.array(hist)
        if hist.sum() == 0:
            return
        w = inverse_freq_weights(hist)
        n = hist.sum()
        assert abs((hist * w).sum() - n) <= 1e-9 * n


class TestOptimizers:
    def _param(self, value):
        t = Tensor(np.array([value], dtype=np.float32))
        t.grad = np.array([1.0], dtype=np.float32)
        return t

    def test_lr_zero_no_change(self):
        p = self._param(0.5)
        SGD([p], lr=0.0).step()
        assert p.data[0] == np.float32(0.5)
        p2 = self._param(0.5)
        Adam([p2], lr=0.0).step()
        assert p2.data[0] == np.float32(0.5)

    def test_sgd_plain_step(self):
        p = self._param(1.0)
        SGD([p], lr=0.1, momentum=0.0).step()
        assert p.data[0] == pytest.approx(0.9)

    def test_sgd_momentum_accumulates(self):
        p = self._param(0.0)
        opt = SGD([p], lr=0.1, momentum=0.9)
        opt.step()      # v=1, p=-0.1
        p.grad = np.array([1.0], dtype=np.float32)
        opt.step()      # v=1.9, p=-0.29
        assert p.data[0] == pytest.approx(-0.29)

    def test_adam_first_step_hand_computed(self):
        # oracle for t=1: m_hat = g, v_hat = g^2, so
        # delta = -lr * g / (|g| + eps)
        g = 0.37
        p = Tensor(np.array([2.0], dtype=np.float32))
        p.grad = np.array([g], dtype=np.float32)
        lr, eps = 0.01, 1e-8
        Adam([p], lr=lr, eps=eps).step()
        expected = 2.0 - lr * g / (abs(g) + eps)
        assert p.data[0] == pytest.approx(expected, rel=1e-6)


class TestGradCheck:
    def test_linear_mse_toy(self):
        m = Model.build([LayerSpec("linear", {"out": 3}),
                         LayerSpec("tanh"),
                         LayerSpec("linear", {"out": 1})], (4,), seed=0)
        x = np.random.default_rng(11).standard_normal((3, 4))
        t = np.array([0.1, -0.5, 0.9])
        assert grad_check(m, loss_mse, x, t) <= 1e-6

    def test_conv_relu_ce_toy(self):
        m = Model.build([LayerSpec("conv2d", {"filters": 2, "kernel": 3}),
                         LayerSpec("relu"),
                         LayerSpec("flatten"),
                         LayerSpec("linear", {"out": 4})], (2, 6, 6), seed=1)
        x = np.random.default_rng(12).standard_normal((2, 2, 6, 6))
        t = np.array([1, 3])
        assert grad_check(m, loss_ce, x, t) <= 1e-4

    def test_corrupted_backward_detected(self):
        m = Model.build([LayerSpec("linear", {"out": 2})], (3,), seed=2)
        layer = m.layers[0]
        orig_backward = layer.backward

        def doubled(dout):
            dx = orig_backward(dout)
            layer.w.grad *= 2
            layer.b.grad *= 2
            return dx

        layer.backward = doubled
        x = np.random.default_rng(13).standard_normal((2, 3))
        err = grad_check(m, loss_ce, x, np.array([0, 1]))
        assert err == pytest.approx(0.5, abs=0.01)


class TestCheckpoint:
    def test_roundtrip_bit_identical(self, tmp_path):
        spec = {"name": "toy", "layers": []}
        rng = np.random.default_rng(14)
        params = [rng.standard_normal((3, 4)).astype(np.float32),
                  rng.standard_normal(7).astype(np.float32)]
        path = tmp_path / "m.ckpt"
        nn.save_checkpoint(path, spec, params, ["a.w", "a.b"],
                           pipeline=[{"op": "reflect"}])
        spec2, params2, names = nn.load_checkpoint(path)
        assert spec2 == spec
        assert names == ["a.w", "a.b"]
        for a, b in zip(params, params2):
            assert np.array_equal(a, b)
        assert nn.load_sidecar(path)["pipeline"] == [{"op": "reflect"}]

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTCKPT")
        with pytest.raises(ValueError, match="magic"):
            nn.load_checkpoint(path)

    def test_magic_bytes_prefix(self, tmp_path):
        path = tmp_path / "m.ckpt"
        nn.save_checkpoint(path, {}, [], [])
        assert path.read_bytes()[:5] == b"BCNN1"


class TestLossSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            LossSpec(kind="hinge")

    def test_weights_length_checked(self):
        with pytest.raises(ValueError):
            LossSpec(kind="weighted_ce", n_bins=5, class_weights=[1.0, 2.0])

    def test_dispatch(self):
        rng = np.random.default_rng(15)
        logits = rng.standard_normal((2, 15))
        t = np.array([3, 7])
        assert LossSpec(kind="ce").compute(logits, t)[0] == loss_ce(logits, t)[0]
