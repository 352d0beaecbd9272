import numpy as np
import pytest

from scanmix import SegModel, forward, init_model
from scanmix.nn import backward, forward_logits, sgd_step, softmax, softmax_backward
from scanmix.train import ce_loss, mt_loss


def reference_forward(model, feats):
    """Scalar nested-loop re-implementation of the conv stack."""
    x = np.asarray(feats, np.float64)
    last = model.num_layers - 1
    for li, (w, b) in enumerate(zip(model.weights, model.biases)):
        f, c, kh, kw = w.shape
        _, h, wd = x.shape
        pad = kh // 2
        xp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
        xp[:, pad : pad + h, pad : pad + wd] = x
        y = np.zeros((f, h, wd))
        for fo in range(f):
            for i in range(h):
                for j in range(wd):
                    acc = b[fo]
                    for ci in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += w[fo, ci, di, dj] * xp[ci, i + di, j + dj]
                    y[fo, i, j] = acc
        x = np.maximum(y, 0.0) if li < last else y
    # softmax per pixel
    z = x - x.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def small_model(seed=0, k=4):
    return init_model(k, channels=(3, 5), in_channels=3, seed=seed)


def rand_feats(rng, h=6, w=8):
    return rng.normal(0, 1, (3, h, w))


class TestForward:
    def test_zero_parameters_give_uniform(self):
        model = small_model()
        for w in model.weights:
            w[:] = 0
        probs = forward(model, np.ones((3, 5, 7)))
        np.testing.assert_allclose(probs, 1.0 / model.k_classes)

    def test_distributions_sum_to_one(self):
        rng = np.random.default_rng(1)
        probs = forward(small_model(1), rand_feats(rng))
        np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-6)
        assert probs.min() >= 0

    def test_bias_shift_raises_class_probability(self):
        rng = np.random.default_rng(2)
        model = small_model(2)
        feats = rand_feats(rng)
        before = forward(model, feats)
        model.biases[-1][1] += 2.0
        after = forward(model, feats)
        assert np.all(after[1] > before[1])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            forward(small_model(), np.zeros((2, 5, 7)))

    def test_matches_scalar_reference(self):
        """Vectorized forward vs the nested-loop oracle, max abs diff < 1e-6."""
        for seed in range(3):
            rng = np.random.default_rng(seed)
            model = small_model(seed)
            feats = rand_feats(rng)
            got = forward(model, feats)
            want = reference_forward(model, feats)
            assert np.abs(got - want).max() < 1e-6

    def test_numerical_stability_with_huge_logits(self):
        model = small_model(3)
        model.biases[-1][:] = [1000.0, -1000.0, 0.0, 500.0]
        probs = forward(model, np.zeros((3, 4, 4)))
        assert np.isfinite(probs).all()
        np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-6)


class TestLosses:
    def test_ce_uniform_prediction_is_ln_k(self):
        k = 4
        probs = np.full((k, 3, 5), 1.0 / k)
        target = np.ones((3, 5), np.int32)
        loss, _ = ce_loss(probs, target)
        assert loss == pytest.approx(np.log(k))

    def test_ce_perfect_prediction_is_zero(self):
        probs = np.zeros((3, 2, 2))
        probs[1] = 1.0
        loss, grad = ce_loss(probs, np.ones((2, 2), np.int32))
        assert loss == pytest.approx(0.0)

    def test_ce_all_ignored_is_zero_loss_zero_grad(self):
        probs = np.full((3, 2, 2), 1 / 3)
        loss, grad = ce_loss(probs, np.zeros((2, 2), np.int32), ignored_id=0)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_mt_identical_predictions_zero(self):
        p = np.full((2, 3, 3), 0.5)
        loss, grad = mt_loss(p, p, np.ones((3, 3), bool))
        assert loss == 0.0

    def test_mt_one_hot_vs_uniform_single_pixel(self):
        s = np.array([1.0, 0.0]).reshape(2, 1, 1)
        t = np.array([0.5, 0.5]).reshape(2, 1, 1)
        loss, _ = mt_loss(s, t, np.ones((1, 1), bool))
        assert loss == pytest.approx(0.5)  # 0.5^2 + 0.5^2

    def test_mt_mask_excludes_pixels(self):
        rng = np.random.default_rng(3)
        s = softmax(rng.normal(0, 1, (3, 4, 4)))
        t = softmax(rng.normal(0, 1, (3, 4, 4)))
        mask = np.zeros((4, 4), bool)
        mask[0, 0] = True
        loss, _ = mt_loss(s, t, mask)
        expect = ((s[:, 0, 0] - t[:, 0, 0]) ** 2).sum()
        assert loss == pytest.approx(expect)


def finite_difference(loss_fn, param, coords, eps=1e-4):
    grads = []
    for idx in coords:
        orig = param[idx]
        param[idx] = orig + eps
        plus = loss_fn()
        param[idx] = orig - eps
        minus = loss_fn()
        param[idx] = orig
        grads.append((plus - minus) / (2 * eps))
    return np.array(grads)


def relative_error(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return np.abs(a - b) / denom


def pick_coords(rng, arr, n=20):
    flat = rng.integers(0, arr.size, min(n, arr.size))
    return [np.unravel_index(i, arr.shape) for i in flat]


class TestGradients:
    """Central finite differences vs analytic gradients, every tensor."""

    @pytest.mark.parametrize("seed", range(5))
    def test_ce_loss_gradients_all_layers(self, seed):
        rng = np.random.default_rng(seed)
        model = small_model(seed)
        feats = rand_feats(rng)
        target = rng.integers(0, model.k_classes, (6, 8)).astype(np.int32)

        def loss_fn():
            logits, _ = forward_logits(model, feats)
            return ce_loss(softmax(logits), target, ignored_id=0)[0]

        logits, cache = forward_logits(model, feats)
        _, dlogits = ce_loss(softmax(logits), target, ignored_id=0)
        grads = backward(model, cache, dlogits)
        for li, (dw, db) in enumerate(grads):
            for param, analytic in ((model.weights[li], dw), (model.biases[li], db)):
                coords = pick_coords(rng, param)
                numeric = finite_difference(loss_fn, param, coords)
                got = np.array([analytic[c] for c in coords])
                assert relative_error(got, numeric).max() < 1e-3, f"layer {li}"

    @pytest.mark.parametrize("seed", range(5))
    def test_mt_loss_gradients_all_layers(self, seed):
        rng = np.random.default_rng(100 + seed)
        model = small_model(seed)
        feats = rand_feats(rng)
        teacher = softmax(rng.normal(0, 1, (model.k_classes, 6, 8)))
        mask = rng.uniform(0, 1, (6, 8)) < 0.7
        mask[0, 0] = True

        def loss_fn():
            logits, _ = forward_logits(model, feats)
            return mt_loss(softmax(logits), teacher, mask)[0]

        logits, cache = forward_logits(model, feats)
        _, dlogits = mt_loss(softmax(logits), teacher, mask)
        grads = backward(model, cache, dlogits)
        for li, (dw, db) in enumerate(grads):
            for param, analytic in ((model.weights[li], dw), (model.biases[li], db)):
                coords = pick_coords(rng, param)
                numeric = finite_difference(loss_fn, param, coords)
                got = np.array([analytic[c] for c in coords])
                assert relative_error(got, numeric).max() < 1e-3, f"layer {li}"

    def test_softmax_backward_matches_jacobian(self):
        rng = np.random.default_rng(7)
        logits = rng.normal(0, 1, (4, 1, 1))
        dprobs = rng.normal(0, 1, (4, 1, 1))
        probs = softmax(logits)
        got = softmax_backward(probs, dprobs)[:, 0, 0]
        p = probs[:, 0, 0]
        jac = np.diag(p) - np.outer(p, p)
        np.testing.assert_allclose(got, jac @ dprobs[:, 0, 0], rtol=1e-10)


def test_sgd_step_moves_against_gradient():
    model = small_model(4)
    before = [w.copy() for w in model.weights]
    grads = [(np.ones_like(w), np.ones_like(b)) for w, b in zip(model.weights, model.biases)]
    sgd_step(model, grads, lr=0.5)
    for w0, w1 in zip(before, model.weights):
        np.testing.assert_allclose(w1, w0 - 0.5)


def test_batched_forward_matches_per_image():
    rng = np.random.default_rng(8)
    model = small_model(5)
    batch = rng.normal(0, 1, (3, 3, 6, 8))
    joint = forward(model, batch)
    for i in range(3):
        single = forward(model, batch[i])
        np.testing.assert_allclose(joint[i], single, atol=1e-12)
