import numpy as np
import pytest

from remix import encoder as enc
from remix.errors import (
    DimensionMismatchError,
    ShapeMismatchError,
    StaleCacheError,
    VersionMismatchError,
    ZeroVectorError,
)
from remix.numcore import finite_diff_grad, substream


def make_params(seed=0, dims=(6, 8, 4)):
    return enc.init_params(dims[0], list(dims[1:-1]), dims[-1],
                           substream(seed, "init"))


def test_init_shapes_and_zero_biases():
    p = make_params(dims=(5, 7, 3))
    assert [w.shape for w in p.weights] == [(5, 7), (7, 3)]
    assert all(np.all(b == 0) for b in p.biases)
    assert p.dim_in == 5 and p.dim_out == 3


def test_init_deterministic():
    a, b = make_params(1), make_params(1)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


def test_forward_unit_norm():
    p = make_params()
    x = substream(2, "init").standard_normal((10, 6))
    u, _ = enc.forward_batch(p, x)
    assert np.allclose(np.linalg.norm(u, axis=1), 1.0)


def test_forward_dim_mismatch():
    with pytest.raises(DimensionMismatchError):
        enc.forward_batch(make_params(), np.zeros((2, 7)))


def test_forward_zero_output():
    p = make_params()
    for w in p.weights:
        w[:] = 0.0
    with pytest.raises(ZeroVectorError):
        enc.forward_batch(p, np.ones((1, 6)))


def test_backward_rejects_stale_cache():
    p = make_params()
    x = np.ones((2, 6))
    _, cache = enc.forward_batch(p, x)
    with pytest.raises(StaleCacheError):
        enc.backward_batch(p.copy(), cache, np.zeros((2, 4)))


def test_backward_shape_check():
    p = make_params()
    _, cache = enc.forward_batch(p, np.ones((2, 6)))
    with pytest.raises(ShapeMismatchError):
        enc.backward_batch(p, cache, np.zeros((3, 4)))


def test_backward_matches_finite_differences():
    # scalar head: dot the embeddings against a fixed direction
    rng = substream(4, "gradcheck")
    p = make_params(4, dims=(5, 6, 3))
    x = rng.standard_normal((4, 5))
    probe = rng.standard_normal((4, 3))

    u, cache = enc.forward_batch(p, x)
    d_w, d_b = enc.backward_batch(p, cache, probe)

    for l in range(len(p.weights)):
        def f(w, l=l):
            q = p.copy()
            q.weights[l] = w
            uu, _ = enc.forward_batch(q, x)
            return float(np.sum(uu * probe))

        fd = finite_diff_grad(f, p.weights[l])
        assert np.allclose(d_w[l], fd, atol=1e-6)

        def g(b, l=l):
            q = p.copy()
            q.biases[l] = b
            uu, _ = enc.forward_batch(q, x)
            return float(np.sum(uu * probe))

        fd_b = finite_diff_grad(g, p.biases[l])
        assert np.allclose(d_b[l], fd_b, atol=1e-6)


class TestOptimizer:
    def test_warmup_schedule(self):
        opt = enc.OptimizerState.for_params(make_params(), lr=1.0,
                                            warmup_epochs=10)
        assert enc.effective_lr(opt, 0) == pytest.approx(0.1)
        assert enc.effective_lr(opt, 4) == pytest.approx(0.5)
        assert enc.effective_lr(opt, 9) == pytest.approx(1.0)
        assert enc.effective_lr(opt, 25) == pytest.approx(1.0)

    def test_no_warmup(self):
        opt = enc.OptimizerState.for_params(make_params(), lr=0.5,
                                            warmup_epochs=0)
        assert enc.effective_lr(opt, 0) == 0.5

    def test_decoupled_weight_decay(self):
        # with zero gradients the only update is the decay term
        p = make_params()
        opt = enc.OptimizerState.for_params(p, lr=0.1, weight_decay=0.01,
                                            warmup_epochs=0)
        zeros = ([np.zeros_like(w) for w in p.weights],
                 [np.zeros_like(b) for b in p.biases])
        p2, opt2 = enc.adam_step(opt, p, zeros, epoch=0)
        for w_old, w_new in zip(p.weights, p2.weights):
            assert np.allclose(w_new, w_old * (1.0 - 0.1 * 0.01))
        assert opt2.step == 1

    def test_step_is_functional(self):
        p = make_params()
        snapshot = [w.copy() for w in p.weights]
        opt = enc.OptimizerState.for_params(p)
        grads = ([np.ones_like(w) for w in p.weights],
                 [np.ones_like(b) for b in p.biases])
        enc.adam_step(opt, p, grads, epoch=0)
        assert all(np.array_equal(w, s) for w, s in zip(p.weights, snapshot))
        assert opt.step == 0

    def test_gradient_shape_check(self):
        p = make_params()
        opt = enc.OptimizerState.for_params(p)
        bad = ([np.zeros((2, 2)) for _ in p.weights],
               [np.zeros_like(b) for b in p.biases])
        with pytest.raises(ShapeMismatchError):
            enc.adam_step(opt, p, bad, epoch=0)

    def test_first_step_magnitude(self):
        # bias correction makes the first step approach lr * sign(g)
        p = make_params()
        opt = enc.OptimizerState.for_params(p, lr=0.01, weight_decay=0.0,
                                            warmup_epochs=0)
        grads = ([np.full_like(w, 2.0) for w in p.weights],
                 [np.full_like(b, 2.0) for b in p.biases])
        p2, _ = enc.adam_step(opt, p, grads, epoch=0)
        delta = p.weights[0] - p2.weights[0]
        assert np.allclose(delta, 0.01, atol=1e-6)


class TestEma:
    def test_lambda_zero_bit_exact(self):
        mom, par = make_params(0), make_params(1)
        out = enc.ema_update(mom, par, 0.0)
        assert all(np.array_equal(a, b)
                   for a, b in zip(out.arrays(), par.arrays()))

    def test_lambda_one_keeps_momentum(self):
        mom, par = make_params(0), make_params(1)
        out = enc.ema_update(mom, par, 1.0)
        assert all(np.array_equal(a, b)
                   for a, b in zip(out.arrays(), mom.arrays()))

    def test_interpolation(self):
        mom, par = make_params(0), make_params(1)
        out = enc.ema_update(mom, par, 0.25)
        expect = 0.25 * mom.weights[0] + 0.75 * par.weights[0]
        assert np.allclose(out.weights[0], expect)

    def test_bad_lambda(self):
        with pytest.raises(ValueError):
            enc.ema_update(make_params(), make_params(), 1.5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            enc.ema_update(make_params(dims=(6, 8, 4)),
                           make_params(dims=(6, 9, 4)), 0.5)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        p, m = make_params(0), make_params(1)
        opt = enc.OptimizerState.for_params(p, lr=0.002)
        grads = ([np.ones_like(w) for w in p.weights],
                 [np.ones_like(b) for b in p.biases])
        p, opt = enc.adam_step(opt, p, grads, epoch=0)
        path = tmp_path / "ckpt.json"
        enc.save_checkpoint(path, {"seed": 3}, 7, p, m, opt)
        cfg, epoch, p2, m2, opt2 = enc.load_checkpoint(path)
        assert cfg == {"seed": 3} and epoch == 7
        assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), p2.arrays()))
        assert all(np.array_equal(a, b) for a, b in zip(m.arrays(), m2.arrays()))
        assert opt2.step == 1 and opt2.lr == 0.002
        assert all(np.array_equal(a, b) for a, b in zip(opt.m_w, opt2.m_w))

    def test_header_fields(self, tmp_path):
        import json
        p = make_params()
        path = tmp_path / "ckpt.json"
        enc.save_checkpoint(path, {}, 0, p, p, enc.OptimizerState.for_params(p))
        doc = json.loads(path.read_text())
        assert doc["format"] == "remix-ckpt" and doc["version"] == 1

    def test_version_mismatch(self, tmp_path):
        import json
        path = tmp_path / "ckpt.json"
        path.write_text(json.dumps({"format": "remix-ckpt", "version": 99}))
        with pytest.raises(VersionMismatchError):
            enc.load_checkpoint(path)
