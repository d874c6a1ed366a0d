import math

import numpy as np
import pytest
from gradcheck import max_rel_error

from satoffload.neural import tensor as T
from satoffload.neural.adam import AdamState, adam_step, clip_grad_norm
from satoffload.neural.checkpoint import load_checkpoint, save_checkpoint
from satoffload.neural.layers import AttentionHead, Dense, Mlp, attention_mix, forward
from satoffload.neural.tensor import Tensor, gradient, no_grad, softmax_np


def mlp(widths, seed=0, **kw):
    return Mlp(widths, np.random.default_rng(seed), **kw)


class TestForward:
    def test_identity(self):
        m = mlp([3, 3])
        m.layers[0].W.data = np.eye(3)
        m.layers[0].b.data = np.zeros(3)
        x = np.array([0.5, -2.0, 3.0])
        np.testing.assert_array_equal(forward(m, x), x)

    def test_zero_weights(self):
        m = mlp([2, 3], out_activation="relu")
        m.layers[0].W.data = np.zeros((2, 3))
        m.layers[0].b.data = np.array([-1.0, 0.5, 2.0])
        np.testing.assert_array_equal(forward(m, [7.0, 8.0]), [0.0, 0.5, 2.0])

    def test_hand_computed(self):
        m = mlp([2, 2, 1])
        m.layers[0].W.data = np.array([[1.0, -2.0], [0.5, 1.0]])
        m.layers[0].b.data = np.array([0.1, 0.2])
        m.layers[1].W.data = np.array([[2.0], [3.0]])
        m.layers[1].b.data = np.array([-1.0])
        # h = relu([1*1 + 0.5*2 + 0.1, -2*1 + 1*2 + 0.2]) = [2.1, 0.2]; out = 4.2 + 0.6 - 1
        assert forward(m, [1.0, 2.0])[0] == pytest.approx(3.8, abs=1e-12)

    def test_shape_mismatch_names_layer(self):
        m = mlp([3, 4, 2])
        m.layers[1] = Dense(5, 2, np.random.default_rng(0))
        with pytest.raises(ValueError, match="layer 1"):
            forward(m, np.zeros(3))
        with pytest.raises(ValueError, match="layer 0"):
            forward(m, np.zeros(2))


class TestAttention:
    def head(self, seed=0):
        return AttentionHead(4, 3, np.random.default_rng(seed))

    def test_identical_others_uniform(self):
        e = np.ones(4)
        _, phi = attention_mix(self.head(), np.arange(4.0), np.stack([e, e, e]))
        np.testing.assert_allclose(phi, [1 / 3] * 3, rtol=1e-12)

    def test_single_other(self):
        _, phi = attention_mix(self.head(), np.arange(4.0), np.ones((1, 4)))
        np.testing.assert_allclose(phi, [1.0])

    def test_no_others(self):
        h = self.head()
        psi, phi = attention_mix(h, np.arange(4.0), np.zeros((0, 4)))
        np.testing.assert_array_equal(psi, np.zeros(3))
        assert phi.size == 0

    def test_scores_zero_ln3(self):
        # pick W_q, W_k so that scores are exactly (0, ln 3) after the 1/sqrt(k) scaling
        h = AttentionHead(2, 1, np.random.default_rng(0))
        h.W_q.data = np.array([[1.0], [0.0]])
        h.W_k.data = np.array([[math.log(3) * math.sqrt(1)], [0.0]])
        own = np.array([1.0, 0.0])
        others = np.array([[0.0, 1.0], [1.0, 0.0]])
        _, phi = attention_mix(h, own, others)
        np.testing.assert_allclose(phi, [0.25, 0.75], rtol=1e-12)

    def test_batched_matches_single(self):
        h = self.head(3)
        rng = np.random.default_rng(1)
        e = rng.normal(size=(1, 3, 4))
        mask = ~np.eye(3, dtype=bool)[None]
        with no_grad():
            psi, w = h.mix(e, e, mask)
        for b in range(3):
            others = np.delete(e[0], b, axis=0)
            p1, phi = attention_mix(h, e[0, b], others)
            np.testing.assert_allclose(psi.data[0, b], p1, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(np.delete(w[0, b], b), phi, rtol=1e-10)

    def test_shift_invariance(self):
        z = np.array([0.3, -1.0, 2.0])
        np.testing.assert_allclose(softmax_np(z), softmax_np(z + 17.0), rtol=1e-12)


class TestSoftmax:
    def test_sums_and_positive(self, rng):
        z = rng.normal(size=(10, 6)) * 5
        p = softmax_np(z)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert (p > 0).all()

    def test_mask(self):
        p = softmax_np(np.array([1.0, 2.0, 3.0]), np.array([True, False, True]))
        assert p[1] < 1e-300 or p[1] == 0.0
        assert p.sum() == pytest.approx(1.0)

    def test_log_softmax_gradient_identity(self, rng):
        # d/dz of sum(g * log_softmax(z)) = g - softmax(z) * sum(g)
        z = Tensor(rng.normal(size=5), requires_grad=True)
        g = rng.normal(size=5)
        (dz,) = gradient((T.log_softmax(z) * g).sum(), [z])
        np.testing.assert_allclose(dz, g - softmax_np(z.data) * g.sum(), rtol=1e-12, atol=1e-14)


class TestGradient:
    def test_quadratic(self, rng):
        w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        (g,) = gradient(T.square(w).sum() * 0.5, [w])
        np.testing.assert_allclose(g, w.data)

    def test_disconnected_zero(self, rng):
        w = Tensor(rng.normal(size=3), requires_grad=True)
        u = Tensor(rng.normal(size=2), requires_grad=True)
        gw, gu = gradient(T.square(w).sum(), [w, u])
        np.testing.assert_array_equal(gu, np.zeros(2))

    def test_needs_scalar(self):
        w = Tensor(np.ones(2), requires_grad=True)
        with pytest.raises(ValueError):
            gradient(w * 2.0, [w])

    @pytest.mark.parametrize(
        "op",
        [
            lambda a, b: a + b, lambda a, b: a - b, lambda a, b: a * b, lambda a, b: a / (T.square(b) + 1.0),
            lambda a, b: T.tanh(a) * b, lambda a, b: T.exp(a * 0.3), lambda a, b: T.log(T.square(a) + 1.0),
            lambda a, b: T.relu(a) + T.relu(-b), lambda a, b: T.clip(a, -0.5, 0.5) * b,
            lambda a, b: T.minimum(a, b), lambda a, b: T.concat([a, b], axis=-1),
            lambda a, b: T.swapaxes(a, 0, 1), lambda a, b: a[1:, ::2], lambda a, b: T.mean(a * b, axis=0),
            lambda a, b: T.reshape(a, (-1,)), lambda a, b: T.softmax(a, axis=-1) * b,
            lambda a, b: T.pick(T.log_softmax(a), np.array([0, 2, 1])),
            lambda a, b: T.matmul(a, T.swapaxes(b, 0, 1)),
        ],
    )
    def test_primitives_fd(self, op):
        rng = np.random.default_rng(5)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        w = rng.normal(size=op(a, b).shape)

        def loss():
            return (op(a, b) * w).sum()

        assert max_rel_error(loss, [a, b]) <= 1e-6

    def test_batched_matmul_broadcast(self):
        rng = np.random.default_rng(2)
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        assert max_rel_error(lambda: T.square(T.matmul(a, b)).sum(), [a, b]) <= 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_small_net(self, seed):
        rng = np.random.default_rng(seed)
        m = Mlp([4, 6, 3], rng, activation="tanh")
        x = rng.normal(size=(5, 4))
        y = rng.normal(size=(5, 3))
        assert max_rel_error(lambda: T.square(m(x) - y).mean(), m.params()) <= 1e-4

    def test_no_grad_records_nothing(self):
        w = Tensor(np.ones(2), requires_grad=True)
        with no_grad():
            out = w * 3.0
        assert not out.requires_grad and out.parents == ()


class TestAdam:
    def test_zero_grad(self):
        p = [Tensor(np.array([1.0, 2.0]), True)]
        st = AdamState.for_params(p)
        adam_step(p, [np.zeros(2)], st)
        np.testing.assert_array_equal(p[0].data, [1.0, 2.0])
        assert st.step == 1

    def test_first_step_magnitude(self):
        p = [Tensor(np.array([1.0, -1.0, 0.0]), True)]
        st = AdamState.for_params(p, lr=1e-3)
        adam_step(p, [np.array([0.5, -3.0, 1e-3])], st)
        np.testing.assert_allclose(p[0].data - [1.0, -1.0, 0.0], [-1e-3, 1e-3, -1e-3], rtol=1e-4)

    def test_ascent_sign(self):
        p = [Tensor(np.zeros(1), True)]
        st = AdamState.for_params(p, lr=0.1)
        adam_step(p, [np.ones(1)], st, ascent=True)
        assert p[0].data[0] > 0

    def test_deterministic(self):
        def run():
            p = [Tensor(np.array([0.3]), True)]
            st = AdamState.for_params(p)
            for g in (0.1, -0.2, 0.4):
                adam_step(p, [np.array([g])], st)
            return p[0].data.copy()

        np.testing.assert_array_equal(run(), run())

    def test_shape_mismatch(self):
        p = [Tensor(np.zeros(2), True)]
        with pytest.raises(ValueError):
            adam_step(p, [np.zeros(3)], AdamState.for_params(p))

    def test_clip(self):
        g = clip_grad_norm([np.array([3.0, 4.0])], 1.0)
        assert np.linalg.norm(g[0]) == pytest.approx(1.0)


class TestCheckpoint:
    def test_resume_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        m = Mlp([3, 4, 2], rng)
        st = AdamState.for_params(m.params(), lr=1e-2)
        x = rng.normal(size=(6, 3))

        def step():
            g = gradient(T.square(m(x)).sum(), m.params())
            adam_step(m.params(), g, st)

        step()
        save_checkpoint(tmp_path / "c.npz", {str(i): p.data for i, p in enumerate(m.params())}, {"opt": st}, rng, {"k": 1})
        step()
        after = [p.data.copy() for p in m.params()]
        draw = rng.random()

        d = load_checkpoint(tmp_path / "c.npz")
        for i, p in enumerate(m.params()):
            p.data = d["params"][str(i)]
        st = d["optimizers"]["opt"]
        step()
        for a, p in zip(after, m.params()):
            np.testing.assert_array_equal(a, p.data)
        assert d["rng"].random() == draw
        assert d["metadata"] == {"k": 1}

    def test_bytes_deterministic(self, tmp_path):
        arrs = {"w": np.arange(4.0)}
        save_checkpoint(tmp_path / "a.npz", arrs)
        save_checkpoint(tmp_path / "b.npz", arrs)
        assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
