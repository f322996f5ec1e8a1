"""Tensor engine: forward hand-values, backward vs finite differences."""

import numpy as np
import pytest

from eventsets import tensor as T
from eventsets.gradcheck import grad_check
from eventsets.tensor import ConfigurationError, ShapeError, Tensor


class TestDenseForward:
    def test_identity_weights(self):
        y = T.dense_forward(Tensor([[1.0, 2.0]]), Tensor(np.eye(2)), Tensor([0.0, 0.0]))
        np.testing.assert_allclose(y.data, [[1.0, 2.0]])

    def test_zero_input_passes_bias(self):
        w = Tensor(np.random.default_rng(0).normal(size=(2, 2)))
        y = T.dense_forward(Tensor([[0.0, 0.0]]), w, Tensor([3.0, 4.0]))
        np.testing.assert_allclose(y.data, [[3.0, 4.0]])

    def test_hand_sum(self):
        y = T.dense_forward(Tensor([[1.0, 1.0]]), Tensor([[1.0, 0.0], [0.0, 1.0]]),
                            Tensor([1.0, 1.0]))
        np.testing.assert_allclose(y.data, [[2.0, 2.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(1, 3\).*\(2, 2\)"):
            T.dense_forward(Tensor(np.ones((1, 3))), Tensor(np.ones((2, 2))), Tensor(np.ones(2)))

    def test_backward_accumulates_into_all_three(self):
        x = Tensor([[1.0, 2.0]], requires_grad=True)
        w = Tensor([[1.0, 0.5], [0.0, 1.0]], requires_grad=True)
        b = Tensor([0.1, 0.2], requires_grad=True)
        T.tsum(T.dense_forward(x, w, b)).backward()
        np.testing.assert_allclose(x.grad, [[1.5, 1.0]])
        np.testing.assert_allclose(w.grad, [[1.0, 1.0], [2.0, 2.0]])
        np.testing.assert_allclose(b.grad, [1.0, 1.0])


class TestSoftmax:
    def test_symmetry_two(self):
        np.testing.assert_allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_symmetry_three(self):
        np.testing.assert_allclose(T.softmax(Tensor([1.0, 1.0, 1.0])).data, np.ones(3) / 3)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=7)
        a = T.softmax(Tensor(x)).data
        b = T.softmax(Tensor(x + 123.456)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_sums_to_one_and_open_interval(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            s = T.softmax(Tensor(rng.normal(scale=5.0, size=(3, 6)))).data
            np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
            assert np.all(s > 0.0) and np.all(s < 1.0)


class TestGradCheckCoreOps:
    """Every op's backward against central differences at random points."""

    @pytest.mark.parametrize("fn", [
        lambda x: T.tsum(x * x),
        lambda x: T.tsum(x * Tensor([2.0, -1.0, 0.5, 3.0])),
        lambda x: T.tsum(T.exp(x)),
        lambda x: T.tsum(T.log(x * x + 1.0)),
        lambda x: T.tsum(T.tanh(x)),
        lambda x: T.tsum(T.relu(x) * 1.7),
        lambda x: T.tsum(T.sigmoid(x) ** 2),
        lambda x: T.tsum(T.softplus(x)),
        lambda x: T.tsum(T.log_sigmoid(x)),
        lambda x: T.tsum(T.softmax(x) * Tensor([1.0, 2.0, 3.0, 4.0])),
        lambda x: T.tmean(x ** 3),
        lambda x: T.tsum(x / (x * x + 2.0)),
    ])
    def test_elementwise(self, fn):
        rng = np.random.default_rng(11)
        for _ in range(5):
            assert grad_check(fn, rng.normal(size=4)) < 1e-4

    def test_matmul(self):
        rng = np.random.default_rng(12)
        b = Tensor(rng.normal(size=(3, 2)))

        def fn(x):
            return T.tsum(T.matmul(x, b) ** 2)

        assert grad_check(fn, rng.normal(size=(2, 3))) < 1e-4

    def test_batched_matmul(self):
        rng = np.random.default_rng(13)
        b = Tensor(rng.normal(size=(2, 4, 3)))

        def fn(x):
            return T.tsum(T.matmul(T.reshape(x, (2, 3, 4)), b))

        assert grad_check(fn, rng.normal(size=(6, 4))) < 1e-4

    def test_gather_with_repeats(self):
        idx = np.array([0, 2, 2, 1])

        def fn(x):
            return T.tsum(x[idx] * Tensor([[1.0], [2.0], [3.0], [4.0]]))

        assert grad_check(fn, np.random.default_rng(14).normal(size=(3, 1))) < 1e-4

    def test_concat_stack_transpose(self):
        rng = np.random.default_rng(15)

        def fn(x):
            a = T.reshape(x, (2, 3))
            joined = T.concat([a, T.transpose(a, (1, 0)).reshape(2, 3)], axis=0)
            piled = T.stack([joined, joined * 2.0], axis=0)
            return T.tsum(T.sigmoid(piled))

        assert grad_check(fn, rng.normal(size=6)) < 1e-4

    def test_layer_norm(self):
        rng = np.random.default_rng(16)
        gain = Tensor(rng.normal(size=5) + 1.0)
        bias = Tensor(rng.normal(size=5))

        def fn(x):
            return T.tsum(T.layer_norm(T.reshape(x, (2, 5)), gain, bias) ** 2)

        assert grad_check(fn, rng.normal(size=10)) < 1e-4

    def test_broadcast_add_mul(self):
        rng = np.random.default_rng(17)
        row = Tensor(rng.normal(size=(1, 4)))

        def fn(x):
            return T.tsum((T.reshape(x, (3, 4)) + row) * row)

        assert grad_check(fn, rng.normal(size=12)) < 1e-4

    def test_hundred_random_points_mixed_pipeline(self):
        """Spec-level bar: sub-1e-4 relative error at 100 random points."""
        rng = np.random.default_rng(99)
        w = Tensor(rng.normal(size=(5, 3)))

        def fn(x):
            h = T.sigmoid(T.matmul(T.reshape(x, (2, 5)), w))
            return T.tsum(T.softmax(h) * T.softplus(h))

        worst = max(grad_check(fn, rng.normal(size=10)) for _ in range(100))
        assert worst < 1e-4


class TestAttention:
    def test_single_token_returns_value(self):
        rng = np.random.default_rng(21)
        v = rng.normal(size=(1, 8))
        out = T.multi_head_attention(Tensor(rng.normal(size=(1, 8))),
                                     Tensor(rng.normal(size=(1, 8))), Tensor(v), heads=2)
        np.testing.assert_allclose(out.data, v, atol=1e-12)

    def test_uniform_scores_average_values(self):
        rng = np.random.default_rng(22)
        q = Tensor(np.ones((5, 4)))
        k = Tensor(np.ones((5, 4)))
        v = rng.normal(size=(5, 4))
        out = T.multi_head_attention(q, k, Tensor(v), heads=2)
        np.testing.assert_allclose(out.data, np.tile(v.mean(axis=0), (5, 1)), atol=1e-12)

    def test_uniform_scores_weights_are_one_over_seq(self):
        out, weights = T.multi_head_attention(
            Tensor(np.ones((4, 4))), Tensor(np.ones((4, 4))),
            Tensor(np.random.default_rng(23).normal(size=(4, 4))),
            heads=2, return_weights=True)
        np.testing.assert_allclose(weights.data, 0.25, atol=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(24)
        q, k, v = (rng.normal(size=(6, 8)) for _ in range(3))
        out = T.multi_head_attention(Tensor(q), Tensor(k), Tensor(v), heads=4).data
        perm = rng.permutation(6)
        out_p = T.multi_head_attention(Tensor(q[perm]), Tensor(k[perm]), Tensor(v[perm]),
                                       heads=4).data
        np.testing.assert_allclose(out_p, out[perm], atol=1e-10)

    def test_head_mismatch_is_config_error(self):
        x = Tensor(np.ones((2, 6)))
        with pytest.raises(ConfigurationError):
            T.multi_head_attention(x, x, x, heads=4)

    def test_gradients(self):
        rng = np.random.default_rng(25)
        k = Tensor(rng.normal(size=(3, 4)))
        v = Tensor(rng.normal(size=(3, 4)))

        def fn(x):
            return T.tsum(T.multi_head_attention(T.reshape(x, (3, 4)), k, v, heads=2) ** 2)

        assert grad_check(fn, rng.normal(size=12)) < 1e-4


class TestEngineBasics:
    def test_forward_determinism(self):
        rng = np.random.default_rng(31)
        x = rng.normal(size=(4, 4))
        f = lambda: T.tsum(T.softmax(T.sigmoid(Tensor(x) @ Tensor(x)))).item()
        assert f() == f()

    def test_backward_requires_scalar(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeError):
            (t * 2.0).backward()

    def test_no_grad_blocks_graph(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with T.no_grad():
            out = T.tsum(t * 2.0)
        assert out._backward is None and not out.requires_grad

    def test_grad_accumulates_across_uses(self):
        t = Tensor([2.0], requires_grad=True)
        (t * 3.0 + t * t).backward()  # d/dt (3t + t^2) = 3 + 2t = 7
        np.testing.assert_allclose(t.grad, [7.0])

    def test_deep_graph_does_not_recurse(self):
        t = Tensor([1.0], requires_grad=True)
        x = t
        for _ in range(5000):
            x = x + 1.0
        x.backward()
        np.testing.assert_allclose(t.grad, [1.0])

    def test_values_stay_finite(self):
        rng = np.random.default_rng(32)
        x = Tensor(rng.normal(scale=50.0, size=(8, 8)))
        out = T.softmax(T.log_sigmoid(x) + T.softplus(x))
        assert np.all(np.isfinite(out.data))
