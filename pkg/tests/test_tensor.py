import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtad import tensor as T
from gtad.errors import GraphError, NumericError, ShapeError
from gtad.optim import Adam, AdamState, adam_step
from gtad.tensor import Tensor, backward, no_grad

from helpers import check_grads, numeric_grad, rel_err


def rand(*shape, seed=0, scale=1.0):
    g = np.random.default_rng(seed)
    return g.normal(0, scale, shape)


class TestTensorBasics:
    def test_shape_data_agree(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.shape == (2, 2)
        assert t.size == 4

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericError):
            Tensor([1.0, np.nan])
        with pytest.raises(NumericError):
            Tensor([np.inf])

    def test_grad_shape_matches(self):
        w = Tensor(rand(3, 2), requires_grad=True)
        backward((w * w).sum())
        assert w.grad.shape == w.shape


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(Tensor(np.eye(2)), a)
        np.testing.assert_array_equal(out.data, a.data)

    def test_projector(self):
        p = Tensor([[1.0, 0.0], [0.0, 0.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_array_equal(T.matmul(p, b).data, [[5.0, 6.0], [0.0, 0.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.matmul(Tensor(rand(3, 4)), Tensor(rand(3, 2)))

    def test_gradient_vs_finite_differences(self):
        a = Tensor(rand(3, 4, seed=1), requires_grad=True)
        b = Tensor(rand(4, 2, seed=2), requires_grad=True)
        check_grads(lambda: T.matmul(a, b).sum(), {"a": a, "b": b}, tol=1e-6)

    def test_batched_gradient(self):
        a = Tensor(rand(2, 3, 4, seed=3), requires_grad=True)
        b = Tensor(rand(4, 5, seed=4), requires_grad=True)
        check_grads(lambda: (T.matmul(a, b) ** 2).sum(), {"a": a, "b": b})


class TestSoftmax:
    def test_uniform(self):
        out = T.softmax(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_no_overflow(self):
        out = T.softmax(Tensor([1000.0, 0.0]))
        np.testing.assert_allclose(out.data, [1.0, 0.0], atol=1e-12)

    def test_exact_ratios(self):
        out = T.softmax(Tensor(np.log([1.0, 2.0, 3.0])))
        np.testing.assert_allclose(out.data, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_simplex_property(self, xs):
        out = T.softmax(Tensor(xs)).data
        assert np.all(out >= 0)
        assert abs(out.sum() - 1.0) <= 1e-9

    def test_gradient(self):
        x = Tensor(rand(4, 5, seed=5), requires_grad=True)
        w = Tensor(rand(4, 5, seed=6))
        check_grads(lambda: (T.softmax(x, axis=-1) * w).sum(), {"x": x})

    def test_log_softmax_gradient(self):
        x = Tensor(rand(3, 4, seed=7), requires_grad=True)
        w = Tensor(rand(3, 4, seed=8))
        check_grads(lambda: (T.log_softmax(x, axis=-1) * w).sum(), {"x": x})


class TestConv1dDilated:
    def test_pairwise_sums(self):
        out = T.conv1d_dilated(Tensor([1.0, 2.0, 3.0, 4.0]), Tensor([1.0, 1.0]), dilation=1)
        np.testing.assert_array_equal(out.data, [3.0, 5.0, 7.0])

    def test_dilation_two_skips_one(self):
        out = T.conv1d_dilated(Tensor([1.0, 2.0, 3.0, 4.0]), Tensor([1.0, 1.0]), dilation=2)
        np.testing.assert_array_equal(out.data, [4.0, 6.0])

    def test_delta_kernel_is_identity_prefix(self):
        x = np.array([5.0, -1.0, 2.0, 9.0])
        for dil in (1, 2, 3):
            out = T.conv1d_dilated(Tensor(x), Tensor([1.0, 0.0]), dilation=dil)
            np.testing.assert_array_equal(out.data, x[: 4 - dil])

    def test_short_sequence_rejected(self):
        with pytest.raises(ShapeError):
            T.conv1d_dilated(Tensor([1.0, 2.0]), Tensor([1.0, 1.0]), dilation=2)

    def test_receptive_field_of_stack(self):
        # dilations (1, 2, 4), kernel 2: output 0 must see exactly inputs 0..7
        x = Tensor(np.zeros(8), requires_grad=True)
        w = Tensor([0.5, 0.5])

        def forward():
            h = x
            for dil in (1, 2, 4):
                h = T.conv1d_dilated(h, w, dilation=dil)
            return h.sum()

        assert forward().size == 1
        g = numeric_grad(forward, x)
        assert np.all(g != 0.0), "stack of dilations (1,2,4) must span all 8 inputs"
        x9 = Tensor(np.zeros(9), requires_grad=True)

        def forward9():
            h = x9
            for dil in (1, 2, 4):
                h = T.conv1d_dilated(h, w, dilation=dil)
            return h[0:1].sum()

        g9 = numeric_grad(forward9, x9)
        assert np.all(g9[:8] != 0.0) and g9[8] == 0.0

    def test_multichannel_gradient(self):
        x = Tensor(rand(2, 3, 10, seed=9), requires_grad=True)
        w = Tensor(rand(4, 3, 2, seed=10, scale=0.5), requires_grad=True)
        check_grads(
            lambda: (T.conv1d_dilated(x, w, dilation=2) ** 2).sum(), {"x": x, "w": w}
        )


class TestBackward:
    def test_sum_gives_ones(self):
        w = Tensor(rand(2, 3, seed=11), requires_grad=True)
        backward(w.sum())
        np.testing.assert_array_equal(w.grad, np.ones((2, 3)))

    def test_elementwise_square(self):
        w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward((w * w).sum())
        np.testing.assert_allclose(w.grad, [2.0, 4.0, 6.0])

    def test_non_scalar_loss_rejected(self):
        w = Tensor(rand(3), requires_grad=True)
        with pytest.raises(ShapeError):
            backward(w * w)

    def test_detached_loss_rejected(self):
        with pytest.raises(GraphError):
            backward(Tensor(1.0))
        with no_grad():
            w = Tensor(rand(3), requires_grad=True)
            loss = (w * w).sum()
        with pytest.raises(GraphError):
            backward(loss)

    def test_tape_cleared_after_backward(self):
        w = Tensor(rand(3), requires_grad=True)
        backward((w * w).sum())
        assert len(T.tape()) == 0

    def test_deterministic_bitwise(self):
        def run():
            w = Tensor(rand(4, 4, seed=12), requires_grad=True)
            x = Tensor(rand(4, 4, seed=13))
            y = T.softmax(T.matmul(w, x), axis=-1)
            backward((y * y).sum())
            return w.grad.tobytes()

        assert run() == run()

    def test_reused_tensor_accumulates(self):
        w = Tensor([2.0], requires_grad=True)
        backward((w * w * w).sum())
        np.testing.assert_allclose(w.grad, [12.0])

    def test_composite_ops_gradient(self):
        x = Tensor(rand(3, 4, seed=14), requires_grad=True)
        y = Tensor(rand(4, 3, seed=15), requires_grad=True)

        def loss():
            a = T.relu(T.matmul(x, y))
            b = T.exp(a.mean(axis=0)) + 0.5
            c = T.log(b)
            d = T.concat([c.reshape(1, 3), c.reshape(1, 3)], axis=0)
            return (d.transpose() ** 2).sum() / 7.0

        check_grads(loss, {"x": x, "y": y})

    def test_slice_and_layernorm_gradient(self):
        x = Tensor(rand(4, 6, seed=16), requires_grad=True)
        gain = Tensor(np.ones(6), requires_grad=True)
        bias = Tensor(np.zeros(6), requires_grad=True)

        def loss():
            h = T.layer_norm(x, gain, bias)
            return (h[1:3, 2:] ** 2).sum()

        check_grads(loss, {"x": x, "g": gain, "b": bias})

    def test_broadcast_gradient(self):
        a = Tensor(rand(3, 1, 5, seed=17), requires_grad=True)
        b = Tensor(rand(4, 1, seed=18), requires_grad=True)
        check_grads(lambda: ((a + b) * (a - b)).sum(), {"a": a, "b": b})

    def test_straight_through_passes_gradient(self):
        soft = Tensor(rand(3, seed=19), requires_grad=True)
        hard = np.array([1.0, 0.0, 1.0])
        out = T.straight_through(soft * 2.0, hard)
        np.testing.assert_array_equal(out.data, hard)
        backward((out * Tensor([3.0, 5.0, 7.0])).sum())
        np.testing.assert_allclose(soft.grad, [6.0, 10.0, 14.0])


class TestAdam:
    def test_zero_grad_leaves_params(self):
        p = Tensor(rand(3, seed=20), requires_grad=True)
        before = p.data.copy()
        adam_step([p], [np.zeros(3)], AdamState(), lr=0.1)
        np.testing.assert_array_equal(p.data, before)

    def test_first_step_is_lr_sized(self):
        # bias correction makes the first update exactly -lr * sign(g)
        p = Tensor([0.0], requires_grad=True)
        adam_step([p], [np.array([4.2])], AdamState(), lr=1e-3)
        np.testing.assert_allclose(p.data, [-1e-3], atol=1e-12)

    def test_quadratic_bowl_converges(self):
        p = Tensor([1.0], requires_grad=True)
        state = AdamState()
        for _ in range(500):
            g = 2.0 * (p.data - 3.0)
            adam_step([p], [g], state, lr=1e-2)
        assert abs(p.data[0] - 3.0) < 1e-2

    def test_shape_mismatch(self):
        p = Tensor(rand(3), requires_grad=True)
        with pytest.raises(ShapeError):
            adam_step([p], [np.zeros(4)], AdamState())

    def test_adam_class_groups(self):
        a = Tensor([0.0], requires_grad=True)
        b = Tensor([0.0], requires_grad=True)
        opt = Adam([([a], 1e-1), ([b], 1e-3)])
        a.grad, b.grad = np.array([1.0]), np.array([1.0])
        opt.step()
        assert abs(a.data[0]) > abs(b.data[0])
        opt.zero_grad()
        assert a.grad is None and b.grad is None
