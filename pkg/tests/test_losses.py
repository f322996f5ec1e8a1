"""Loss objectives: hand-evaluated values, symmetry, gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventsets import tensor as T
from eventsets.embed import aux_loss
from eventsets.gradcheck import grad_check
from eventsets.losses import LossConfig, bce_loss, combined_loss, dice_loss, huber_loss
from eventsets.tensor import ShapeError, Tensor

probs = st.lists(st.floats(0.01, 0.99), min_size=2, max_size=8)


class TestBce:
    def test_perfect_prediction_is_tiny(self):
        val = bce_loss(Tensor([1.0, 0.0]), Tensor([1.0, 0.0])).item()
        assert 0.0 < val < 1e-6

    def test_uniform_prediction_is_ln2(self):
        val = bce_loss(Tensor([0.5, 0.5, 0.5]), Tensor([1.0, 0.0, 1.0])).item()
        np.testing.assert_allclose(val, np.log(2.0), atol=1e-12)

    def test_hand_value(self):
        # -(ln 0.9 + ln 0.9)/2 = -ln 0.9
        val = bce_loss(Tensor([0.9, 0.1]), Tensor([1.0, 0.0])).item()
        np.testing.assert_allclose(val, -np.log(0.9), atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            bce_loss(Tensor([0.5]), Tensor([1.0, 0.0]))

    def test_linear_form_shares_optimum(self):
        y = Tensor([1.0, 0.0, 1.0])
        perfect = bce_loss(Tensor([1.0, 0.0, 1.0]), y, form="linear").item()
        bad = bce_loss(Tensor([0.2, 0.9, 0.3]), y, form="linear").item()
        assert perfect < 1e-6 < bad

    @given(p=probs)
    @settings(max_examples=30, deadline=None)
    def test_nonnegative(self, p):
        y = np.round(np.random.default_rng(0).random(len(p)))
        assert bce_loss(Tensor(p), Tensor(y)).item() >= 0.0

    def test_gradient(self):
        rng = np.random.default_rng(1)
        y = Tensor(np.array([1.0, 0.0, 1.0, 0.0]))
        fn = lambda x: bce_loss(T.sigmoid(x), y)
        for _ in range(5):
            assert grad_check(fn, rng.normal(size=4)) < 1e-4


class TestDice:
    def test_hand_value_identical_onehot(self):
        # terms: (2*1+0.1)/2.1 = 1 and 0.1/2.1; loss = 1 - mean = 0.476190...
        val = dice_loss(Tensor([1.0, 0.0]), Tensor([1.0, 0.0]), epsilon=0.1).item()
        np.testing.assert_allclose(val, 1.0 - (1.0 + 0.1 / 2.1) / 2.0, atol=1e-12)
        np.testing.assert_allclose(val, 0.4762, atol=1e-4)

    def test_empty_vs_empty_is_zero(self):
        assert dice_loss(Tensor([0.0, 0.0]), Tensor([0.0, 0.0]), 0.1).item() == pytest.approx(0.0)

    def test_hand_value_disjoint(self):
        val = dice_loss(Tensor([1.0, 1.0]), Tensor([0.0, 0.0]), 0.1).item()
        np.testing.assert_allclose(val, 1.0 - 0.1 / 2.1, atol=1e-12)
        np.testing.assert_allclose(val, 0.9524, atol=1e-4)

    @given(p=probs)
    @settings(max_examples=30, deadline=None)
    def test_symmetric_in_arguments(self, p):
        rng = np.random.default_rng(2)
        q = rng.random(len(p))
        a = dice_loss(Tensor(p), Tensor(q), 0.1).item()
        b = dice_loss(Tensor(q), Tensor(p), 0.1).item()
        np.testing.assert_allclose(a, b, atol=1e-12)

    @given(p=probs)
    @settings(max_examples=30, deadline=None)
    def test_nonnegative(self, p):
        y = np.round(np.random.default_rng(3).random(len(p)))
        assert dice_loss(Tensor(p), Tensor(y), 0.1).item() >= 0.0

    def test_gradient(self):
        rng = np.random.default_rng(4)
        y = Tensor(np.array([1.0, 0.0, 0.0, 1.0]))
        fn = lambda x: dice_loss(T.sigmoid(x), y, 0.1)
        for _ in range(5):
            assert grad_check(fn, rng.normal(size=4)) < 1e-4


class TestHuber:
    @pytest.mark.parametrize("delta_abs,expected", [(0.5, 0.125), (1.0, 0.5), (3.0, 2.5)])
    def test_branch_values(self, delta_abs, expected):
        val = huber_loss(Tensor([delta_abs]), Tensor([0.0]), delta=1.0).item()
        np.testing.assert_allclose(val, expected, atol=1e-12)

    def test_continuity_at_joint(self):
        delta = 1.0
        quad = 0.5 * delta**2
        lin = delta * (delta - delta / 2.0)
        assert abs(quad - lin) < 1e-12
        val = huber_loss(Tensor([delta]), Tensor([0.0]), delta=delta).item()
        np.testing.assert_allclose(val, quad, atol=1e-12)

    def test_gradient_both_branches_and_joint(self):
        for point in (0.3, -0.7, 1.0, 2.5, -4.0):
            fn = lambda x: huber_loss(x, Tensor([0.0]), delta=1.0)
            assert grad_check(fn, np.array([point])) < 1e-4

    def test_derivative_is_delta_at_joint(self):
        for side in (1.0 - 1e-9, 1.0 + 1e-9):
            t = Tensor([side], requires_grad=True)
            huber_loss(t, Tensor([0.0]), delta=1.0).backward()
            np.testing.assert_allclose(t.grad, [1.0], atol=1e-8)


class TestCombined:
    def test_paper_weights_on_unit_components(self):
        cfg = LossConfig()  # 0.85, 1.0, 0.2
        val = combined_loss(Tensor([1.0]), Tensor([1.0]), Tensor([1.0]), cfg).item()
        np.testing.assert_allclose(val, 2.05, atol=1e-12)

    def test_zero_components(self):
        cfg = LossConfig()
        assert combined_loss(Tensor([0.0]), Tensor([0.0]), Tensor([0.0]), cfg).item() == 0.0

    def test_linearity_in_weights(self):
        a = combined_loss(Tensor([0.3]), Tensor([0.7]), Tensor([0.1]), LossConfig()).item()
        scaled = LossConfig(lambda1=0.85 * 3, lambda2=3.0, lambda3=0.6)
        b = combined_loss(Tensor([0.3]), Tensor([0.7]), Tensor([0.1]), scaled).item()
        np.testing.assert_allclose(b, 3 * a, rtol=1e-12)

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            LossConfig(dice_epsilon=0.0)
        with pytest.raises(ValueError):
            LossConfig(huber_delta=-1.0)


class TestAuxLoss:
    def test_zero_scores(self):
        v0 = Tensor(np.zeros(4))
        val = aux_loss(v0, v0, v0).item()
        np.testing.assert_allclose(val, 2.0 * np.log(0.5), atol=1e-12)
        np.testing.assert_allclose(val, -1.3863, atol=1e-4)

    def test_unit_scores_hand_value(self):
        # va.vp = 1 and va.vn = -1 give 2 log sigma(1) = -0.626523...
        va = Tensor([1.0, 0.0])
        vp = Tensor([1.0, 0.0])
        vn = Tensor([-1.0, 0.0])
        val = aux_loss(va, vp, vn).item()
        np.testing.assert_allclose(val, 2.0 * np.log(1.0 / (1.0 + np.exp(-1.0))), atol=1e-12)
        np.testing.assert_allclose(val, -0.6265, atol=1e-4)

    def test_supremum_is_zero(self):
        big = 60.0
        val = aux_loss(Tensor([big]), Tensor([1.0]), Tensor([-1.0])).item()
        assert -1e-10 < val < 0.0  # approaches 0 from below

    def test_always_negative_on_finite_weights(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            va, vp, vn = (Tensor(rng.normal(size=6)) for _ in range(3))
            assert aux_loss(va, vp, vn).item() < 0.0

    def test_gradient_of_negated_objective(self):
        rng = np.random.default_rng(6)

        def fn(x):
            va, vp, vn = T.reshape(x, (3, 5))[0], T.reshape(x, (3, 5))[1], T.reshape(x, (3, 5))[2]
            return -aux_loss(va, vp, vn)

        for _ in range(5):
            assert grad_check(fn, rng.normal(size=15)) < 1e-4
