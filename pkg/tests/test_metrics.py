"""Evaluation measures against hand counts and the power-mean inequality."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventsets.metrics import dice_score, f_score, mae, mean_dice, rmse


class TestDiceScore:
    def test_identical(self):
        assert dice_score({1}, {1}) == 1.0

    def test_disjoint(self):
        assert dice_score({1}, {2}) == 0.0

    def test_hand_count(self):
        assert dice_score({1, 2}, {2, 3}) == pytest.approx(0.5)

    def test_both_empty_convention(self):
        assert dice_score(set(), set()) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = set(rng.choice(10, size=rng.integers(0, 5), replace=False).tolist())
            b = set(rng.choice(10, size=rng.integers(0, 5), replace=False).tolist())
            assert dice_score(a, b) == dice_score(b, a)

    def test_corpus_mean_order_invariant(self):
        preds = [{1}, {2, 3}, set()]
        trues = [{1, 2}, {3}, {4}]
        fwd = mean_dice(preds, trues)
        rev = mean_dice(preds[::-1], trues[::-1])
        assert fwd == rev


class TestFScore:
    def test_perfect(self):
        assert f_score([{1, 2}, {3}], [{1, 2}, {3}]) == 1.0

    def test_no_positives_predicted(self):
        assert f_score([set(), set()], [{1}, {2}]) == 0.0

    def test_hand_formula(self):
        # TP=1, FP=1, FN=1 -> 2TP/(2TP+FP+FN) = 0.5
        assert f_score({1, 2}, {1, 3}) == pytest.approx(0.5)

    def test_micro_pools_decisions(self):
        preds = [{1}, {1, 2, 3}]
        trues = [{1, 2}, {1}]
        # TP=2, FP=2, FN=1 -> 4/7
        assert f_score(preds, trues, average="micro") == pytest.approx(4 / 7)

    def test_macro_averages_examples(self):
        preds = [{1}, {2}]
        trues = [{1}, {3}]
        assert f_score(preds, trues, average="macro") == pytest.approx(0.5)


class TestErrorMetrics:
    def test_identical_lists_zero(self):
        assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_uniform_errors(self):
        assert mae([1.0, 3.0], [0.0, 2.0]) == 1.0
        assert rmse([1.0, 3.0], [0.0, 2.0]) == 1.0

    def test_mixed_errors_hand_values(self):
        assert mae([0.0, 2.0], [0.0, 0.0]) == 1.0
        assert rmse([0.0, 2.0], [0.0, 0.0]) == pytest.approx(np.sqrt(2.0))

    def test_empty_lists_error(self):
        with pytest.raises(ValueError):
            mae([], [])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse([1.0], [1.0, 2.0])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    @settings(max_examples=100, deadline=None)
    def test_rmse_dominates_mae(self, errors):
        zeros = [0.0] * len(errors)
        assert rmse(errors, zeros) >= mae(errors, zeros) - 1e-9
