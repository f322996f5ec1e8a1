"""Evaluation measures: Dice similarity, F-score, MAE, RMSE.

Set metrics compare discrete predicted/true target sets; the corpus-level
Dice score is the per-example mean, while the F-score micro-averages the
per-dimension decisions across all examples (a macro variant averages
per-example F1 instead).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

__all__ = ["EvalReport", "dice_score", "mean_dice", "f_score", "mae", "rmse"]


def dice_score(pred: set | frozenset, true: set | frozenset) -> float:
    """2|A n B| / (|A| + |B|); two empty sets count as perfect agreement."""
    pred, true = set(pred), set(true)
    if not pred and not true:
        return 1.0
    return 2.0 * len(pred & true) / (len(pred) + len(true))


def mean_dice(pred_sets, true_sets) -> float:
    pairs = list(zip(pred_sets, true_sets, strict=True))
    if not pairs:
        raise ValueError("mean_dice needs at least one example")
    return float(np.mean([dice_score(p, t) for p, t in pairs]))


def f_score(pred_sets, true_sets, average: str = "micro") -> float:
    """F1 over set membership decisions.

    Accepts a single (pred, true) pair of sets or parallel lists of sets.
    micro: one 2TP/(2TP+FP+FN) over all decisions; macro: mean per-example F1.
    """
    if isinstance(pred_sets, (set, frozenset)):
        pred_sets, true_sets = [pred_sets], [true_sets]
    pairs = list(zip(pred_sets, true_sets, strict=True))
    if average == "micro":
        tp = fp = fn = 0
        for p, t in pairs:
            p, t = set(p), set(t)
            tp += len(p & t)
            fp += len(p - t)
            fn += len(t - p)
        denom = 2 * tp + fp + fn
        return 1.0 if denom == 0 else 2.0 * tp / denom
    if average == "macro":
        vals = []
        for p, t in pairs:
            p, t = set(p), set(t)
            denom = 2 * len(p & t) + len(p - t) + len(t - p)
            vals.append(1.0 if denom == 0 else 2.0 * len(p & t) / denom)
        return float(np.mean(vals))
    raise ValueError(f"unknown averaging mode {average!r}")


def _check_lists(pred, true):
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ValueError("error metrics need at least one example")
    return pred, true


def mae(pred_times, true_times) -> float:
    pred, true = _check_lists(pred_times, true_times)
    return float(np.mean(np.abs(pred - true)))


def rmse(pred_times, true_times) -> float:
    pred, true = _check_lists(pred_times, true_times)
    return float(np.sqrt(np.mean((pred - true) ** 2)))


@dataclass
class EvalReport:
    dsc: float
    f_score: float
    mae: float
    rmse: float
    mae_raw: float
    rmse_raw: float
    n_examples: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)
