"""Soft-dice evaluation across multiple binarization thresholds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import one_hot
from .raters import RaterPanel

DEFAULT_THRESHOLDS = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass
class DiceResult:
    """Per-class threshold-averaged dice plus the foreground mean."""

    per_class: np.ndarray
    foreground_mean: float


def soft_dice(
    pred: np.ndarray,
    gt: np.ndarray,
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
) -> DiceResult:
    """Dice between two soft maps, averaged over binarization thresholds.

    For each threshold and class, both channels are binarized with a
    strict ``> threshold`` and the plain dice ``2|A&B| / (|A|+|B|)`` is
    computed, with the empty-vs-empty case defined as 1.0.  Scores are
    averaged over thresholds; the foreground mean excludes channel 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    k = pred.shape[-1]
    per_class = np.zeros(k, dtype=np.float64)
    for c in range(k):
        scores = [
            _binary_dice(pred[..., c] > th, gt[..., c] > th) for th in thresholds
        ]
        per_class[c] = float(np.mean(scores))
    fg = per_class[1:] if k > 1 else per_class
    return DiceResult(per_class=per_class, foreground_mean=float(fg.mean()))


def _binary_dice(a: np.ndarray, b: np.ndarray) -> float:
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / denom


def per_rater_dice(
    fused: np.ndarray,
    panel: RaterPanel,
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
) -> list[DiceResult]:
    """Soft dice of the fused map against each rater's one-hot labels."""
    return [
        soft_dice(fused, one_hot(labels, panel.num_classes), thresholds)
        for labels in panel.labels
    ]
