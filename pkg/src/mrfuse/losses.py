"""Supervision functionals as pure evaluators.

SSIM, cross-entropy, the per-iteration recurrence loss, the per-rater
multi-head loss, the shuffled-fusion loss, and their weighted total.
None of these carry gradients; they serve as solver diagnostics and as a
library surface for plugging in learned components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .fusion import clipped_log, label_fusion, one_hot, threshold


@dataclass
class SsimConfig:
    """Gaussian-window SSIM parameters (dynamic range fixed at 1)."""

    window: int = 11
    gaussian_sigma: float = 1.5
    c1: float = 0.01**2
    c2: float = 0.03**2

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    half = window // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _filter2d(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = convolve1d(arr, kernel, axis=0, mode="reflect")
    return convolve1d(out, kernel, axis=1, mode="reflect")


def _ssim_channel(a: np.ndarray, b: np.ndarray, config: SsimConfig) -> float:
    kernel = _gaussian_kernel(config.window, config.gaussian_sigma)
    mu_a = _filter2d(a, kernel)
    mu_b = _filter2d(b, kernel)
    var_a = _filter2d(a * a, kernel) - mu_a * mu_a
    var_b = _filter2d(b * b, kernel) - mu_b * mu_b
    cov = _filter2d(a * b, kernel) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + config.c1) * (2.0 * cov + config.c2)
    den = (mu_a * mu_a + mu_b * mu_b + config.c1) * (var_a + var_b + config.c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray, config: SsimConfig | None = None) -> float:
    """Mean local structural similarity in [-1, 1].

    Accepts (H, W) channels or (H, W, K) maps; multi-channel inputs reduce
    by the unweighted channel mean.
    """
    config = config or SsimConfig()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        return _ssim_channel(a, b, config)
    if a.ndim == 3:
        return float(
            np.mean([_ssim_channel(a[..., k], b[..., k], config) for k in range(a.shape[-1])])
        )
    raise ValueError(f"expected (H, W) or (H, W, K), got shape {a.shape}")


def ssim_loss(a: np.ndarray, b: np.ndarray, config: SsimConfig | None = None) -> float:
    """1 - ssim(a, b)."""
    return 1.0 - ssim(a, b, config)


def cross_entropy(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over pixels of -sum_k target[k] * log(clip(pred[k]))."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    per_pixel = -(target * clipped_log(pred)).sum(axis=-1)
    return float(per_pixel.mean())


def recurrence_loss(
    y_refined: np.ndarray,
    y_self_prev: np.ndarray,
    y_self: np.ndarray,
    config: SsimConfig | None = None,
) -> float:
    """Structural coupling of one recurrence step.

    ssim_loss between the refined mask and the previous self-fusion, plus
    ssim_loss between the current self-fusion and the refined mask.
    """
    return ssim_loss(y_refined, y_self_prev, config) + ssim_loss(y_self, y_refined, config)


def mh_loss(predictions: list[np.ndarray], labels: list[np.ndarray]) -> float:
    """Per-rater cross-entropy against one-hot observed labels, summed.

    Kept for ablation parity; the shuffle loss replaces it by default
    because constraining each head individually over-restricts the
    decomposition.
    """
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels must pair up")
    total = 0.0
    for pred, lab in zip(predictions, labels):
        total += cross_entropy(pred, one_hot(lab, pred.shape[-1]))
    return total


def shuffle_loss(
    predictions: list[np.ndarray],
    labels: list[np.ndarray],
    prior: np.ndarray,
    num_shuffles: int = 3,
    seed: int | tuple[int, ...] = 0,
    permutations: list[list[int]] | None = None,
) -> float:
    """Cross-entropy between shuffled self-fusion and shuffled label-fusion.

    For each shuffle a permutation pi of the rater axis is drawn uniformly
    (with replacement; the identity is allowed) and applied to the
    predicted maps only.  The label fusion pairs the permuted predictions
    with the original observed labels; the self fusion pairs them with the
    thresholded *unpermuted* predictions.  Returns the mean cross-entropy
    over shuffles.  Passing ``permutations`` overrides the sampling (used
    to average the full permutation group exactly).
    """
    m = len(predictions)
    if len(labels) != m:
        raise ValueError("predictions and labels must pair up")
    if permutations is None:
        if num_shuffles < 1:
            raise ValueError(f"num_shuffles must be >= 1, got {num_shuffles}")
        rng = np.random.default_rng(seed)
        permutations = [list(rng.permutation(m)) for _ in range(num_shuffles)]
    self_targets = [threshold(p, 0.5) for p in predictions]
    total = 0.0
    for perm in permutations:
        shuffled = [predictions[i] for i in perm]
        fuse_shuffled = label_fusion(shuffled, labels, prior)
        self_shuffled = label_fusion(shuffled, self_targets, prior)
        total += cross_entropy(self_shuffled, fuse_shuffled)
    return total / len(permutations)


def total_loss(
    recurrence_losses: list[float],
    shuffle_losses: list[float],
    zeta: float = 0.3,
) -> float:
    """Weighted sum over iterations: sum_i rec_i + zeta * sff_i."""
    if len(recurrence_losses) != len(shuffle_losses):
        raise ValueError("per-iteration loss lists must have equal length")
    return float(sum(recurrence_losses) + zeta * sum(shuffle_losses))
