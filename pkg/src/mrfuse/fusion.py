"""Fusion algebra for multi-rater soft masks.

All maps are numpy arrays: a soft map is (H, W, K) with per-pixel
probability vectors, a hard label map is (H, W) integer class indices, a
confidence map is (H, W, K) log-likelihoods, and a prior field is
(H, W, K) log-prior logits.  Every fusion happens in logit space followed
by a per-pixel softmax with max subtraction, so adding a constant to all
channels of the prior never changes an output.

Two fusion forms coexist deliberately.  ``fuse_literal`` sums each
rater's confidence only on the channel that rater observed, leaving the
other channels at logit zero; this matches the weighted-vote formula but
distorts posteriors (see the module tests for the counterintuitive
two-rater example).  ``fuse_loglik`` sums full per-class log-likelihood
vectors and is the exact Bayes posterior when combined with
``raters.posterior_confidence``.
"""

from __future__ import annotations

import numpy as np

# Shared probability clip floor: applied before every log so confidences
# stay in [log(PROB_FLOOR), 0].
PROB_FLOOR = 1e-6


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction along ``axis``)."""
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def clipped_log(p: np.ndarray) -> np.ndarray:
    """log of probabilities clipped to [PROB_FLOOR, 1]."""
    return np.log(np.clip(p, PROB_FLOOR, 1.0))


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Expand an (H, W) class-index map to an (H, W, K) one-hot soft map."""
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes:
        raise ValueError(f"label outside [0, {num_classes})")
    return np.eye(num_classes, dtype=np.float64)[labels]


def uniform_prior(height: int, width: int, num_classes: int, value: float = 0.0) -> np.ndarray:
    """Constant log-prior field (softmax shift invariance makes 0 canonical)."""
    return np.full((height, width, num_classes), value, dtype=np.float64)


def validate_soft_map(soft_map: np.ndarray, tol: float = 1e-6) -> None:
    """Raise ValueError unless ``soft_map`` satisfies the soft-map invariants."""
    arr = np.asarray(soft_map)
    if arr.ndim != 3:
        raise ValueError(f"soft map must be (H, W, K), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("soft map contains non-finite values")
    if arr.min() < -tol or arr.max() > 1.0 + tol:
        raise ValueError("soft map values outside [0, 1]")
    sums = arr.sum(axis=-1)
    if np.abs(sums - 1.0).max() > tol:
        raise ValueError("per-pixel probabilities do not sum to 1")


def _check_shapes(maps: list[np.ndarray], prior: np.ndarray, expect_hard: bool = False) -> tuple:
    shape = prior.shape
    for i, m in enumerate(maps):
        want = shape[:2] if expect_hard else shape
        if m.shape != want:
            raise ValueError(f"shape mismatch: rater {i} has {m.shape}, expected {want}")
    return shape


def fuse_literal(
    confidences: list[np.ndarray],
    labels: list[np.ndarray],
    prior: np.ndarray,
) -> np.ndarray:
    """Weighted-vote fusion: softmax over sum of observed-channel confidences.

    Per pixel, channel k receives ``sum_m confidences[m][k] * (labels[m] == k)``
    plus the prior logit.  Non-observed channels contribute nothing, which is
    the literal weighted-vote formula; for calibrated posteriors use
    :func:`fuse_loglik`.
    """
    if len(confidences) == 0:
        raise ValueError("fuse_literal requires at least one rater (M >= 1)")
    if len(confidences) != len(labels):
        raise ValueError(
            f"got {len(confidences)} confidence maps but {len(labels)} label maps"
        )
    _check_shapes(confidences, prior)
    _check_shapes(labels, prior, expect_hard=True)
    k = prior.shape[-1]
    logits = prior.astype(np.float64).copy()
    for conf, lab in zip(confidences, labels):
        logits += conf * one_hot(lab, k)
    return softmax(logits)


def fuse_loglik(confidences: list[np.ndarray], prior: np.ndarray) -> np.ndarray:
    """Bayes fusion: softmax over the sum of full log-likelihood vectors.

    With ``confidences[m][i, j, k] = log P(observation_m | class k)`` and a
    log prior, the output is the exact per-pixel posterior.  With M = 0 the
    result is simply ``softmax(prior)``.
    """
    _check_shapes(confidences, prior)
    logits = prior.astype(np.float64).copy()
    for conf in confidences:
        logits += conf
    return softmax(logits)


def label_fusion(
    predictions: list[np.ndarray],
    labels: list[np.ndarray],
    prior: np.ndarray,
) -> np.ndarray:
    """Fuse predicted rater probability maps with the observed labels.

    Per pixel, channel k receives ``sum_m log(predictions[m][k])`` restricted
    to the channel each rater actually annotated (one-hot mask), plus the
    prior logit.
    """
    return fuse_literal([clipped_log(p) for p in predictions], labels, prior)


def self_fusion(predictions: list[np.ndarray], prior: np.ndarray) -> np.ndarray:
    """Fuse predicted rater maps with their own thresholded versions as labels.

    Identical to :func:`label_fusion` with each observed label replaced by
    ``threshold(predictions[m], 0.5)``.
    """
    hard = [threshold(p, 0.5) for p in predictions]
    return label_fusion(predictions, hard, prior)


def threshold(soft_map: np.ndarray, theta: float = 0.5) -> np.ndarray:
    """Binarize a soft map to an (H, W) class-index map.

    A pixel gets class k when its channel k alone exceeds ``theta``.  When
    no channel exceeds theta, or several do (possible for theta < 0.5), the
    pixel falls back to the argmax; argmax ties resolve to the lowest class
    index.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    arr = np.asarray(soft_map, dtype=np.float64)
    above = arr > theta
    counts = above.sum(axis=-1)
    fallback = np.argmax(arr, axis=-1)
    unique = np.argmax(above, axis=-1)
    return np.where(counts == 1, unique, fallback).astype(np.int64)


def init_confidence(
    num_raters: int,
    height: int,
    width: int,
    num_classes: int,
    seed: int | tuple[int, ...],
    psi_range: tuple[float, float] = (0.1, 0.9),
    noise_sigma: float = 0.2,
) -> list[np.ndarray]:
    """Random initial confidence maps: log of clipped (base level + noise).

    Each rater gets one base level drawn uniformly from ``psi_range``
    (shared across the whole map) plus elementwise Gaussian perturbation,
    clipped to [0, 1] (then to the probability floor) before the log.
    Fully determined by ``seed``.
    """
    keys = (seed,) if isinstance(seed, int) else tuple(seed)
    return [
        _init_single_confidence(keys + (m,), height, width, num_classes, psi_range, noise_sigma)
        for m in range(num_raters)
    ]


def _init_single_confidence(
    key: tuple[int, ...],
    height: int,
    width: int,
    num_classes: int,
    psi_range: tuple[float, float],
    noise_sigma: float,
) -> np.ndarray:
    rng = np.random.default_rng(key)
    psi = rng.uniform(*psi_range)
    eps = noise_sigma * rng.standard_normal((height, width, num_classes))
    level = np.clip(psi + eps, 0.0, 1.0)
    return clipped_log(level)


def init_fused(
    confidences: list[np.ndarray],
    labels: list[np.ndarray],
    prior: np.ndarray,
) -> np.ndarray:
    """Initial fused mask from initial confidences: weighted-vote fusion."""
    return fuse_literal(confidences, labels, prior)
