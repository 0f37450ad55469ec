"""Per-rater behavior models: confusion estimation and confidence maps.

A rater's behavior over one case is summarized by a global K-by-K
confusion matrix ``theta[t, k] = P(rater reports t | true class k)``
(columns are distributions over reported labels).  From the current fused
mask this module estimates each rater's confusion, predicts the rater's
probability map, and converts either into per-pixel confidence maps.  A
brute-force single-pixel Bayes oracle is included as the independent
reference for the fusion identity ``fuse_loglik(posterior_confidence(...))
== exact posterior``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fusion import clipped_log


@dataclass
class ConfusionMatrix:
    """Column-stochastic rater model: theta[t, k] = P(report t | true k)."""

    rater_id: str
    theta: np.ndarray

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 2 or self.theta.shape[0] != self.theta.shape[1]:
            raise ValueError(f"theta must be square, got shape {self.theta.shape}")

    @property
    def num_classes(self) -> int:
        return self.theta.shape[0]


@dataclass
class RaterPanel:
    """The M observed annotations for one case, with rater identifiers."""

    labels: list[np.ndarray]
    num_classes: int
    rater_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.rater_ids:
            self.rater_ids = [f"r{m}" for m in range(len(self.labels))]
        if len(self.rater_ids) != len(self.labels):
            raise ValueError("rater_ids and labels must have equal length")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels[0].shape

    def permuted(self, order: list[int]) -> "RaterPanel":
        """Panel with raters reordered (labels and ids move together)."""
        return RaterPanel(
            labels=[self.labels[i] for i in order],
            num_classes=self.num_classes,
            rater_ids=[self.rater_ids[i] for i in order],
        )


def estimate_confusion(
    fused: np.ndarray, labels: np.ndarray, rater_id: str = ""
) -> ConfusionMatrix:
    """Soft-count a rater's confusion matrix against the fused mask.

    theta[t, k] = sum_pixels fused[..., k] * (labels == t) / sum_pixels
    fused[..., k]; columns with zero mass default to uniform 1/K.
    """
    fused = np.asarray(fused, dtype=np.float64)
    labels = np.asarray(labels)
    if fused.shape[:2] != labels.shape:
        raise ValueError(
            f"shape mismatch: fused {fused.shape[:2]} vs labels {labels.shape}"
        )
    k = fused.shape[-1]
    counts = np.zeros((k, k), dtype=np.float64)
    for t in range(k):
        mask = labels == t
        if mask.any():
            counts[t] = fused[mask].sum(axis=0)
    col_mass = counts.sum(axis=0)
    theta = np.full((k, k), 1.0 / k, dtype=np.float64)
    nonzero = col_mass > 0
    theta[:, nonzero] = counts[:, nonzero] / col_mass[nonzero]
    return ConfusionMatrix(rater_id=rater_id, theta=theta)


def predict_rater_map(fused: np.ndarray, confusion: ConfusionMatrix) -> np.ndarray:
    """Predict a rater's probability map: z[t] = sum_k theta[t, k] * y[k]."""
    fused = np.asarray(fused, dtype=np.float64)
    if fused.shape[-1] != confusion.num_classes:
        raise ValueError(
            f"class mismatch: fused has K={fused.shape[-1]}, "
            f"theta has K={confusion.num_classes}"
        )
    return np.einsum("tk,hwk->hwt", confusion.theta, fused)


def confidence_from_prediction(prediction: np.ndarray) -> np.ndarray:
    """Confidence map as the elementwise log of a clipped probability map."""
    return clipped_log(np.asarray(prediction, dtype=np.float64))


def posterior_confidence(confusion: ConfusionMatrix, labels: np.ndarray) -> np.ndarray:
    """Per-pixel log-likelihood of the observed label under each true class.

    For a pixel with observed label t, channel k holds
    ``log(theta[t, k])`` (clipped at the probability floor), so summing
    these maps over raters and softmaxing yields the exact posterior.
    """
    labels = np.asarray(labels)
    if labels.max(initial=0) >= confusion.num_classes:
        raise ValueError("observed label outside [0, K)")
    log_theta = clipped_log(confusion.theta)
    return log_theta[labels]


def bayes_oracle(
    confusions: list[ConfusionMatrix],
    prior: np.ndarray,
    observed: list[int],
) -> np.ndarray:
    """Exact single-pixel posterior by brute-force enumeration.

    P(class k | observations) = prior[k] * prod_m theta_m[obs_m, k],
    normalized over k.  No logs, no softmax.  M = 0 returns the prior;
    a zero total falls back to uniform.
    """
    prior = np.asarray(prior, dtype=np.float64)
    k = prior.shape[0]
    post = prior.copy()
    for cm, obs in zip(confusions, observed):
        post = post * cm.theta[obs, :]
    total = post.sum()
    if total == 0.0:
        return np.full(k, 1.0 / k)
    return post / total


def random_confusion(rng: np.random.Generator, num_classes: int) -> ConfusionMatrix:
    """Random column-stochastic confusion with entries bounded away from 0.

    The lower bound keeps every entry above the probability clip floor so
    the log/exp fusion path is an exact reconstruction of the products.
    """
    raw = rng.uniform(0.05, 1.0, size=(num_classes, num_classes))
    return ConfusionMatrix(rater_id="", theta=raw / raw.sum(axis=0))


def prop1_equivalence_error(trials: int, seed: int = 0) -> float:
    """Max |fuse_loglik(posterior_confidence(...)) - bayes_oracle| over trials.

    Each trial draws K in {2, 3}, M in {2, 3, 4}, random column-stochastic
    confusions, a random prior, and random observed labels, then compares
    the log-space fusion pipeline against the brute-force product oracle
    on a single pixel.
    """
    from .fusion import fuse_loglik

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(2, 4))
        m = int(rng.integers(2, 5))
        confusions = [random_confusion(rng, k) for _ in range(m)]
        prior = rng.uniform(0.1, 1.0, size=k)
        prior = prior / prior.sum()
        observed = [int(rng.integers(0, k)) for _ in range(m)]

        confidence_maps = [
            posterior_confidence(cm, np.array([[obs]]))
            for cm, obs in zip(confusions, observed)
        ]
        log_prior = np.log(prior)[None, None, :]
        fused = fuse_loglik(confidence_maps, log_prior)[0, 0]
        reference = bayes_oracle(confusions, prior, observed)
        worst = max(worst, float(np.abs(fused - reference).max()))
    return worst
