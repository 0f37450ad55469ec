"""Reference fusion methods: majority vote and multi-class STAPLE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import one_hot
from .raters import ConfusionMatrix, RaterPanel, estimate_confusion


def majority_vote(panel: RaterPanel) -> np.ndarray:
    """Soft fusion as the mean of one-hot rater labels."""
    if len(panel) == 0:
        raise ValueError("empty rater panel")
    stack = np.stack([one_hot(z, panel.num_classes) for z in panel.labels])
    return stack.mean(axis=0)


@dataclass
class StapleResult:
    fused: np.ndarray
    confusions: list[ConfusionMatrix]
    log_likelihoods: list[float]
    iterations: int
    converged: bool


def staple_em(
    panel: RaterPanel,
    max_iters: int = 100,
    tol: float = 1e-6,
    reestimate_prior: bool = False,
) -> StapleResult:
    """Joint EM estimate of the latent segmentation and rater confusions.

    E-step: per-pixel posterior proportional to
    ``prior[k] * prod_m theta_m[z_m, k]``.  M-step: re-estimate each
    rater's confusion matrix against the posterior.  Initialization is
    deterministic: confusions are soft-counted against the majority-vote
    map and the class prior is the majority-vote label frequency (held
    fixed unless ``reestimate_prior``).  Stops when the largest confusion
    (and, if re-estimated, prior) entry changes by less than ``tol``.

    The observed-data log-likelihood is recorded each iteration; EM
    guarantees it never decreases.
    """
    if len(panel) == 0:
        raise ValueError("empty rater panel")
    mv = majority_vote(panel)
    prior = mv.mean(axis=(0, 1))
    thetas = [
        estimate_confusion(mv, z, rater_id=rid)
        for z, rid in zip(panel.labels, panel.rater_ids)
    ]

    log_likelihoods: list[float] = []
    posterior = mv
    converged = False
    iteration = 0
    for iteration in range(1, max_iters + 1):
        posterior, loglik = _e_step(panel, thetas, prior)
        log_likelihoods.append(loglik)

        new_thetas = [
            estimate_confusion(posterior, z, rater_id=rid)
            for z, rid in zip(panel.labels, panel.rater_ids)
        ]
        delta = max(
            float(np.abs(new.theta - old.theta).max())
            for new, old in zip(new_thetas, thetas)
        )
        thetas = new_thetas
        if reestimate_prior:
            new_prior = posterior.mean(axis=(0, 1))
            delta = max(delta, float(np.abs(new_prior - prior).max()))
            prior = new_prior
        if delta < tol:
            converged = True
            break

    # Final E-step so the fused map reflects the last parameter update.
    posterior, loglik = _e_step(panel, thetas, prior)
    log_likelihoods.append(loglik)
    return StapleResult(
        fused=posterior,
        confusions=thetas,
        log_likelihoods=log_likelihoods,
        iterations=iteration,
        converged=converged,
    )


def _e_step(
    panel: RaterPanel,
    thetas: list[ConfusionMatrix],
    prior: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Posterior per pixel and the observed-data log-likelihood.

    Computed with plain products (not logs) so the result matches the
    brute-force Bayes oracle to machine precision; likelihood factors are
    probabilities, so underflow is not a concern at panel sizes of
    interest.
    """
    h, w = panel.shape
    k = panel.num_classes
    unnorm = np.broadcast_to(prior, (h, w, k)).copy()
    for cm, z in zip(thetas, panel.labels):
        unnorm *= cm.theta[z]
    totals = unnorm.sum(axis=-1)
    loglik = float(np.log(np.clip(totals, np.finfo(np.float64).tiny, None)).sum())
    safe = np.where(totals > 0, totals, 1.0)[..., None]
    posterior = np.where(totals[..., None] > 0, unnorm / safe, 1.0 / k)
    return posterior, loglik
