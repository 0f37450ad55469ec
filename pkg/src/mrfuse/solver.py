"""Alternating fusion solver: prior-constrained refinement + rater re-estimation.

Each recurrence smooths the current fusion toward the raw image's edge
structure (proximal step with coupling weight beta), re-estimates every
rater's confusion matrix against the refined mask, rebuilds the
per-rater confidence maps, and fuses again.  The target of the next
proximal step combines the self-consistent fusion with the observed-label
fusion, weighted (beta + 1) : 1 per the second half-quadratic
sub-problem, so label evidence keeps flowing into the recurrence while
its influence anneals as beta grows geometrically.

Two confidence forms are supported.  The default ``prop1_posterior``
conditions each confidence on the label actually observed
(``raters.posterior_confidence``) and fuses full log-likelihood vectors
(``fusion.fuse_loglik``), which makes every fused map an exact posterior
under the current rater model.  ``alg1_logmap`` instead takes confidences
as the log of the full predicted probability map and fuses with the
literal masked-sum formulas (``label_fusion`` / ``self_fusion``); it is
retained for fidelity to the weighted-vote formulation but is not
calibrated (the masked sum leaves non-observed channels at logit zero),
so it is not the default.

For the same reason the initial fused mask uses the clipped perturbed
base levels themselves (probability scale, in (0, 1]) as vote weights in
the default form: taking their logs first would weight every observed
channel negatively and flip the initial consensus.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import fusion, losses, raters
from .prior import PriorConfig, prior_energy, prox_step
from .raters import ConfusionMatrix, RaterPanel

PROP1_POSTERIOR = "prop1_posterior"
ALG1_LOGMAP = "alg1_logmap"

_INIT_STREAM = 101
_SHUFFLE_STREAM = 202


@dataclass
class SolverConfig:
    tau: int = 3
    beta0: float = 2.0
    gamma: float = 6.0
    prior: PriorConfig = field(default_factory=PriorConfig)
    confidence_form: str = PROP1_POSTERIOR
    convergence_ssim: float = 0.999
    seed: int = 0
    num_shuffles: int = 3

    def __post_init__(self) -> None:
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if self.gamma < 1.0:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if self.beta0 <= 0:
            raise ValueError(f"beta0 must be positive, got {self.beta0}")
        if self.confidence_form not in (PROP1_POSTERIOR, ALG1_LOGMAP):
            raise ValueError(f"unknown confidence_form {self.confidence_form!r}")


@dataclass
class RecurrenceStep:
    """Everything recorded for one recurrence (index 0 is the raw fusion)."""

    index: int
    beta: float
    y_prime: np.ndarray
    y_self: np.ndarray
    y_fuse: np.ndarray
    confusions: list[ConfusionMatrix]
    mean_confidence: list[float]
    objective: float
    data_term: float
    prior_term: float
    ssim_to_prev: float | None = None
    rec_loss: float | None = None
    rec_loss_fuse: float | None = None
    shuffle: float | None = None


@dataclass
class RecurrenceTrace:
    rater_ids: list[str]
    config: SolverConfig
    steps: list[RecurrenceStep] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def final_fused(self) -> np.ndarray:
        return self.steps[-1].y_prime

    def maps_by_recurrence(self) -> list[np.ndarray]:
        return [s.y_prime for s in self.steps]


def objective(
    fused: np.ndarray,
    confidences: list[np.ndarray],
    panel: RaterPanel,
    image: np.ndarray,
    config: SolverConfig,
) -> float:
    """Fusion objective: ||fuse(confidences) - fused||^2 + eta * prior energy."""
    data, prior = objective_terms(fused, confidences, panel, image, config)
    return data + prior


def objective_terms(
    fused: np.ndarray,
    confidences: list[np.ndarray],
    panel: RaterPanel,
    image: np.ndarray,
    config: SolverConfig,
) -> tuple[float, float]:
    p_u = fusion.uniform_prior(*fused.shape)
    if config.confidence_form == PROP1_POSTERIOR:
        target = fusion.fuse_loglik(confidences, p_u)
    else:
        target = fusion.fuse_literal(confidences, panel.labels, p_u)
    data = float(((target - fused) ** 2).sum())
    return data, config.prior.eta * prior_energy(fused, image, config.prior)


def _rater_init_key(seed: int, rater_id: str) -> tuple[int, int, int]:
    # Keyed by rater identity, not panel position, so permuting the panel
    # permutes per-rater state without changing any fused map.
    return (seed, _INIT_STREAM, zlib.crc32(rater_id.encode()))


def initial_confidences(panel: RaterPanel, config: SolverConfig) -> list[np.ndarray]:
    """Seeded per-rater confidence maps (log of clipped base level + noise)."""
    h, w = panel.shape
    return [
        fusion.init_confidence(1, h, w, panel.num_classes, _rater_init_key(config.seed, rid))[0]
        for rid in panel.rater_ids
    ]


def run_recurrence(
    image: np.ndarray,
    panel: RaterPanel,
    config: SolverConfig | None = None,
) -> RecurrenceTrace:
    """Run the alternating solver on one case and record the full trace.

    The trace always contains the pre-refinement fusion as step 0 followed
    by one step per recurrence; the final answer is the last refined map.
    Stops early once the refined map's SSIM to the previous recurrence
    reaches ``config.convergence_ssim`` (never before the second
    recurrence).  Fully deterministic given the config seed.
    """
    config = config or SolverConfig()
    image = np.asarray(image, dtype=np.float64)
    if len(panel) == 0:
        raise ValueError("empty rater panel")
    if panel.shape != image.shape:
        raise ValueError(f"shape mismatch: panel {panel.shape} vs image {image.shape}")

    h, w = panel.shape
    k = panel.num_classes
    p_u = fusion.uniform_prior(h, w, k)

    w0 = initial_confidences(panel, config)
    if config.confidence_form == PROP1_POSTERIOR:
        vote_weights = [np.exp(c) for c in w0]
    else:
        vote_weights = w0
    y0 = fusion.init_fused(vote_weights, panel.labels, p_u)

    trace = RecurrenceTrace(rater_ids=list(panel.rater_ids), config=config)
    data0, prior0 = objective_terms(y0, w0, panel, image, config)
    trace.steps.append(
        RecurrenceStep(
            index=0,
            beta=0.0,
            y_prime=y0,
            y_self=y0,
            y_fuse=y0,
            confusions=[],
            mean_confidence=[float(np.mean(c)) for c in w0],
            objective=data0 + prior0,
            data_term=data0,
            prior_term=prior0,
        )
    )

    beta = config.beta0
    target = y0
    for i in range(1, config.tau + 1):
        y_prime = prox_step(target, image, beta, config.prior)
        confusions = [
            raters.estimate_confusion(y_prime, z, rater_id=rid)
            for z, rid in zip(panel.labels, panel.rater_ids)
        ]
        predictions = [raters.predict_rater_map(y_prime, cm) for cm in confusions]

        if config.confidence_form == PROP1_POSTERIOR:
            confidences = [
                raters.posterior_confidence(cm, z)
                for cm, z in zip(confusions, panel.labels)
            ]
            y_fuse = fusion.fuse_loglik(confidences, p_u)
            self_confidences = [
                raters.posterior_confidence(cm, fusion.threshold(pred, 0.5))
                for cm, pred in zip(confusions, predictions)
            ]
            y_self = fusion.fuse_loglik(self_confidences, p_u)
        else:
            confidences = [raters.confidence_from_prediction(p) for p in predictions]
            y_fuse = fusion.label_fusion(predictions, panel.labels, p_u)
            y_self = fusion.self_fusion(predictions, p_u)

        prev = trace.steps[-1]
        data, prior_term = objective_terms(y_prime, confidences, panel, image, config)
        step = RecurrenceStep(
            index=i,
            beta=beta,
            y_prime=y_prime,
            y_self=y_self,
            y_fuse=y_fuse,
            confusions=confusions,
            mean_confidence=[float(np.mean(c)) for c in confidences],
            objective=data + prior_term,
            data_term=data,
            prior_term=prior_term,
            ssim_to_prev=losses.ssim(y_prime, prev.y_prime),
            rec_loss=losses.recurrence_loss(y_prime, prev.y_self, y_self),
            rec_loss_fuse=losses.recurrence_loss(y_prime, prev.y_fuse, y_fuse),
            shuffle=losses.shuffle_loss(
                predictions,
                panel.labels,
                p_u,
                num_shuffles=config.num_shuffles,
                seed=(config.seed, _SHUFFLE_STREAM, i),
            ),
        )
        trace.steps.append(step)

        if i >= 2 and step.ssim_to_prev >= config.convergence_ssim:
            trace.stopped_early = True
            break
        target = ((beta + 1.0) * y_self + y_fuse) / (beta + 2.0)
        beta *= config.gamma

    return trace


def recurrence_diagnostics(trace: RecurrenceTrace) -> list[dict]:
    """CSV-ready per-recurrence rows of the trace's scalar diagnostics."""
    rows = []
    for step in trace.steps:
        row = {
            "recurrence": step.index,
            "beta": step.beta,
            "objective": step.objective,
            "data_term": step.data_term,
            "prior_term": step.prior_term,
            "ssim_to_prev": step.ssim_to_prev,
            "rec_loss": step.rec_loss,
            "rec_loss_fuse": step.rec_loss_fuse,
            "shuffle_loss": step.shuffle,
        }
        for rid, conf in zip(trace.rater_ids, step.mean_confidence):
            row[f"mean_conf_{rid}"] = conf
        rows.append(row)
    return rows
