"""mrfuse: multi-rater segmentation fusion with a prior-constrained solver."""

from .baselines import StapleResult, majority_vote, staple_em
from .fusion import (
    PROB_FLOOR,
    fuse_literal,
    fuse_loglik,
    init_confidence,
    init_fused,
    label_fusion,
    one_hot,
    self_fusion,
    softmax,
    threshold,
    uniform_prior,
)
from .losses import (
    SsimConfig,
    cross_entropy,
    mh_loss,
    recurrence_loss,
    shuffle_loss,
    ssim,
    ssim_loss,
    total_loss,
)
from .metrics import DiceResult, per_rater_dice, soft_dice
from .prior import PriorConfig, edge_weights, prior_energy, prox_step
from .raters import (
    ConfusionMatrix,
    RaterPanel,
    bayes_oracle,
    confidence_from_prediction,
    estimate_confusion,
    posterior_confidence,
    predict_rater_map,
)
from .solver import (
    RecurrenceStep,
    RecurrenceTrace,
    SolverConfig,
    objective,
    recurrence_diagnostics,
    run_recurrence,
)
from .synth import (
    RaterSpec,
    SyntheticCase,
    diagonal_confusion,
    generate_case,
    simulate_raters,
    standard_rater_specs,
    standard_suite,
    write_suite,
)
from .tensor_io import (
    CaseManifest,
    LabelDomainError,
    ManifestError,
    SoftMapFormatError,
    load_manifest,
    read_hard_labels,
    read_soft_map,
    write_hard_labels,
    write_soft_map,
)

__version__ = "0.1.0"

__all__ = [
    "PROB_FLOOR",
    "CaseManifest",
    "ConfusionMatrix",
    "DiceResult",
    "LabelDomainError",
    "ManifestError",
    "PriorConfig",
    "RaterPanel",
    "RaterSpec",
    "RecurrenceStep",
    "RecurrenceTrace",
    "SoftMapFormatError",
    "SolverConfig",
    "SsimConfig",
    "StapleResult",
    "SyntheticCase",
    "bayes_oracle",
    "confidence_from_prediction",
    "cross_entropy",
    "diagonal_confusion",
    "edge_weights",
    "estimate_confusion",
    "fuse_literal",
    "fuse_loglik",
    "generate_case",
    "init_confidence",
    "init_fused",
    "label_fusion",
    "load_manifest",
    "majority_vote",
    "mh_loss",
    "objective",
    "one_hot",
    "per_rater_dice",
    "posterior_confidence",
    "predict_rater_map",
    "prior_energy",
    "prox_step",
    "read_hard_labels",
    "read_soft_map",
    "recurrence_diagnostics",
    "recurrence_loss",
    "run_recurrence",
    "self_fusion",
    "shuffle_loss",
    "simulate_raters",
    "softmax",
    "soft_dice",
    "ssim",
    "ssim_loss",
    "standard_rater_specs",
    "standard_suite",
    "staple_em",
    "threshold",
    "total_loss",
    "uniform_prior",
    "write_hard_labels",
    "write_soft_map",
    "write_suite",
]
