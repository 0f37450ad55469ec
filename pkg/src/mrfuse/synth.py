"""Deterministic synthetic multi-rater benchmark.

Every case has a known blob ground truth, a raw image correlated with it
(per-class mean intensities plus blur and noise), and a panel of
simulated raters with known behavior: either i.i.d. per-pixel confusion
or boundary bias (signed dilation/erosion radius plus smooth contour
jitter).  All randomness is keyed by (seed, case, rater) through numpy
seed sequences, so suite content is a pure function of the master seed
and independent of iteration order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import tensor_io
from .raters import RaterPanel

# Stream tags keep the per-purpose generators disjoint under one seed.
_STREAM_GT = 0
_STREAM_IMAGE = 1
_STREAM_RATER = 2

# Foreground fraction is resampled into this band; the lower edge stays
# above the hard bound 0.05 so no blob is thinner than the worst rater's
# erosion radius.
_AREA_BAND = (0.08, 0.35)
_AREA_MAX = 0.5

_IMAGE_NOISE_SIGMA = 0.05
_IMAGE_BLUR_SIGMA = 0.6
_CLASS_MEAN_RANGE = (0.3, 0.7)

# Correlation length of the contour jitter fields, in pixels.  Long enough
# that rater deviations are coherent arcs rather than per-pixel noise.
_JITTER_CORRELATION = 12.0


@dataclass
class RaterSpec:
    """Behavior of one simulated rater.

    ``kind`` is either "confusion" (column-stochastic K-by-K matrix applied
    independently per pixel) or "boundary" (signed dilation/erosion radius
    in pixels plus a smooth contour jitter amplitude).  With
    ``random_sign`` the radius sign is redrawn per case, so a rater may
    dilate on one case and erode on the next.
    """

    kind: str
    confusion: np.ndarray | None = None
    radius: int = 0
    jitter: float = 0.0
    random_sign: bool = False
    seed_offset: int = 0

    def __post_init__(self) -> None:
        if self.kind == "confusion":
            if self.confusion is None:
                raise ValueError("confusion spec requires a matrix")
            theta = np.asarray(self.confusion, dtype=np.float64)
            if not np.allclose(theta.sum(axis=0), 1.0, atol=1e-9):
                raise ValueError("confusion matrix columns must sum to 1")
            self.confusion = theta
        elif self.kind == "boundary":
            if not -5 <= self.radius <= 5:
                raise ValueError(f"radius must be in [-5, 5], got {self.radius}")
            if self.jitter < 0:
                raise ValueError(f"jitter must be >= 0, got {self.jitter}")
        else:
            raise ValueError(f"unknown rater kind {self.kind!r}")


def diagonal_confusion(num_classes: int, diag: float) -> np.ndarray:
    """Confusion matrix with ``diag`` on the diagonal, rest spread evenly."""
    off = (1.0 - diag) / (num_classes - 1) if num_classes > 1 else 0.0
    theta = np.full((num_classes, num_classes), off, dtype=np.float64)
    np.fill_diagonal(theta, diag)
    return theta


@dataclass
class SyntheticCase:
    case_id: str
    image: np.ndarray
    ground_truth: np.ndarray
    panel: RaterPanel
    specs: list[RaterSpec] = field(default_factory=list)


def _keys(seed: int | tuple[int, ...]) -> tuple[int, ...]:
    return (seed,) if isinstance(seed, int) else tuple(seed)


def generate_case(
    seed: int | tuple[int, ...],
    height: int = 128,
    width: int = 128,
    num_classes: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample a (raw image, ground truth) pair.

    The ground truth has one or two smooth blobs per foreground class
    (thresholded smoothed noise, largest components kept); samples whose
    total foreground fraction leaves the area band are rejected and
    redrawn.  The image assigns each class a mean intensity, blurs, and
    adds Gaussian noise.
    """
    keys = _keys(seed)
    for attempt in range(64):
        gt = _sample_ground_truth(keys + (_STREAM_GT, attempt), height, width, num_classes)
        if _AREA_BAND[0] <= float((gt > 0).mean()) <= _AREA_MAX:
            break
    else:
        raise RuntimeError("could not sample a ground truth within area bounds")
    image = _render_image(keys + (_STREAM_IMAGE,), gt, num_classes)
    return image, gt


def _sample_ground_truth(
    key: tuple[int, ...], height: int, width: int, num_classes: int
) -> np.ndarray:
    rng = np.random.default_rng(key)
    gt = np.zeros((height, width), dtype=np.int64)
    sigma = min(height, width) / 8.0
    for cls in range(1, num_classes):
        field_ = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma)
        target = rng.uniform(*_AREA_BAND) / max(num_classes - 1, 1)
        cut = np.quantile(field_, 1.0 - target)
        mask = _keep_largest_components(field_ > cut, int(rng.integers(1, 3)))
        gt[mask] = cls
    return gt


def _keep_largest_components(mask: np.ndarray, keep: int) -> np.ndarray:
    labeled, count = ndimage.label(mask)
    if count <= keep:
        return mask
    sizes = ndimage.sum_labels(np.ones_like(mask, dtype=np.int64), labeled, range(1, count + 1))
    top = np.argsort(sizes)[::-1][:keep] + 1
    return np.isin(labeled, top)


def _render_image(key: tuple[int, ...], gt: np.ndarray, num_classes: int) -> np.ndarray:
    rng = np.random.default_rng(key)
    means = np.linspace(*_CLASS_MEAN_RANGE, num_classes)
    image = ndimage.gaussian_filter(means[gt], sigma=_IMAGE_BLUR_SIGMA)
    image = image + _IMAGE_NOISE_SIGMA * rng.standard_normal(gt.shape)
    return np.clip(image, 0.0, 1.0)


def simulate_raters(
    ground_truth: np.ndarray,
    specs: list[RaterSpec],
    seed: int | tuple[int, ...],
    num_classes: int,
) -> RaterPanel:
    """Apply each rater spec to the ground truth; deterministic given seed."""
    keys = _keys(seed)
    labels = []
    for m, spec in enumerate(specs):
        rng = np.random.default_rng(keys + (_STREAM_RATER, m, spec.seed_offset))
        if spec.kind == "confusion":
            labels.append(_confusion_rater(rng, ground_truth, spec.confusion))
        else:
            radius = spec.radius
            if spec.random_sign and rng.random() < 0.5:
                radius = -radius
            labels.append(
                _boundary_rater(rng, ground_truth, num_classes, radius, spec.jitter)
            )
    return RaterPanel(labels=labels, num_classes=num_classes)


def _confusion_rater(
    rng: np.random.Generator, gt: np.ndarray, theta: np.ndarray
) -> np.ndarray:
    u = rng.random(gt.shape)
    out = np.zeros_like(gt)
    for cls in range(theta.shape[1]):
        mask = gt == cls
        if not mask.any():
            continue
        cum = np.cumsum(theta[:, cls])
        out[mask] = np.minimum(
            np.searchsorted(cum, u[mask], side="right"), theta.shape[0] - 1
        )
    return out


def _boundary_rater(
    rng: np.random.Generator,
    gt: np.ndarray,
    num_classes: int,
    radius: int,
    jitter: float,
) -> np.ndarray:
    out = np.zeros_like(gt)
    for cls in range(1, num_classes):
        mask = gt == cls
        if not mask.any():
            continue
        # Signed Euclidean distance to the region: negative inside.
        sd = ndimage.distance_transform_edt(~mask) - ndimage.distance_transform_edt(mask)
        offset = float(radius)
        if jitter > 0:
            noise = ndimage.gaussian_filter(
                rng.standard_normal(gt.shape), sigma=_JITTER_CORRELATION
            )
            noise = noise / max(noise.std(), 1e-12)
            offset = radius + jitter * noise
        out[sd <= offset] = cls
    return out


def standard_rater_specs(num_classes: int = 2) -> list[RaterSpec]:
    """The benchmark mix: two near-truth boundary raters, four degraded.

    Degraded raters dominate the panel: two heavily biased/jittered
    boundary raters and two per-pixel confusion raters with 0.75 diagonal.
    Boundary radii are magnitude-fixed with per-case random sign.
    """
    return [
        RaterSpec(kind="boundary", radius=1, jitter=0.5, random_sign=True, seed_offset=0),
        RaterSpec(kind="boundary", radius=1, jitter=0.5, random_sign=True, seed_offset=1),
        RaterSpec(kind="boundary", radius=3, jitter=2.0, random_sign=True, seed_offset=2),
        RaterSpec(kind="boundary", radius=3, jitter=2.0, random_sign=True, seed_offset=3),
        RaterSpec(kind="confusion", confusion=diagonal_confusion(num_classes, 0.75), seed_offset=4),
        RaterSpec(kind="confusion", confusion=diagonal_confusion(num_classes, 0.75), seed_offset=5),
    ]


def dominant_bad_rater_specs(num_classes: int = 2) -> list[RaterSpec]:
    """A harsher mix where the bad raters share a systematic bias.

    Both degraded boundary raters dilate by the same radius, so the bad
    majority agrees with itself and drags any purely label-driven fusion
    off the true contour; only the raw image disambiguates.
    """
    return [
        RaterSpec(kind="boundary", radius=1, jitter=0.5, seed_offset=0),
        RaterSpec(kind="boundary", radius=-1, jitter=0.5, seed_offset=1),
        RaterSpec(kind="boundary", radius=3, jitter=2.0, seed_offset=2),
        RaterSpec(kind="boundary", radius=3, jitter=2.0, seed_offset=3),
        RaterSpec(kind="confusion", confusion=diagonal_confusion(num_classes, 0.75), seed_offset=4),
        RaterSpec(kind="confusion", confusion=diagonal_confusion(num_classes, 0.75), seed_offset=5),
    ]


def _build_suite(
    seed: int,
    specs: list[RaterSpec],
    num_cases: int,
    height: int,
    width: int,
    num_classes: int,
) -> list[SyntheticCase]:
    cases = []
    for i in range(num_cases):
        image, gt = generate_case((seed, i), height, width, num_classes)
        panel = simulate_raters(gt, specs, (seed, i), num_classes)
        cases.append(
            SyntheticCase(
                case_id=f"case{i:03d}",
                image=image,
                ground_truth=gt,
                panel=panel,
                specs=specs,
            )
        )
    return cases


def standard_suite(
    seed: int,
    num_cases: int = 50,
    height: int = 128,
    width: int = 128,
    num_classes: int = 2,
) -> list[SyntheticCase]:
    """The frozen benchmark: ``num_cases`` cases with the standard panel."""
    return _build_suite(seed, standard_rater_specs(num_classes), num_cases, height, width,
                        num_classes)


def dominant_bad_suite(
    seed: int,
    num_cases: int = 50,
    height: int = 128,
    width: int = 128,
    num_classes: int = 2,
) -> list[SyntheticCase]:
    """Benchmark variant with a correlated-bias bad-rater majority."""
    return _build_suite(seed, dominant_bad_rater_specs(num_classes), num_cases, height,
                        width, num_classes)


def write_suite(cases: list[SyntheticCase], out_dir: str | Path) -> Path:
    """Write cases as PNGs plus a manifest JSON; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for case in cases:
        image_path = f"{case.case_id}_image.png"
        gt_path = f"{case.case_id}_gt.png"
        tensor_io.write_image(case.image, out_dir / image_path)
        tensor_io.write_hard_labels(case.ground_truth, out_dir / gt_path)
        rater_paths = []
        for rid, labels in zip(case.panel.rater_ids, case.panel.labels):
            rpath = f"{case.case_id}_{rid}.png"
            tensor_io.write_hard_labels(labels, out_dir / rpath)
            rater_paths.append(rpath)
        entries.append(
            {
                "case_id": case.case_id,
                "image": image_path,
                "raters": rater_paths,
                "ground_truth": gt_path,
                "num_classes": case.panel.num_classes,
            }
        )
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps({"cases": entries}, indent=2) + "\n")
    return manifest_path
