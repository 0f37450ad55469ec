"""Serialization of soft maps, hard label maps, raw images, and case manifests.

Soft maps travel in the MRT1 container: a 16-byte header (4-byte magic
``MRT1``, then height/width/classes as little-endian uint32) followed by
``H*W*K`` IEEE-754 float32 values, little-endian, row-major with the class
index fastest.  Hard label maps are single-channel 8-bit PNGs whose pixel
values are class indices.  A manifest is a JSON file listing cases with
their image, rater annotations, and optional ground truth.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"MRT1"
HEADER_SIZE = 16
_HEADER = struct.Struct("<4sIII")


class SoftMapFormatError(ValueError):
    """Raised when an MRT1 file violates the container contract."""


class LabelDomainError(ValueError):
    """Raised when a hard label map contains a class index >= K."""


class ManifestError(ValueError):
    """Raised when a manifest is malformed or references inconsistent files."""


@dataclass
class CaseManifest:
    """One annotated case: raw image, M rater label maps, optional truth."""

    case_id: str
    image: Path
    raters: list[Path]
    num_classes: int
    ground_truth: Path | None = None
    rater_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.rater_ids:
            self.rater_ids = [f"r{m}" for m in range(len(self.raters))]


def write_soft_map(soft_map: np.ndarray, path: str | Path) -> None:
    """Write an (H, W, K) soft map to ``path`` in MRT1 layout.

    Values are stored as float32; pass float32 data for bit-exact
    round-trips.  Non-finite values are rejected before anything is
    written.
    """
    arr = np.ascontiguousarray(soft_map, dtype=np.float32)
    if arr.ndim != 3:
        raise SoftMapFormatError(f"soft map must be (H, W, K), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise SoftMapFormatError(f"non-finite value at flat index {bad}; refusing to write")
    h, w, k = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, h, w, k))
        fh.write(arr.tobytes(order="C"))


def read_soft_map(path: str | Path) -> np.ndarray:
    """Read an MRT1 file back into an (H, W, K) float32 array.

    Values are loaded verbatim (no renormalization).  Raises
    :class:`SoftMapFormatError` naming the byte offset on bad magic,
    truncated payload, or non-finite values.
    """
    data = Path(path).read_bytes()
    if len(data) < HEADER_SIZE:
        raise SoftMapFormatError(
            f"{path}: truncated header, {len(data)} bytes < {HEADER_SIZE} (offset {len(data)})"
        )
    magic, h, w, k = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SoftMapFormatError(f"{path}: bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    expected = HEADER_SIZE + 4 * h * w * k
    if len(data) != expected:
        raise SoftMapFormatError(
            f"{path}: payload truncated at offset {len(data)}, expected {expected} bytes total"
        )
    arr = np.frombuffer(data, dtype="<f4", offset=HEADER_SIZE).reshape(h, w, k)
    finite = np.isfinite(arr)
    if not finite.all():
        flat = int(np.flatnonzero(~finite)[0])
        raise SoftMapFormatError(
            f"{path}: non-finite value at byte offset {HEADER_SIZE + 4 * flat}"
        )
    return arr.copy()


def write_hard_labels(labels: np.ndarray, path: str | Path) -> None:
    """Write an (H, W) class-index map as a single-channel 8-bit PNG."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise LabelDomainError(f"hard label map must be (H, W), got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise LabelDomainError("class indices must fit an 8-bit PNG (0..255)")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")


def read_hard_labels(path: str | Path, num_classes: int) -> np.ndarray:
    """Read a single-channel PNG of class indices; every value must be < K."""
    img = Image.open(path)
    if img.mode != "L":
        img = img.convert("L")
    arr = np.asarray(img, dtype=np.int64)
    if arr.max(initial=0) >= num_classes:
        ij = np.argwhere(arr >= num_classes)[0]
        raise LabelDomainError(
            f"{path}: class index {int(arr[ij[0], ij[1]])} >= K={num_classes} "
            f"at pixel (row={int(ij[0])}, col={int(ij[1])})"
        )
    return arr


def read_image(path: str | Path) -> np.ndarray:
    """Read a grayscale or RGB PNG into an (H, W) float64 array in [0, 1].

    RGB inputs are converted by ITU-R 601 luma.
    """
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr @ np.array([0.299, 0.587, 0.114])
    return arr / 255.0


def write_image(image: np.ndarray, path: str | Path) -> None:
    """Write an (H, W) [0, 1] intensity array as an 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path, format="PNG")


def load_manifest(path: str | Path) -> list[CaseManifest]:
    """Load and validate a manifest JSON file.

    Relative paths are resolved against the manifest's directory.  Every
    referenced file must exist, all rater maps must share the image's
    dimensions, and every rater pixel value must be < ``num_classes``.
    Cases are returned in file order.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "cases" not in doc:
        raise ManifestError(f'{path}: expected an object with a "cases" list')

    base = path.parent
    cases: list[CaseManifest] = []
    for entry in doc["cases"]:
        try:
            case_id = entry["case_id"]
            image = base / entry["image"]
            raters = [base / p for p in entry["raters"]]
            num_classes = int(entry["num_classes"])
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"{path}: malformed case entry: {exc}") from exc
        if num_classes < 1:
            raise ManifestError(f"case {case_id}: num_classes must be positive")
        gt = entry.get("ground_truth")
        manifest = CaseManifest(
            case_id=case_id,
            image=image,
            raters=raters,
            num_classes=num_classes,
            ground_truth=base / gt if gt else None,
        )
        _validate_case(manifest)
        cases.append(manifest)
    return cases


def _validate_case(case: CaseManifest) -> None:
    if not case.image.exists():
        raise ManifestError(f"case {case.case_id}: image {case.image} does not exist")
    shape = read_image(case.image).shape
    if not case.raters:
        raise ManifestError(f"case {case.case_id}: no raters listed")
    for rid, rpath in zip(case.rater_ids, case.raters):
        if not rpath.exists():
            raise ManifestError(f"case {case.case_id}: rater {rid} file {rpath} does not exist")
        labels = read_hard_labels(rpath, case.num_classes)
        if labels.shape != shape:
            raise ManifestError(
                f"case {case.case_id}: rater {rid} shape {labels.shape} "
                f"does not match image shape {shape}"
            )
    if case.ground_truth is not None and not case.ground_truth.exists():
        raise ManifestError(
            f"case {case.case_id}: ground truth {case.ground_truth} does not exist"
        )


def load_ground_truth(path: str | Path, num_classes: int) -> np.ndarray:
    """Load a ground-truth file as an (H, W, K) soft map.

    MRT1 files are loaded directly; PNGs are treated as class-index maps
    and expanded to one-hot.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_soft_map(path).astype(np.float64)
    labels = read_hard_labels(path, num_classes)
    eye = np.eye(num_classes, dtype=np.float64)
    return eye[labels]
