"""Object-center adjustment: training-patch synthesis, the combined
regression/classification loss, and threshold-gated application of the
predicted center shift at inference time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Annotation, Detection, Matching, Point, SlideDims, is_positive_class

# Training offsets are drawn from N(0, 6^2) per axis and capped at 12 px;
# the same cap is applied to predicted shifts at inference.
OFFSET_SD = 6.0
OFFSET_CLIP = 12.0

PATCH_SIZE = 128


@dataclass(frozen=True)
class LossConfig:
    lambda_reg: float = 0.95

    def __post_init__(self) -> None:
        if not (0.0 <= self.lambda_reg <= 1.0):
            raise ValueError("lambda_reg must lie in [0, 1]")


@dataclass(frozen=True)
class AdjustmentPrediction:
    """Predicted center shift plus a (positive, negative) class distribution."""

    d_x: float
    d_y: float
    class_scores: tuple[float, float]

    def __post_init__(self) -> None:
        if abs(self.d_x) > OFFSET_CLIP + 1e-9 or abs(self.d_y) > OFFSET_CLIP + 1e-9:
            raise ValueError(f"shift ({self.d_x}, {self.d_y}) exceeds {OFFSET_CLIP} px cap")
        if not math.isclose(sum(self.class_scores), 1.0, abs_tol=1e-6):
            raise ValueError("class_scores must sum to 1")

    @property
    def positive_score(self) -> float:
        return self.class_scores[0]


@dataclass(frozen=True)
class AugmentationParams:
    """Photometric jitter sampled per training patch (applied only when a
    raster is actually rendered)."""

    brightness: float = 1.0
    contrast: float = 1.0
    blur_kernel: int = 0
    hue_shift: float = 0.0


@dataclass(frozen=True)
class PatchSample:
    """One synthesized training patch for the adjustment model.

    `true_offset` is the vector from the patch center to the ground-truth
    object center after the sampled flip and rotation are composed.
    """

    slide_id: str
    patch_center: Point
    true_offset: tuple[float, float]
    true_class: int
    flipped: bool
    rotation_deg: float
    photometric: AugmentationParams = AugmentationParams()


def clip_shift(v: float, clip: float = OFFSET_CLIP) -> float:
    return max(-clip, min(clip, v))


def rotate_vector(v: tuple[float, float], deg: float) -> tuple[float, float]:
    """Rotate a patch-frame vector the way the patch raster is rotated:
    content at center+u moves to center+R(deg)u (y pointing down)."""
    rad = math.radians(deg)
    c, s = math.cos(rad), math.sin(rad)
    return (c * v[0] - s * v[1], s * v[0] + c * v[1])


def sample_offset(rng: np.random.Generator) -> tuple[float, float]:
    """Per-axis N(0, 6^2) shift, clipped to +/-12 px."""
    d = rng.normal(0.0, OFFSET_SD, 2)
    return (clip_shift(float(d[0])), clip_shift(float(d[1])))


def _sample_photometric(rng: np.random.Generator) -> AugmentationParams:
    brightness = float(rng.uniform(0.8, 1.2)) if rng.random() < 0.5 else 1.0
    contrast = float(rng.uniform(0.8, 1.2)) if rng.random() < 0.5 else 1.0
    blur = int(rng.choice([3, 5])) if rng.random() < 0.25 else 0
    hue = float(rng.uniform(-0.1, 0.1))
    return AugmentationParams(brightness, contrast, blur, hue)


def synthesize_training_patch(
    ann: Annotation,
    slide: SlideDims,
    rng: np.random.Generator,
    slide_id: str = "",
    patch_size: int = PATCH_SIZE,
) -> PatchSample:
    """Sample one geometrically augmented training patch around `ann`.

    The patch is cut so the object sits `offset` pixels from the patch
    center, then a horizontal flip (p=0.5) and a uniform rotation in
    (-90, 90) degrees are applied about the patch center. The recorded
    target offset is the object position after composing those transforms.
    Patch centers too close to the slide edge are clamped inward and the
    actual offset is recorded exactly.
    """
    offset = sample_offset(rng)
    flipped = bool(rng.random() < 0.5)
    rotation = float(rng.uniform(-90.0, 90.0))
    photometric = _sample_photometric(rng)

    half = patch_size / 2
    cx = min(max(ann.center.x - offset[0], half), slide.width - half)
    cy = min(max(ann.center.y - offset[1], half), slide.height - half)
    # Exact marker position relative to the (possibly clamped) patch center.
    m = (ann.center.x - cx, ann.center.y - cy)
    if flipped:
        m = (-m[0], m[1])
    true_offset = rotate_vector(m, rotation)
    return PatchSample(
        slide_id=slide_id,
        patch_center=Point(cx, cy),
        true_offset=true_offset,
        true_class=ann.class_id,
        flipped=flipped,
        rotation_deg=rotation,
        photometric=photometric,
    )


def relocation_loss(
    pred: AdjustmentPrediction, target: PatchSample, cfg: LossConfig = LossConfig()
) -> float:
    """lambda * L1(offset) + (1 - lambda) * cross-entropy(class).

    The L1 term sums over the two axes and is dropped entirely when the
    ground-truth class is negative, so negative samples contribute no
    regression gradient.
    """
    true_idx = 0 if is_positive_class(target.true_class) else 1
    p_true = max(pred.class_scores[true_idx], 1e-12)
    ce = -math.log(p_true)
    if true_idx == 0:
        l1 = abs(pred.d_x - target.true_offset[0]) + abs(pred.d_y - target.true_offset[1])
    else:
        l1 = 0.0
    return cfg.lambda_reg * l1 + (1.0 - cfg.lambda_reg) * ce


def apply_adjustment(
    det: Detection,
    pred: AdjustmentPrediction,
    threshold: float,
    slide: SlideDims | None = None,
) -> Detection:
    """Shift the detection center by the clipped predicted offset when the
    adjuster calls the object positive; otherwise leave it untouched."""
    if pred.positive_score < threshold:
        return det
    nx = det.center.x + clip_shift(pred.d_x)
    ny = det.center.y + clip_shift(pred.d_y)
    if slide is not None:
        nx = min(max(nx, 0.0), float(slide.width))
        ny = min(max(ny, 0.0), float(slide.height))
    return det.with_center(Point(nx, ny))


def mean_center_distance(matching: Matching) -> float:
    """Mean Euclidean distance between matched prediction/annotation centers.
    Only true-positive pairs count; returns 0 when there are none."""
    if not matching.pairs:
        return 0.0
    total = sum(p.center.distance_to(g.center) for p, g in matching.pairs)
    return total / len(matching.pairs)
