"""Box/point arithmetic, IoU, non-maximum suppression, and center-distance
matching shared by every stage of the pipeline.

All coordinates are in the slide frame (pixels, origin at the top-left,
y pointing down) unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum


class CellClass(IntEnum):
    """Object classes. MITOSIS is the positive class; MITOSIS_LIKE and
    NON_MITOSIS are the hard-negative (mitosis lookalike) classes."""

    MITOSIS = 1
    MITOSIS_LIKE = 2
    GRANULOCYTE = 3
    TUMOR_CELL = 4
    NON_MITOSIS = 5


POSITIVE_CLASSES = frozenset({CellClass.MITOSIS})
HARD_NEGATIVE_CLASSES = frozenset({CellClass.MITOSIS_LIKE, CellClass.NON_MITOSIS})


def is_positive_class(class_id: int) -> bool:
    return class_id in POSITIVE_CLASSES


def is_hard_negative_class(class_id: int) -> bool:
    return class_id in HARD_NEGATIVE_CLASSES


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def distance_to(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class SlideDims:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"invalid slide dims {self.width}x{self.height}")

    def contains(self, p: Point) -> bool:
        return 0 <= p.x <= self.width and 0 <= p.y <= self.height


@dataclass(frozen=True)
class Box:
    """Axis-aligned box stored in center/extent form."""

    center: Point
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"degenerate box extents {self.w}x{self.h}")

    @property
    def x0(self) -> float:
        return self.center.x - self.w / 2

    @property
    def x1(self) -> float:
        return self.center.x + self.w / 2

    @property
    def y0(self) -> float:
        return self.center.y - self.h / 2

    @property
    def y1(self) -> float:
        return self.center.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Detection:
    """A scored, classed box. `score` is the positive-object confidence of
    whichever stage produced or last rescored the detection."""

    box: Box
    class_id: int
    score: float
    source_window: object | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def center(self) -> Point:
        return self.box.center

    def with_center(self, center: Point) -> "Detection":
        return replace(self, box=replace(self.box, center=center))

    def with_score(self, score: float) -> "Detection":
        return replace(self, score=score)


@dataclass(frozen=True)
class Annotation:
    """Ground-truth object on a slide."""

    center: Point
    class_id: int

    @property
    def is_positive(self) -> bool:
        return is_positive_class(self.class_id)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes. Symmetric, in [0, 1]."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    if ix <= 0:
        return 0.0
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _det_sort_key(d: Detection) -> tuple[float, float, float]:
    # score desc, then center x, then center y: fixes ordering so runs
    # are reproducible regardless of input order.
    return (-d.score, d.center.x, d.center.y)


def nms(dets: list[Detection], iou_threshold: float = 0.3) -> list[Detection]:
    """Greedy class-aware non-maximum suppression.

    A box is suppressed when a surviving box of the same class and
    equal-or-higher score overlaps it with IoU strictly above
    `iou_threshold`. Output keeps the deterministic (score desc, x, y)
    order.
    """
    keep: list[Detection] = []
    for d in sorted(dets, key=_det_sort_key):
        suppressed = False
        for k in keep:
            if k.class_id == d.class_id and iou(k.box, d.box) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            keep.append(d)
    return keep


@dataclass
class Matching:
    """One-to-one matching of predictions against positive ground truth."""

    pairs: list[tuple[Detection, Annotation]]
    unmatched_preds: list[Detection]
    unmatched_gts: list[Annotation]

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_preds)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gts)


def match_detections(
    preds: list[Detection], gts: list[Annotation], radius: float = 25.0
) -> Matching:
    """Greedy center-distance matching.

    Predictions are visited in descending score order (ties by center x,
    then y); each claims the nearest still-unmatched positive annotation
    within `radius` pixels. Non-positive annotations are never matched.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    positives = [g for g in gts if g.is_positive]
    taken = [False] * len(positives)
    pairs: list[tuple[Detection, Annotation]] = []
    unmatched_preds: list[Detection] = []
    for p in sorted(preds, key=_det_sort_key):
        best_j = -1
        best_dist = math.inf
        for j, g in enumerate(positives):
            if taken[j]:
                continue
            dist = p.center.distance_to(g.center)
            if dist <= radius and dist < best_dist:
                best_dist = dist
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            pairs.append((p, positives[best_j]))
        else:
            unmatched_preds.append(p)
    unmatched_gts = [g for j, g in enumerate(positives) if not taken[j]]
    return Matching(pairs, unmatched_preds, unmatched_gts)
