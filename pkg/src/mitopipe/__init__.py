"""Model-agnostic engine for multi-stage mitotic-figure detection on
whole-slide images: window planning and relocation, detection fusion,
center adjustment, sample selection, and hotspot evaluation.
"""

from .geometry import (
    Annotation,
    Box,
    CellClass,
    Detection,
    Point,
    SlideDims,
    iou,
    match_detections,
    nms,
)
from .tiling import OverlapConfig, RelocationConfig, Window, plan_grid, plan_overlap
from .fuse import FusionConfig, fuse_scores
from .pipeline import PipelineConfig, run_slide

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "Box",
    "CellClass",
    "Detection",
    "FusionConfig",
    "OverlapConfig",
    "PipelineConfig",
    "Point",
    "RelocationConfig",
    "SlideDims",
    "Window",
    "fuse_scores",
    "iou",
    "match_detections",
    "nms",
    "plan_grid",
    "plan_overlap",
    "run_slide",
]
