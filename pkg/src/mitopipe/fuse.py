"""Detector/classifier confidence fusion for the classification stage."""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import Detection


@dataclass(frozen=True)
class FusionConfig:
    omega: float = 0.4
    decision_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.omega <= 1.0):
            raise ValueError("omega must lie in [0, 1]")
        if not (0.0 <= self.decision_threshold <= 1.0):
            raise ValueError("decision_threshold must lie in [0, 1]")


def fuse_scores(s_det: float, s_cls: float, cfg: FusionConfig = FusionConfig()) -> float:
    """Weighted positive confidence: omega * s_det + (1 - omega) * s_cls."""
    if not (0.0 <= s_det <= 1.0):
        raise ValueError(f"s_det {s_det} outside [0, 1]")
    if not (0.0 <= s_cls <= 1.0):
        raise ValueError(f"s_cls {s_cls} outside [0, 1]")
    return cfg.omega * s_det + (1.0 - cfg.omega) * s_cls


def rescore(
    dets: list[Detection],
    backend,
    slide_id: str,
    cfg: FusionConfig = FusionConfig(),
) -> tuple[list[Detection], list[float]]:
    """Replace each detection's score with the fused score, preserving order.

    Returns the rescored detections together with the raw classifier scores
    (same order) so callers can persist both.
    """
    out: list[Detection] = []
    cls_scores: list[float] = []
    for d in dets:
        s_cls = backend.classify(slide_id, d.center)
        cls_scores.append(s_cls)
        out.append(d.with_score(fuse_scores(d.score, s_cls, cfg)))
    return out, cls_scores
