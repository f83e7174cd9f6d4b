"""Active-learning data selection for classifier retraining, and the
detection-stage training patch sampler.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import Annotation, SlideDims, is_hard_negative_class, is_positive_class
from .tiling import GRID, Window

DISAGREEMENT = "disagreement"
QUERY_ALL = "query_all"
UNCERTAINTY = "uncertainty"
KCENTER_GREEDY = "kcenter_greedy"

STRATEGIES = (DISAGREEMENT, QUERY_ALL, UNCERTAINTY, KCENTER_GREEDY)


@dataclass(frozen=True)
class Candidate:
    """A detector-proposed object considered for retraining queries."""

    object_id: int
    s_det: float
    s_cls: float
    predicted_class: int
    embedding: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.s_det <= 1.0 and 0.0 <= self.s_cls <= 1.0):
            raise ValueError("candidate scores must lie in [0, 1]")


@dataclass(frozen=True)
class SelectionConfig:
    strategy: str = DISAGREEMENT
    n: int = 20000

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.n < 0:
            raise ValueError("n must be non-negative")


def informativeness(c: Candidate) -> float:
    """L1 gap between detector and classifier positive confidences."""
    return abs(c.s_det - c.s_cls)


def _binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log(p) + (1.0 - p) * math.log(1.0 - p))


def _features(cands: list[Candidate]) -> np.ndarray:
    if all(c.embedding is not None for c in cands):
        return np.asarray([c.embedding for c in cands], dtype=float)
    warnings.warn("embeddings missing; k-center falls back to (s_det, s_cls) features")
    return np.asarray([[c.s_det, c.s_cls] for c in cands], dtype=float)


def _kcenter_greedy(
    cands: list[Candidate], n: int, labeled: np.ndarray | None
) -> list[int]:
    feats = _features(cands)
    order = []
    if labeled is not None and len(labeled) > 0:
        min_dist = np.linalg.norm(feats[:, None, :] - labeled[None, :, :], axis=2).min(axis=1)
    else:
        # No labeled pool: seed with the lowest object id for reproducibility.
        min_dist = np.full(len(cands), np.inf)
        order.append(0)
        min_dist = np.minimum(min_dist, np.linalg.norm(feats - feats[0], axis=1))
    selected = set(order)
    while len(order) < min(n, len(cands)):
        best = -1
        best_dist = -math.inf
        for i in range(len(cands)):
            if i in selected:
                continue
            if min_dist[i] > best_dist:
                best_dist = min_dist[i]
                best = i
        selected.add(best)
        order.append(best)
        min_dist = np.minimum(min_dist, np.linalg.norm(feats - feats[best], axis=1))
    return [cands[i].object_id for i in order]


def select(
    cands: list[Candidate],
    cfg: SelectionConfig,
    labeled_embeddings: np.ndarray | None = None,
) -> list[int]:
    """Pick object ids to query for retraining.

    disagreement: top-n |s_det - s_cls| among negative-predicted candidates.
    query_all: every negative-predicted candidate.
    uncertainty: top-n by classifier-confidence entropy.
    kcenter_greedy: greedy max-min L2 cover seeded by the labeled pool.
    Ties break on object id so runs are reproducible.
    """
    cands = sorted(cands, key=lambda c: c.object_id)
    if cfg.strategy == QUERY_ALL:
        return [c.object_id for c in cands if not is_positive_class(c.predicted_class)]
    if cfg.n == 0:
        return []
    if cfg.strategy == DISAGREEMENT:
        pool = [c for c in cands if not is_positive_class(c.predicted_class)]
        ranked = sorted(pool, key=lambda c: (-informativeness(c), c.object_id))
    elif cfg.strategy == UNCERTAINTY:
        ranked = sorted(cands, key=lambda c: (-_binary_entropy(c.s_cls), c.object_id))
    else:
        if cfg.n > len(cands):
            warnings.warn(f"requested {cfg.n} > {len(cands)} candidates; returning all")
        return _kcenter_greedy(cands, cfg.n, labeled_embeddings)
    if cfg.n > len(ranked):
        warnings.warn(f"requested {cfg.n} > {len(ranked)} candidates; returning all")
    return [c.object_id for c in ranked[: cfg.n]]


def sample_detection_patches(
    annotations: list[Annotation],
    slide: SlideDims,
    count: int,
    rng: np.random.Generator,
    window_size: int = 512,
) -> list[Window]:
    """Training windows for the detection stage: 50% uniform random, 40%
    guaranteed to contain a mitosis, 10% guaranteed to contain a lookalike.
    Quotas for missing categories fall back to uniform windows with a
    warning. Deterministic under the supplied generator."""
    if count < 0:
        raise ValueError("count must be non-negative")
    n_mitosis = int(count * 0.4)
    n_lookalike = int(count * 0.1)
    positives = [a for a in annotations if a.is_positive]
    lookalikes = [a for a in annotations if is_hard_negative_class(a.class_id)]
    if not positives and n_mitosis:
        warnings.warn("no mitosis annotations; reassigning quota to random windows")
        n_mitosis = 0
    if not lookalikes and n_lookalike:
        warnings.warn("no lookalike annotations; reassigning quota to random windows")
        n_lookalike = 0
    n_random = count - n_mitosis - n_lookalike

    max_ox = max(0, slide.width - window_size)
    max_oy = max(0, slide.height - window_size)

    def uniform_window(idx: int) -> Window:
        ox = int(rng.integers(0, max_ox + 1))
        oy = int(rng.integers(0, max_oy + 1))
        return Window(ox, oy, window_size, GRID, idx)

    def window_containing(ann: Annotation, idx: int) -> Window:
        lo_x = max(0, math.ceil(ann.center.x) - window_size)
        hi_x = min(max_ox, math.floor(ann.center.x))
        lo_y = max(0, math.ceil(ann.center.y) - window_size)
        hi_y = min(max_oy, math.floor(ann.center.y))
        ox = int(rng.integers(lo_x, hi_x + 1))
        oy = int(rng.integers(lo_y, hi_y + 1))
        return Window(ox, oy, window_size, GRID, idx)

    windows: list[Window] = []
    for _ in range(n_random):
        windows.append(uniform_window(len(windows)))
    for _ in range(n_mitosis):
        ann = positives[int(rng.integers(0, len(positives)))]
        windows.append(window_containing(ann, len(windows)))
    for _ in range(n_lookalike):
        ann = lookalikes[int(rng.integers(0, len(lookalikes)))]
        windows.append(window_containing(ann, len(windows)))
    return windows
