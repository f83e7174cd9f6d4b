"""Synthetic in-process model oracles for the three inference tasks.

The noisy oracle degrades ground truth with seeded jitter, misses, false
positives, and score noise; objects near a window border get amplified
jitter, miss rate, and a confidence drop, which models the split-object
artifacts the relocation stage exists to fix.

Every draw is taken from a generator seeded by (rng_seed, task code,
quantized location), so replays are exact and an external adapter can
reproduce the byte stream bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjust import AdjustmentPrediction, clip_shift
from .geometry import Annotation, Box, CellClass, Detection, Point, SlideDims
from .tiling import Window

PERFECT = "perfect"
NOISY = "noisy"

_TASK_DETECT = 1
_TASK_ADJUST = 2
_TASK_CLASSIFY = 3


@dataclass(frozen=True)
class OracleConfig:
    mode: str = PERFECT
    position_jitter_sd: float = 0.0
    fp_rate: float = 0.0
    fn_rate: float = 0.0
    score_noise_sd: float = 0.0
    border_degradation: float = 1.0
    rng_seed: int = 0
    # Border band width; matches the relocation margin it is meant to stress.
    border_margin: float = 25.0
    border_score_drop: float = 0.0
    box_size: float = 50.0
    tp_score: float = 0.9
    fp_score_range: tuple[float, float] = (0.05, 0.45)
    adjust_radius: float = 50.0
    adjust_noise_sd: float = 0.0
    cls_radius: float = 25.0
    cls_noise_sd: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in (PERFECT, NOISY):
            raise ValueError(f"unknown oracle mode {self.mode!r}")
        if min(self.fp_rate, self.position_jitter_sd, self.border_degradation) < 0:
            raise ValueError("rates must be non-negative")
        if not (0.0 <= self.fn_rate <= 1.0):
            raise ValueError("fn_rate must lie in [0, 1]")


def degraded_config(rng_seed: int = 0) -> OracleConfig:
    """Noise preset for the directional benchmarks: mild interior jitter,
    heavily degraded window borders, and sub-threshold injected FPs."""
    return OracleConfig(
        mode=NOISY,
        position_jitter_sd=4.0,
        fp_rate=0.1,
        fn_rate=0.02,
        score_noise_sd=0.15,
        border_degradation=4.5,
        border_score_drop=0.45,
        adjust_noise_sd=1.0,
        cls_noise_sd=0.02,
        rng_seed=rng_seed,
    )


def _quantize(v: float) -> int:
    # Eighth-pixel quantization keeps the seed integral while preserving
    # sub-pixel distinctness of patch centers.
    return int(round(v * 8))


def _rng(cfg: OracleConfig, task: int, qx: int, qy: int) -> np.random.Generator:
    # Seed components must be non-negative; the modulus leaves in-slide
    # coordinates untouched and maps off-slide negatives deterministically.
    m = 1 << 63
    return np.random.default_rng(
        np.random.SeedSequence((cfg.rng_seed % m, task, qx % m, qy % m))
    )


def _clip01(v: float) -> float:
    return min(1.0, max(0.0, v))


def _clamp_point(x: float, y: float, slide: SlideDims) -> Point:
    return Point(min(max(x, 0.0), float(slide.width)), min(max(y, 0.0), float(slide.height)))


def oracle_detect(
    window: Window, gt: list[Annotation], cfg: OracleConfig, slide: SlideDims
) -> list[Detection]:
    """Simulated detector output for one window.

    Perfect mode returns every ground-truth positive inside the window at
    its exact center with score 1. Noisy mode jitters centers, drops
    positives, perturbs scores, and injects Poisson false positives, with
    all degradations amplified near the window border.
    """
    inside = sorted(
        (a for a in gt if a.is_positive and window.contains(a.center)),
        key=lambda a: (a.center.x, a.center.y),
    )
    box = cfg.box_size
    dets: list[Detection] = []
    if cfg.mode == PERFECT:
        for a in inside:
            dets.append(Detection(Box(a.center, box, box), CellClass.MITOSIS, 1.0, window))
        return dets

    rng = _rng(cfg, _TASK_DETECT, window.x, window.y)
    k = window.size
    for a in inside:
        lx, ly = window.local(a.center)
        near_border = min(lx, ly, k - lx, k - ly) <= cfg.border_margin
        degrade = cfg.border_degradation if near_border else 1.0
        u = float(rng.random())
        jitter = rng.normal(0.0, cfg.position_jitter_sd * degrade, 2)
        mean = cfg.tp_score - (cfg.border_score_drop if near_border else 0.0)
        score = _clip01(float(rng.normal(mean, cfg.score_noise_sd)))
        if u < min(1.0, cfg.fn_rate * degrade):
            continue
        center = _clamp_point(a.center.x + float(jitter[0]), a.center.y + float(jitter[1]), slide)
        dets.append(Detection(Box(center, box, box), CellClass.MITOSIS, score, window))
    n_fp = int(rng.poisson(cfg.fp_rate))
    lo, hi = cfg.fp_score_range
    for _ in range(n_fp):
        fx = float(rng.uniform(window.x, window.x + k))
        fy = float(rng.uniform(window.y, window.y + k))
        score = float(rng.uniform(lo, hi))
        dets.append(Detection(Box(_clamp_point(fx, fy, slide), box, box), CellClass.MITOSIS, score, window))
    return dets


def _nearest_positive(center: Point, gt: list[Annotation], radius: float) -> Annotation | None:
    best = None
    best_key = (radius, 0.0, 0.0)
    for a in gt:
        if not a.is_positive:
            continue
        d = center.distance_to(a.center)
        if d <= radius:
            key = (d, a.center.x, a.center.y)
            if best is None or key < best_key:
                best = a
                best_key = key
    return best


def oracle_adjust(center: Point, gt: list[Annotation], cfg: OracleConfig) -> AdjustmentPrediction:
    """Simulated center adjuster: predicts the clipped offset to the nearest
    ground-truth positive (if one is in reach) and a positive confidence."""
    if cfg.mode == PERFECT:
        noise = (0.0, 0.0)
        pnoise = 0.0
        hi, lo = 1.0, 0.0
    else:
        rng = _rng(cfg, _TASK_ADJUST, _quantize(center.x), _quantize(center.y))
        drawn = rng.normal(0.0, cfg.adjust_noise_sd, 2)
        noise = (float(drawn[0]), float(drawn[1]))
        pnoise = float(rng.normal(0.0, cfg.cls_noise_sd))
        hi, lo = 0.95, 0.05
    target = _nearest_positive(center, gt, cfg.adjust_radius)
    if target is not None:
        dx = clip_shift(target.center.x - center.x + noise[0])
        dy = clip_shift(target.center.y - center.y + noise[1])
        pos = _clip01(hi + pnoise)
    else:
        dx = dy = 0.0
        pos = _clip01(lo + pnoise)
    return AdjustmentPrediction(dx, dy, (pos, 1.0 - pos))


def oracle_classify(center: Point, gt: list[Annotation], cfg: OracleConfig) -> float:
    """Simulated classifier confidence: high when a ground-truth positive
    sits within cls_radius of the patch center, low otherwise."""
    if cfg.mode == PERFECT:
        noise = 0.0
        hi, lo = 1.0, 0.0
    else:
        rng = _rng(cfg, _TASK_CLASSIFY, _quantize(center.x), _quantize(center.y))
        noise = float(rng.normal(0.0, cfg.cls_noise_sd))
        hi, lo = 0.95, 0.05
    target = _nearest_positive(center, gt, cfg.cls_radius)
    return _clip01((hi if target is not None else lo) + noise)
