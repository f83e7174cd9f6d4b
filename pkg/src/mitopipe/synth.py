"""Seeded synthetic slide generation: Poisson background scatter, one
planted hotspot cluster, and hard-negative lookalikes, plus optional
marker-dot raster tiles for backends that want pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Annotation, CellClass, Point, SlideDims
from .evaluate import HPFConfig
from .tiling import Window


@dataclass(frozen=True)
class SynthConfig:
    width: int = 14220
    height: int = 10666
    positives_per_window: float = 0.15
    hard_negative_ratio: float = 0.3
    hotspot_count: int = 40
    hotspot_width: int = HPFConfig().width
    hotspot_height: int = HPFConfig().height
    min_spacing: float = 60.0
    window_size: int = 512
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.positives_per_window < 0 or self.hard_negative_ratio < 0:
            raise ValueError("densities must be non-negative")
        if self.hotspot_count < 0:
            raise ValueError("hotspot_count must be non-negative")


def cmc_like_config(rng_seed: int = 0, width: int = 40960, height: int = 40960) -> SynthConfig:
    """Density preset calibrated so relocation-eligible objects land near
    2.7% of the grid-window count (border band is ~18.6% of a 512 window
    at a 25 px margin, so 0.027 / 0.1857 positives per window)."""
    return SynthConfig(
        width=width,
        height=height,
        positives_per_window=0.1455,
        hard_negative_ratio=0.1,
        hotspot_count=30,
        rng_seed=rng_seed,
    )


def _scatter(
    rng: np.random.Generator,
    n: int,
    x0: float,
    y0: float,
    x1: float,
    y1: float,
    existing: list[Point],
    min_spacing: float,
) -> list[Point]:
    # Rejection sampling keeps positives separated so NMS can never merge
    # two distinct objects; gives up on a point after a bounded retry budget.
    points: list[Point] = []
    for _ in range(n):
        for _attempt in range(200):
            p = Point(float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
            if min_spacing <= 0 or all(
                p.distance_to(q) >= min_spacing for q in existing + points
            ):
                points.append(p)
                break
    return points


def generate(cfg: SynthConfig) -> tuple[SlideDims, list[Annotation]]:
    """Build one synthetic slide: background positives at the configured
    per-window density, a planted hotspot cluster inside one HPF footprint,
    and hard negatives at the configured ratio. Deterministic under seed."""
    slide = SlideDims(cfg.width, cfg.height)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
    area_windows = (cfg.width * cfg.height) / (cfg.window_size ** 2)
    n_bg = int(rng.poisson(cfg.positives_per_window * area_windows))

    positives: list[Point] = []
    hotspot_origin = Point(0.0, 0.0)
    if cfg.hotspot_count:
        hx = float(rng.uniform(0, max(1, cfg.width - cfg.hotspot_width)))
        hy = float(rng.uniform(0, max(1, cfg.height - cfg.hotspot_height)))
        hotspot_origin = Point(hx, hy)
        positives += _scatter(
            rng,
            cfg.hotspot_count,
            hx,
            hy,
            hx + cfg.hotspot_width,
            hy + cfg.hotspot_height,
            [],
            cfg.min_spacing,
        )
    positives += _scatter(rng, n_bg, 0, 0, cfg.width, cfg.height, positives, cfg.min_spacing)

    annotations = [Annotation(p, CellClass.MITOSIS) for p in positives]
    n_hard = int(rng.poisson(cfg.hard_negative_ratio * max(len(positives), 1)))
    hard_points = _scatter(rng, n_hard, 0, 0, cfg.width, cfg.height, positives, cfg.min_spacing)
    annotations += [Annotation(p, CellClass.MITOSIS_LIKE) for p in hard_points]
    return slide, annotations


def render_marker_tile(
    annotations: list[Annotation], window: Window, dot_radius: int = 2
) -> np.ndarray:
    """uint8 raster of the window with one bright dot per annotation center;
    enough for backends that insist on pixel input."""
    tile = np.zeros((window.size, window.size), dtype=np.uint8)
    for a in annotations:
        if not window.contains(a.center):
            continue
        lx, ly = window.local(a.center)
        cx, cy = int(round(lx)), int(round(ly))
        x0, x1 = max(0, cx - dot_radius), min(window.size, cx + dot_radius + 1)
        y0, y1 = max(0, cy - dot_radius), min(window.size, cy + dot_radius + 1)
        tile[y0:y1, x0:x1] = 255
    return tile
