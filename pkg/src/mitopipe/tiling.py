"""Inference window planning: non-overlapping grids, overlapping sliding
windows, and window relocation, plus the window-count accounting used by
the cost benchmarks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .geometry import Detection, Point, SlideDims

GRID = "grid"
RELOCATED = "relocated"


@dataclass(frozen=True)
class Window:
    """A square inference window, clamped to lie inside the slide."""

    x: int
    y: int
    size: int
    kind: str = GRID
    index: int = 0

    @property
    def wid(self) -> str:
        return f"{self.kind[0]}{self.index:06d}"

    def contains(self, p: Point) -> bool:
        return self.x <= p.x <= self.x + self.size and self.y <= p.y <= self.y + self.size

    def local(self, p: Point) -> tuple[float, float]:
        """Window-local coordinates of a slide-frame point."""
        return (p.x - self.x, p.y - self.y)


@dataclass
class WindowPlan:
    windows: list[Window]
    slide: SlideDims
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.windows)


@dataclass(frozen=True)
class OverlapConfig:
    """Overlapping sliding-window ratio (0 degenerates to the plain grid)."""

    ratio: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.ratio < 1.0):
            raise ValueError(f"overlap ratio {self.ratio} outside [0, 1)")


@dataclass(frozen=True)
class RelocationConfig:
    """Border margin M, minimum confidence D, and window size K for the
    relocation-eligibility rule."""

    border_margin: float = 25.0
    min_score: float = 0.05
    window_size: int = 512

    def __post_init__(self) -> None:
        if not (0 <= self.border_margin < self.window_size / 2):
            raise ValueError("border_margin must satisfy 0 <= M < K/2")
        if not (0.0 <= self.min_score <= 1.0):
            raise ValueError("min_score must lie in [0, 1]")


def grid_axis_count(dim: int, size: int) -> int:
    return math.ceil(dim / size)


def overlap_axis_count(dim: int, size: int, ratio: float) -> int:
    return math.ceil(dim / (size * (1.0 - ratio)))


def _clamped_origin(pos: float, dim: int, size: int) -> int:
    # Clamp inward so the window stays inside the slide; when the window is
    # larger than the slide the origin pins to 0 and the window sticks out.
    return max(0, min(int(round(pos)), dim - size))


def plan_grid(slide: SlideDims, window_size: int) -> WindowPlan:
    """Non-overlapping grid of ceil(W/K) x ceil(H/K) windows in row-major
    order, edge windows clamped inward."""
    if window_size <= 0:
        raise ValueError("window_size must be positive")
    nx = grid_axis_count(slide.width, window_size)
    ny = grid_axis_count(slide.height, window_size)
    windows = []
    idx = 0
    for j in range(ny):
        oy = _clamped_origin(j * window_size, slide.height, window_size)
        for i in range(nx):
            ox = _clamped_origin(i * window_size, slide.width, window_size)
            windows.append(Window(ox, oy, window_size, GRID, idx))
            idx += 1
    return WindowPlan(windows, slide, {"strategy": GRID, "window_size": window_size})


def plan_overlap(slide: SlideDims, window_size: int, cfg: OverlapConfig) -> WindowPlan:
    """Overlapping sliding windows with stride K(1 - ratio); per-axis counts
    follow ceil(dim / stride). ratio=0 reproduces plan_grid exactly."""
    if window_size <= 0:
        raise ValueError("window_size must be positive")
    stride = window_size * (1.0 - cfg.ratio)
    nx = overlap_axis_count(slide.width, window_size, cfg.ratio)
    ny = overlap_axis_count(slide.height, window_size, cfg.ratio)
    windows = []
    idx = 0
    for j in range(ny):
        oy = _clamped_origin(j * stride, slide.height, window_size)
        for i in range(nx):
            ox = _clamped_origin(i * stride, slide.width, window_size)
            windows.append(Window(ox, oy, window_size, GRID, idx))
            idx += 1
    return WindowPlan(
        windows,
        slide,
        {"strategy": "overlap", "window_size": window_size, "ratio": cfg.ratio},
    )


def in_relocation_area(det: Detection, window: Window, cfg: RelocationConfig) -> bool:
    """Border-proximity eligibility test.

    True iff the detection center lies within `border_margin` pixels of any
    window border and its confidence is at least `min_score`. The center
    must be inside the window; anything else is a caller bug.
    """
    lx, ly = window.local(det.center)
    k = window.size
    if not (0 <= lx <= k and 0 <= ly <= k):
        raise ValueError(
            f"detection center ({det.center.x}, {det.center.y}) outside window {window.wid}"
        )
    border_dist = min(lx, ly, k - lx, k - ly)
    return border_dist <= cfg.border_margin and det.score >= cfg.min_score


def plan_relocation(
    grid_dets: list[Detection], slide: SlideDims, cfg: RelocationConfig
) -> tuple[list[Detection], list[Window]]:
    """Split grid detections into kept ones and fresh windows.

    Every eligible detection (see in_relocation_area) is discarded and spawns
    one relocated window centered on its former center, clamped to the slide;
    windows whose clamped origins coincide are deduplicated. Detections from
    relocated windows are never re-relocated, so the pass is single-shot.
    """
    k = cfg.window_size
    kept: list[Detection] = []
    discarded: list[Detection] = []
    for d in grid_dets:
        w = d.source_window
        if isinstance(w, Window) and w.kind == GRID:
            # Centers a noisy detector pushed past the border count as
            # border-adjacent: eligibility reduces to the score test.
            if w.contains(d.center):
                eligible = in_relocation_area(d, w, cfg)
            else:
                eligible = d.score >= cfg.min_score
        else:
            eligible = False
        if eligible:
            discarded.append(d)
        else:
            kept.append(d)
    new_windows: list[Window] = []
    seen: set[tuple[int, int]] = set()
    for d in discarded:
        ox = _clamped_origin(d.center.x - k / 2, slide.width, k)
        oy = _clamped_origin(d.center.y - k / 2, slide.height, k)
        if (ox, oy) in seen:
            continue
        seen.add((ox, oy))
        new_windows.append(Window(ox, oy, k, RELOCATED, len(new_windows)))
    return kept, new_windows


def format_plan(plan: WindowPlan) -> str:
    """Line-oriented text form: window id, origin, size, kind."""
    lines = [f"# slide {plan.slide.width} {plan.slide.height}"]
    for w in plan.windows:
        lines.append(f"{w.wid}\t{w.x}\t{w.y}\t{w.size}\t{w.kind}")
    return "\n".join(lines) + "\n"
