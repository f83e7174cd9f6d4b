"""End-to-end orchestration of the four stages on one slide, with
persisted per-stage detection snapshots and window-count accounting.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .adjust import apply_adjustment
from .backend import Backend
from .fuse import FusionConfig, rescore
from .geometry import Detection, SlideDims, nms
from .protocol import BackendError, ProtocolError
from .tiling import (
    OverlapConfig,
    RelocationConfig,
    Window,
    WindowPlan,
    plan_grid,
    plan_overlap,
    plan_relocation,
)

STAGE_DETECT = "detect"
STAGE_RELOCATED = "relocated"
STAGE_NMS = "nms"
STAGE_ADJUSTED = "adjusted"
STAGE_FINAL = "final"


@dataclass
class PipelineConfig:
    window_size: int = 512
    use_relocation: bool = True
    use_adjustment: bool = True
    use_fusion: bool = True
    relocation: RelocationConfig = field(default_factory=RelocationConfig)
    overlap: OverlapConfig | None = None
    adjust_threshold: float = 0.2
    fusion: FusionConfig = field(default_factory=FusionConfig)
    nms_iou: float = 0.3
    match_radius: float = 25.0
    rng_seed: int = 0
    max_inflight: int = 1

    def __post_init__(self) -> None:
        if self.relocation.window_size != self.window_size:
            self.relocation = replace(self.relocation, window_size=self.window_size)


def ablation_ladder(base: PipelineConfig | None = None) -> dict[str, PipelineConfig]:
    """The cumulative stage-toggle ladder used by the directional
    benchmarks: baseline, +adjustment, +fusion, +relocation."""
    base = base or PipelineConfig()
    steps = {}
    steps["baseline"] = replace(
        base, use_relocation=False, use_adjustment=False, use_fusion=False
    )
    steps["+adjustment"] = replace(steps["baseline"], use_adjustment=True)
    steps["+fusion"] = replace(steps["+adjustment"], use_fusion=True)
    steps["+relocation"] = replace(steps["+fusion"], use_relocation=True)
    return steps


@dataclass
class SnapshotRow:
    detection: Detection
    s_det: float
    s_cls: float | None = None
    fused: float | None = None


@dataclass
class SlideRun:
    slide_id: str
    slide: SlideDims
    snapshots: dict[str, list[SnapshotRow]] = field(default_factory=dict)
    window_counts: dict[str, int] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    complete: bool = False

    @property
    def final_detections(self) -> list[Detection]:
        return [r.detection for r in self.snapshots.get(STAGE_FINAL, [])]


def _detect_windows(
    backend: Backend, slide_id: str, windows: list[Window], max_inflight: int
) -> list[Detection]:
    """Run detection over windows, merging results in plan order regardless
    of completion timing."""
    if max_inflight > 1:
        with ThreadPoolExecutor(max_workers=max_inflight) as pool:
            per_window = list(pool.map(lambda w: backend.detect(slide_id, w), windows))
    else:
        per_window = [backend.detect(slide_id, w) for w in windows]
    return [d for dets in per_window for d in dets]


def run_slide(
    slide_id: str, slide: SlideDims, backend: Backend, cfg: PipelineConfig
) -> SlideRun:
    """detect -> window relocation -> global NMS -> center adjustment ->
    classification rescoring/fusion, persisting a snapshot after each stage.

    Backend failures abort the slide; partial snapshots are retained and the
    run is marked incomplete.
    """
    run = SlideRun(slide_id, slide)
    t0 = time.perf_counter()
    if cfg.overlap is not None:
        plan: WindowPlan = plan_overlap(slide, cfg.window_size, cfg.overlap)
    else:
        plan = plan_grid(slide, cfg.window_size)
    run.window_counts["grid"] = len(plan.windows)
    run.window_counts["relocated"] = 0
    try:
        dets = _detect_windows(backend, slide_id, plan.windows, cfg.max_inflight)
        run.snapshots[STAGE_DETECT] = [SnapshotRow(d, d.score) for d in dets]
        run.timings[STAGE_DETECT] = time.perf_counter() - t0

        if cfg.use_relocation and cfg.overlap is None:
            t1 = time.perf_counter()
            kept, new_windows = plan_relocation(dets, slide, cfg.relocation)
            reloc = _detect_windows(backend, slide_id, new_windows, cfg.max_inflight)
            run.snapshots[STAGE_RELOCATED] = [SnapshotRow(d, d.score) for d in reloc]
            run.window_counts["relocated"] = len(new_windows)
            dets = kept + reloc
            run.timings[STAGE_RELOCATED] = time.perf_counter() - t1

        t2 = time.perf_counter()
        dets = nms(dets, cfg.nms_iou)
        run.snapshots[STAGE_NMS] = [SnapshotRow(d, d.score) for d in dets]
        run.timings[STAGE_NMS] = time.perf_counter() - t2

        if cfg.use_adjustment:
            t3 = time.perf_counter()
            dets = [
                apply_adjustment(
                    d, backend.adjust(slide_id, d.center), cfg.adjust_threshold, slide
                )
                for d in dets
            ]
            run.snapshots[STAGE_ADJUSTED] = [SnapshotRow(d, d.score) for d in dets]
            run.timings[STAGE_ADJUSTED] = time.perf_counter() - t3

        if cfg.use_fusion:
            t4 = time.perf_counter()
            fused, cls_scores = rescore(dets, backend, slide_id, cfg.fusion)
            run.snapshots[STAGE_FINAL] = [
                SnapshotRow(f, d.score, s, f.score)
                for d, f, s in zip(dets, fused, cls_scores)
            ]
            run.timings[STAGE_FINAL] = time.perf_counter() - t4
        else:
            run.snapshots[STAGE_FINAL] = [SnapshotRow(d, d.score) for d in dets]
        run.complete = True
    except (BackendError, ProtocolError, TimeoutError):
        run.complete = False
    run.timings["total"] = time.perf_counter() - t0
    return run


@dataclass
class BenchRow:
    name: str
    windows: int
    wall_time: float
    final_detections: int


def bench(
    slide_id: str,
    slide: SlideDims,
    backend: Backend,
    variants: dict[str, PipelineConfig],
) -> list[BenchRow]:
    """Windows inferred and wall time per tiling strategy on one slide."""
    rows = []
    for name, cfg in variants.items():
        t0 = time.perf_counter()
        run = run_slide(slide_id, slide, backend, cfg)
        wall = time.perf_counter() - t0
        windows = run.window_counts["grid"] + run.window_counts["relocated"]
        rows.append(BenchRow(name, windows, wall, len(run.final_detections)))
    return rows


def format_bench(rows: list[BenchRow]) -> str:
    lines = ["strategy\twindows\twall_s\tdetections"]
    for r in rows:
        lines.append(f"{r.name}\t{r.windows}\t{r.wall_time:.3f}\t{r.final_detections}")
    return "\n".join(lines) + "\n"
