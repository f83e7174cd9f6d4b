"""Detection F1, false-positive taxonomy, hotspot (HPF) proposal, mitotic
count, and the GA/GB end-to-end error metrics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .geometry import (
    Annotation,
    Detection,
    Matching,
    Point,
    SlideDims,
    is_hard_negative_class,
    match_detections,
)

# 10 HPF = 2.37 mm^2 at 4:3, i.e. a 7110 x 5333 px rectangle; the implied
# 0.25 um/px scale is metadata only.
HPF_AREA_MM2 = 2.37
MICRONS_PER_PIXEL = 0.25

GA = "GA"
GB = "GB"


@dataclass(frozen=True)
class HPFConfig:
    width: int = 7110
    height: int = 5333


def f1_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """(precision, recall, F1) with the empty-set convention P=R=F1=0."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def f1_at_threshold(
    preds: list[Detection],
    gts: list[Annotation],
    threshold: float,
    radius: float = 25.0,
) -> tuple[float, float, float]:
    """Filter predictions by score, match by center distance, report P/R/F1."""
    kept = [d for d in preds if d.score >= threshold]
    m = match_detections(kept, gts, radius)
    return f1_from_counts(m.tp, m.fp, m.fn)


def classify_fp(fp: Detection, gts: list[Annotation], radius: float = 25.0) -> str:
    """'hard' when the false positive sits on a hard-negative annotation
    (within `radius` of its center), 'easy' otherwise."""
    for g in gts:
        if is_hard_negative_class(g.class_id) and fp.center.distance_to(g.center) <= radius:
            return "hard"
    return "easy"


def fp_taxonomy(matching: Matching, gts: list[Annotation], radius: float = 25.0) -> dict[str, int]:
    counts = {"easy": 0, "hard": 0}
    for d in matching.unmatched_preds:
        counts[classify_fp(d, gts, radius)] += 1
    return counts


def find_hpf(
    points: list[Point], slide: SlideDims, cfg: HPFConfig = HPFConfig()
) -> tuple[Point, int]:
    """Place the HPF rectangle (fully inside the slide) so it encloses the
    most points.

    Sweeps candidate y-origins (one per point, clamped) and, per band,
    scans the x-intervals of eligible origins with an increment/decrement
    event sweep: O(n^2 log n) worst case. Ties break on the smallest
    (y, x) origin among the candidate alignments.
    """
    w, h = cfg.width, cfg.height
    if w > slide.width or h > slide.height:
        raise ValueError("HPF rectangle does not fit inside the slide")
    if not points:
        return Point(0, 0), 0
    max_ox = slide.width - w
    max_oy = slide.height - h

    oy_candidates = sorted({min(max(p.y - h, 0.0), float(max_oy)) for p in points})
    best_count = 0
    best_origin = Point(0, 0)
    for oy in oy_candidates:
        active = [p for p in points if oy <= p.y <= oy + h]
        if len(active) <= best_count:
            continue
        # Interval of x-origins whose rectangle covers each active point.
        events: list[tuple[float, int]] = []
        for p in active:
            lo = min(max(p.x - w, 0.0), float(max_ox))
            hi = min(p.x, float(max_ox))
            events.append((lo, 0))
            events.append((hi, 1))
        events.sort()
        count = 0
        band_best = -1
        band_ox = 0.0
        for coord, kind in events:
            if kind == 0:
                count += 1
                if count > band_best:
                    band_best = count
                    band_ox = coord
            else:
                count -= 1
        if band_best > best_count:
            best_count = band_best
            best_origin = Point(band_ox, oy)
    return best_origin, best_count


def count_in_rect(points: list[Point], origin: Point, cfg: HPFConfig = HPFConfig()) -> int:
    return sum(
        1
        for p in points
        if origin.x <= p.x <= origin.x + cfg.width and origin.y <= p.y <= origin.y + cfg.height
    )


@dataclass
class EndToEndResult:
    setting: str
    hpf_origin: Point
    mc_pred: int
    mc_gt: int
    ape: float | None
    ae: int


def end_to_end(
    preds: list[Detection],
    gts: list[Annotation],
    slide: SlideDims,
    threshold: float,
    setting: str = GA,
    cfg: HPFConfig = HPFConfig(),
) -> EndToEndResult:
    """Propose an HPF from thresholded predictions and compare its mitotic
    count against the ground-truth optimum.

    GA counts predicted objects inside the proposed HPF (fully automated);
    GB counts ground-truth mitoses inside it (human-in-the-loop). MC_gt is
    the count of the GT-optimal HPF. APE is undefined when MC_gt is 0.
    """
    if setting not in (GA, GB):
        raise ValueError(f"unknown setting {setting!r}")
    pred_points = [d.center for d in preds if d.score >= threshold]
    gt_points = [g.center for g in gts if g.is_positive]
    origin, pred_count = find_hpf(pred_points, slide, cfg)
    _, mc_gt = find_hpf(gt_points, slide, cfg)
    if setting == GA:
        mc_pred = pred_count
    else:
        mc_pred = count_in_rect(gt_points, origin, cfg)
    ae = abs(mc_pred - mc_gt)
    if mc_gt == 0:
        warnings.warn("MC_gt is 0; APE undefined, slide excluded from MAPE")
        ape = None
    else:
        ape = ae / mc_gt
    return EndToEndResult(setting, origin, mc_pred, mc_gt, ape, ae)


def sweep_threshold(
    preds_by_slide: dict[str, list[Detection]],
    gts_by_slide: dict[str, list[Annotation]],
    slides: dict[str, SlideDims],
    setting: str = GA,
    cfg: HPFConfig = HPFConfig(),
) -> float:
    """Grid sweep over [0, 1] in 0.01 steps; returns the threshold with the
    lowest mean APE (ties go to the lower threshold)."""
    best_thr = 0.0
    best_mape = float("inf")
    for i in range(101):
        thr = i / 100
        apes = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for sid, preds in preds_by_slide.items():
                r = end_to_end(preds, gts_by_slide[sid], slides[sid], thr, setting, cfg)
                if r.ape is not None:
                    apes.append(r.ape)
        if not apes:
            continue
        mape = sum(apes) / len(apes)
        if mape < best_mape:
            best_mape = mape
            best_thr = thr
    return best_thr


@dataclass
class SlideEval:
    slide_id: str
    precision: float
    recall: float
    f1: float
    fp_easy: int
    fp_hard: int
    results: dict[str, EndToEndResult] = field(default_factory=dict)


@dataclass
class EvalReport:
    slides: list[SlideEval]
    mape: dict[str, float]
    mae: dict[str, float]

    @property
    def mean_f1(self) -> float:
        return sum(s.f1 for s in self.slides) / len(self.slides) if self.slides else 0.0


def evaluate_slides(
    preds_by_slide: dict[str, list[Detection]],
    gts_by_slide: dict[str, list[Annotation]],
    slides: dict[str, SlideDims],
    threshold: float,
    radius: float = 25.0,
    cfg: HPFConfig = HPFConfig(),
) -> EvalReport:
    """Per-slide F1/FP taxonomy plus GA and GB end-to-end errors, with
    unweighted-mean aggregation of MAPE/MAE over slides."""
    slide_evals = []
    apes: dict[str, list[float]] = {GA: [], GB: []}
    aes: dict[str, list[int]] = {GA: [], GB: []}
    for sid in sorted(preds_by_slide):
        preds = preds_by_slide[sid]
        gts = gts_by_slide[sid]
        kept = [d for d in preds if d.score >= threshold]
        m = match_detections(kept, gts, radius)
        p, r, f1 = f1_from_counts(m.tp, m.fp, m.fn)
        tax = fp_taxonomy(m, gts, radius)
        results = {}
        for setting in (GA, GB):
            res = end_to_end(preds, gts, slides[sid], threshold, setting, cfg)
            results[setting] = res
            aes[setting].append(res.ae)
            if res.ape is not None:
                apes[setting].append(res.ape)
        slide_evals.append(SlideEval(sid, p, r, f1, tax["easy"], tax["hard"], results))
    mape = {s: (sum(v) / len(v) if v else 0.0) for s, v in apes.items()}
    mae = {s: (sum(v) / len(v) if v else 0.0) for s, v in aes.items()}
    return EvalReport(slide_evals, mape, mae)


def format_report(report: EvalReport) -> str:
    lines = ["slide\tprecision\trecall\tf1\tfp_easy\tfp_hard\tmc_pred_GA\tmc_pred_GB\tmc_gt"]
    for s in report.slides:
        ga = s.results.get(GA)
        gb = s.results.get(GB)
        lines.append(
            f"{s.slide_id}\t{s.precision:.4f}\t{s.recall:.4f}\t{s.f1:.4f}"
            f"\t{s.fp_easy}\t{s.fp_hard}"
            f"\t{ga.mc_pred if ga else ''}\t{gb.mc_pred if gb else ''}"
            f"\t{ga.mc_gt if ga else ''}"
        )
    lines.append(f"# mean_f1 {report.mean_f1:.4f}")
    for setting in (GA, GB):
        lines.append(
            f"# {setting} MAPE {report.mape[setting]:.4f} MAE {report.mae[setting]:.4f}"
        )
    return "\n".join(lines) + "\n"


def format_scatter(report: EvalReport, setting: str = GA) -> str:
    """Plot-ready table of predicted vs ground-truth mitotic counts."""
    lines = ["slide\tmc_pred\tmc_gt"]
    for s in report.slides:
        r = s.results[setting]
        lines.append(f"{s.slide_id}\t{r.mc_pred}\t{r.mc_gt}")
    return "\n".join(lines) + "\n"


def format_fp_bars(report: EvalReport) -> str:
    """Plot-ready table of easy/hard false-positive counts per slide."""
    lines = ["slide\tfp_easy\tfp_hard"]
    for s in report.slides:
        lines.append(f"{s.slide_id}\t{s.fp_easy}\t{s.fp_hard}")
    return "\n".join(lines) + "\n"
