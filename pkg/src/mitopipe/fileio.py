"""Delimited-text file formats: annotations, detection snapshots,
candidate tables, selection and training manifests, and the key-value
config format.
"""

from __future__ import annotations

from pathlib import Path

from .adjust import PatchSample
from .geometry import Annotation, Box, Detection, Point, SlideDims
from .pipeline import PipelineConfig, SlideRun, SnapshotRow
from .select import Candidate

_NA = "na"


def _fmt(v: float) -> str:
    return f"{v:.6f}"


# -- annotations -------------------------------------------------------------

def format_annotations(slide: SlideDims, annotations: list[Annotation]) -> str:
    lines = [f"# width={slide.width} height={slide.height}", "x\ty\tclass"]
    for a in annotations:
        lines.append(f"{_fmt(a.center.x)}\t{_fmt(a.center.y)}\t{int(a.class_id)}")
    return "\n".join(lines) + "\n"


def write_annotations(path: str | Path, slide: SlideDims, annotations: list[Annotation]) -> None:
    Path(path).write_text(format_annotations(slide, annotations))


def parse_annotations(text: str) -> tuple[SlideDims, list[Annotation]]:
    slide = None
    annotations = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = dict(kv.split("=") for kv in line[1:].split())
            slide = SlideDims(int(fields["width"]), int(fields["height"]))
            continue
        if line.startswith("x\t"):
            continue
        x, y, cls = line.split("\t")
        annotations.append(Annotation(Point(float(x), float(y)), int(cls)))
    if slide is None:
        raise ValueError("annotation file missing '# width=... height=...' header")
    return slide, annotations


def read_annotations(path: str | Path) -> tuple[SlideDims, list[Annotation]]:
    return parse_annotations(Path(path).read_text())


# -- detection snapshots -----------------------------------------------------

def format_snapshots(run: SlideRun) -> str:
    """One record per detection: slide id, stage tag, center, extents,
    class, detector score, classifier score, fused score."""
    lines = ["slide\tstage\tcx\tcy\tw\th\tclass\ts_det\ts_cls\tfused"]
    for stage, rows in run.snapshots.items():
        for r in rows:
            d = r.detection
            lines.append(
                f"{run.slide_id}\t{stage}\t{_fmt(d.center.x)}\t{_fmt(d.center.y)}"
                f"\t{_fmt(d.box.w)}\t{_fmt(d.box.h)}\t{int(d.class_id)}"
                f"\t{_fmt(r.s_det)}"
                f"\t{_fmt(r.s_cls) if r.s_cls is not None else _NA}"
                f"\t{_fmt(r.fused) if r.fused is not None else _NA}"
            )
    if not run.complete:
        lines.append(f"# incomplete slide {run.slide_id}")
    return "\n".join(lines) + "\n"


def write_snapshots(run: SlideRun, path: str | Path) -> None:
    Path(path).write_text(format_snapshots(run))


def parse_snapshots(text: str) -> dict[str, list[SnapshotRow]]:
    stages: dict[str, list[SnapshotRow]] = {}
    for line in text.splitlines():
        if not line or line.startswith(("#", "slide\t")):
            continue
        _, stage, cx, cy, w, h, cls, s_det, s_cls, fused = line.split("\t")
        s_cls_v = None if s_cls == _NA else float(s_cls)
        fused_v = None if fused == _NA else float(fused)
        score = fused_v if fused_v is not None else float(s_det)
        det = Detection(Box(Point(float(cx), float(cy)), float(w), float(h)), int(cls), score)
        stages.setdefault(stage, []).append(SnapshotRow(det, float(s_det), s_cls_v, fused_v))
    return stages


def read_snapshots(path: str | Path) -> dict[str, list[SnapshotRow]]:
    return parse_snapshots(Path(path).read_text())


# -- candidates and manifests ------------------------------------------------

def format_candidates(cands: list[Candidate]) -> str:
    lines = ["object_id\ts_det\ts_cls\tpredicted_class\tembedding"]
    for c in cands:
        emb = ",".join(_fmt(v) for v in c.embedding) if c.embedding is not None else _NA
        lines.append(
            f"{c.object_id}\t{_fmt(c.s_det)}\t{_fmt(c.s_cls)}\t{int(c.predicted_class)}\t{emb}"
        )
    return "\n".join(lines) + "\n"


def parse_candidates(text: str) -> list[Candidate]:
    cands = []
    for line in text.splitlines():
        if not line or line.startswith("object_id\t"):
            continue
        oid, s_det, s_cls, cls, emb = line.split("\t")
        embedding = None if emb == _NA else tuple(float(v) for v in emb.split(","))
        cands.append(Candidate(int(oid), float(s_det), float(s_cls), int(cls), embedding))
    return cands


def format_selection(object_ids: list[int]) -> str:
    return "object_id\n" + "".join(f"{oid}\n" for oid in object_ids)


def format_training_manifest(samples: list[PatchSample]) -> str:
    """Training-sample manifest: slide id, patch center, target offset, class."""
    lines = ["slide\tcx\tcy\tdx\tdy\tclass"]
    for s in samples:
        lines.append(
            f"{s.slide_id}\t{_fmt(s.patch_center.x)}\t{_fmt(s.patch_center.y)}"
            f"\t{_fmt(s.true_offset[0])}\t{_fmt(s.true_offset[1])}\t{int(s.true_class)}"
        )
    return "\n".join(lines) + "\n"


# -- key-value config --------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    """`key = value` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def pipeline_config_from_mapping(raw: dict[str, str]) -> PipelineConfig:
    """Build a PipelineConfig from parsed key-value pairs; unknown keys are
    rejected so typos fail loudly."""
    from .fuse import FusionConfig
    from .tiling import OverlapConfig, RelocationConfig

    cfg = PipelineConfig()
    known = {
        "window_size": int,
        "use_relocation": None,
        "use_adjustment": None,
        "use_fusion": None,
        "overlap_ratio": float,
        "border_margin": float,
        "min_score": float,
        "adjust_threshold": float,
        "omega": float,
        "decision_threshold": float,
        "nms_iou": float,
        "match_radius": float,
        "rng_seed": int,
        "max_inflight": int,
    }
    for key, value in raw.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
    if "window_size" in raw:
        cfg.window_size = int(raw["window_size"])
    for flag in ("use_relocation", "use_adjustment", "use_fusion"):
        if flag in raw:
            setattr(cfg, flag, _BOOL[raw[flag].lower()])
    if "overlap_ratio" in raw:
        cfg.overlap = OverlapConfig(float(raw["overlap_ratio"]))
    cfg.relocation = RelocationConfig(
        border_margin=float(raw.get("border_margin", cfg.relocation.border_margin)),
        min_score=float(raw.get("min_score", cfg.relocation.min_score)),
        window_size=cfg.window_size,
    )
    cfg.fusion = FusionConfig(
        omega=float(raw.get("omega", cfg.fusion.omega)),
        decision_threshold=float(raw.get("decision_threshold", cfg.fusion.decision_threshold)),
    )
    for key in ("adjust_threshold", "nms_iou", "match_radius"):
        if key in raw:
            setattr(cfg, key, float(raw[key]))
    for key in ("rng_seed", "max_inflight"):
        if key in raw:
            setattr(cfg, key, int(raw[key]))
    return cfg
