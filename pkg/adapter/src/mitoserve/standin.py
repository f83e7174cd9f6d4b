"""Scripted stand-in model driven by ground-truth annotation files.

Reproduces the engine's in-process synthetic oracle draw-for-draw: every
random stream is seeded by (seed, task code, quantized location), so the
same request yields the same bytes on both sides of the wire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MITOSIS = 1  # positive annotation class id

_TASK_DETECT = 1
_TASK_ADJUST = 2
_TASK_CLASSIFY = 3

OFFSET_CLIP = 12.0


@dataclass(frozen=True)
class StandInConfig:
    mode: str = "perfect"
    position_jitter_sd: float = 0.0
    fp_rate: float = 0.0
    fn_rate: float = 0.0
    score_noise_sd: float = 0.0
    border_degradation: float = 1.0
    rng_seed: int = 0
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
        if self.mode not in ("perfect", "noisy"):
            raise ValueError(f"unknown mode {self.mode!r}")


def degraded_config(rng_seed: int = 0) -> StandInConfig:
    return StandInConfig(
        mode="noisy",
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


def noisy_config(rng_seed: int = 0, **overrides) -> StandInConfig:
    return StandInConfig(mode="noisy", rng_seed=rng_seed, **overrides)


def parse_annotations(text: str) -> tuple[tuple[int, int], list[tuple[float, float, int]]]:
    """Delimited annotation format: '# width=W height=H' header then
    x<TAB>y<TAB>class rows. Returns ((W, H), [(x, y, class), ...])."""
    dims = None
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            kv = dict(part.split("=") for part in line[1:].split())
            dims = (int(kv["width"]), int(kv["height"]))
            continue
        if line.startswith("x\t"):
            continue
        x, y, cls = line.split("\t")
        rows.append((float(x), float(y), int(cls)))
    if dims is None:
        raise ValueError("annotation file missing '# width=... height=...' header")
    return dims, rows


def _rng(cfg: StandInConfig, task: int, qx: int, qy: int) -> np.random.Generator:
    # Seed components must be non-negative; the modulus leaves in-slide
    # coordinates untouched and maps off-slide negatives deterministically.
    m = 1 << 63
    return np.random.default_rng(
        np.random.SeedSequence((cfg.rng_seed % m, task, qx % m, qy % m))
    )


def _quantize(v: float) -> int:
    return int(round(v * 8))


def _clip01(v: float) -> float:
    return min(1.0, max(0.0, v))


@dataclass
class StandInModel:
    """detect / adjust / classify over one or more annotated slides."""

    cfg: StandInConfig = field(default_factory=StandInConfig)
    slides: dict[str, tuple[tuple[int, int], list[tuple[float, float, int]]]] = field(
        default_factory=dict
    )

    def add_slide_file(self, slide_id: str, path) -> None:
        from pathlib import Path

        dims, rows = parse_annotations(Path(path).read_text())
        self.slides[slide_id] = (dims, rows)

    def _slide(self, slide_id: str):
        if slide_id not in self.slides:
            raise KeyError(f"unknown slide {slide_id!r}")
        return self.slides[slide_id]

    def detect(self, slide_id: str, wx: int, wy: int, size: int) -> list[dict]:
        (sw, sh), rows = self._slide(slide_id)
        cfg = self.cfg
        inside = sorted(
            ((x, y) for x, y, cls in rows
             if cls == MITOSIS and wx <= x <= wx + size and wy <= y <= wy + size),
            key=lambda p: (p[0], p[1]),
        )
        box = cfg.box_size
        out = []
        if cfg.mode == "perfect":
            for x, y in inside:
                out.append({"cx": x, "cy": y, "w": box, "h": box, "class_id": MITOSIS,
                            "score": 1.0})
            return out
        rng = _rng(cfg, _TASK_DETECT, wx, wy)
        for x, y in inside:
            lx, ly = x - wx, y - wy
            near_border = min(lx, ly, size - lx, size - ly) <= cfg.border_margin
            degrade = cfg.border_degradation if near_border else 1.0
            u = float(rng.random())
            jitter = rng.normal(0.0, cfg.position_jitter_sd * degrade, 2)
            mean = cfg.tp_score - (cfg.border_score_drop if near_border else 0.0)
            score = _clip01(float(rng.normal(mean, cfg.score_noise_sd)))
            if u < min(1.0, cfg.fn_rate * degrade):
                continue
            cx = min(max(x + float(jitter[0]), 0.0), float(sw))
            cy = min(max(y + float(jitter[1]), 0.0), float(sh))
            out.append({"cx": cx, "cy": cy, "w": box, "h": box, "class_id": MITOSIS,
                        "score": score})
        n_fp = int(rng.poisson(cfg.fp_rate))
        lo, hi = cfg.fp_score_range
        for _ in range(n_fp):
            fx = float(rng.uniform(wx, wx + size))
            fy = float(rng.uniform(wy, wy + size))
            score = float(rng.uniform(lo, hi))
            out.append({"cx": min(max(fx, 0.0), float(sw)),
                        "cy": min(max(fy, 0.0), float(sh)),
                        "w": box, "h": box, "class_id": MITOSIS, "score": score})
        return out

    def _nearest_positive(self, rows, cx: float, cy: float, radius: float):
        best = None
        best_key = (radius, 0.0, 0.0)
        for x, y, cls in rows:
            if cls != MITOSIS:
                continue
            d = math.hypot(cx - x, cy - y)
            if d <= radius:
                key = (d, x, y)
                if best is None or key < best_key:
                    best = (x, y)
                    best_key = key
        return best

    def adjust(self, slide_id: str, cx: float, cy: float) -> dict:
        _, rows = self._slide(slide_id)
        cfg = self.cfg
        if cfg.mode == "perfect":
            noise = (0.0, 0.0)
            pnoise = 0.0
            hi, lo = 1.0, 0.0
        else:
            rng = _rng(cfg, _TASK_ADJUST, _quantize(cx), _quantize(cy))
            drawn = rng.normal(0.0, cfg.adjust_noise_sd, 2)
            noise = (float(drawn[0]), float(drawn[1]))
            pnoise = float(rng.normal(0.0, cfg.cls_noise_sd))
            hi, lo = 0.95, 0.05
        target = self._nearest_positive(rows, cx, cy, cfg.adjust_radius)
        if target is not None:
            dx = max(-OFFSET_CLIP, min(OFFSET_CLIP, target[0] - cx + noise[0]))
            dy = max(-OFFSET_CLIP, min(OFFSET_CLIP, target[1] - cy + noise[1]))
            pos = _clip01(hi + pnoise)
        else:
            dx = dy = 0.0
            pos = _clip01(lo + pnoise)
        return {"score": pos, "dx": dx, "dy": dy}

    def classify(self, slide_id: str, cx: float, cy: float) -> dict:
        _, rows = self._slide(slide_id)
        cfg = self.cfg
        if cfg.mode == "perfect":
            noise = 0.0
            hi, lo = 1.0, 0.0
        else:
            rng = _rng(cfg, _TASK_CLASSIFY, _quantize(cx), _quantize(cy))
            noise = float(rng.normal(0.0, cfg.cls_noise_sd))
            hi, lo = 0.95, 0.05
        target = self._nearest_positive(rows, cx, cy, cfg.cls_radius)
        return {"score": _clip01((hi if target is not None else lo) + noise)}
