"""Command-line interface: plan, run, evaluate, select, bench, synth.

Backend endpoint and RNG seed can be overridden with the MITOPIPE_ENDPOINT
and MITOPIPE_SEED environment variables.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import evaluate as ev
from . import fileio, oracle, pipeline, select as select_mod, synth, tiling
from .backend import OracleBackend, RemoteBackend
from .geometry import SlideDims

ENV_ENDPOINT = "MITOPIPE_ENDPOINT"
ENV_SEED = "MITOPIPE_SEED"


def _env_seed(args_seed: int | None) -> int:
    if os.environ.get(ENV_SEED):
        return int(os.environ[ENV_SEED])
    return args_seed if args_seed is not None else 0


def _load_config(path: str | None) -> pipeline.PipelineConfig:
    if path is None:
        return pipeline.PipelineConfig()
    return fileio.pipeline_config_from_mapping(
        fileio.parse_config_text(Path(path).read_text())
    )


def _oracle_config(mode: str, seed: int) -> oracle.OracleConfig:
    if mode == "degraded":
        return oracle.degraded_config(seed)
    return oracle.OracleConfig(mode=mode, rng_seed=seed)


def _make_backend(args, gt_paths: list[str], seed: int):
    endpoint = os.environ.get(ENV_ENDPOINT) or getattr(args, "endpoint", None)
    if endpoint:
        return RemoteBackend(endpoint=endpoint)
    backend = OracleBackend(cfg=_oracle_config(args.oracle, seed))
    for path in gt_paths:
        slide, annotations = fileio.read_annotations(path)
        backend.add_slide(Path(path).stem, slide, annotations)
    return backend


def _cmd_synth(args) -> int:
    seed = _env_seed(args.seed)
    if args.preset == "cmc":
        cfg = synth.cmc_like_config(seed)
    else:
        cfg = synth.SynthConfig(rng_seed=seed)
    if args.width:
        cfg = replace(cfg, width=args.width)
    if args.height:
        cfg = replace(cfg, height=args.height)
    slide, annotations = synth.generate(cfg)
    fileio.write_annotations(args.out, slide, annotations)
    print(f"wrote {len(annotations)} annotations to {args.out}")
    return 0


def _cmd_plan(args) -> int:
    slide = SlideDims(args.width, args.height)
    if args.sigma is not None:
        plan = tiling.plan_overlap(slide, args.window_size, tiling.OverlapConfig(args.sigma))
    else:
        plan = tiling.plan_grid(slide, args.window_size)
    text = tiling.format_plan(plan)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_run(args) -> int:
    seed = _env_seed(args.seed)
    cfg = _load_config(args.config)
    cfg.rng_seed = seed
    backend = _make_backend(args, args.gt, seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    status = 0
    try:
        for path in args.gt:
            slide_id = Path(path).stem
            slide, _ = fileio.read_annotations(path)
            run = pipeline.run_slide(slide_id, slide, backend, cfg)
            fileio.write_snapshots(run, outdir / f"{slide_id}.snapshots.tsv")
            state = "ok" if run.complete else "INCOMPLETE"
            print(
                f"{slide_id}: {state}, {len(run.final_detections)} detections, "
                f"windows grid={run.window_counts['grid']} "
                f"relocated={run.window_counts['relocated']}"
            )
            if not run.complete:
                status = 1
    finally:
        backend.close()
    return status


def _cmd_evaluate(args) -> int:
    preds_by_slide = {}
    gts_by_slide = {}
    slides = {}
    for path in args.gt:
        slide_id = Path(path).stem
        slide, annotations = fileio.read_annotations(path)
        gts_by_slide[slide_id] = annotations
        slides[slide_id] = slide
        snap_path = Path(args.snapshots) / f"{slide_id}.snapshots.tsv"
        stages = fileio.read_snapshots(snap_path)
        preds_by_slide[slide_id] = [r.detection for r in stages[pipeline.STAGE_FINAL]]
    report = ev.evaluate_slides(
        preds_by_slide, gts_by_slide, slides, args.threshold, args.radius
    )
    sys.stdout.write(ev.format_report(report))
    if args.scatter:
        Path(args.scatter).write_text(ev.format_scatter(report))
    if args.fp_bars:
        Path(args.fp_bars).write_text(ev.format_fp_bars(report))
    return 0


def _cmd_select(args) -> int:
    cands = fileio.parse_candidates(Path(args.candidates).read_text())
    cfg = select_mod.SelectionConfig(strategy=args.strategy, n=args.n)
    ids = select_mod.select(cands, cfg)
    text = fileio.format_selection(ids)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_bench(args) -> int:
    seed = _env_seed(args.seed)
    backend = _make_backend(args, [args.gt], seed)
    slide_id = Path(args.gt).stem
    slide, _ = fileio.read_annotations(args.gt)
    base = pipeline.PipelineConfig(rng_seed=seed, use_adjustment=False, use_fusion=False)
    variants = {
        "grid": replace(base, use_relocation=False),
        "overlap": replace(
            base, use_relocation=False, overlap=tiling.OverlapConfig(args.sigma)
        ),
        "relocation": replace(base, use_relocation=True),
    }
    rows = pipeline.bench(slide_id, slide, backend, variants)
    sys.stdout.write(pipeline.format_bench(rows))
    backend.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mitopipe")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic slide annotation file")
    p.add_argument("--preset", choices=["default", "cmc"], default="default")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--width", type=int, default=0)
    p.add_argument("--height", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("plan", help="emit a window plan")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--window-size", type=int, default=512)
    p.add_argument("--sigma", type=float, default=None, help="overlap ratio")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("run", help="run the pipeline over slides")
    p.add_argument("--gt", nargs="+", required=True, help="annotation files (slide id = stem)")
    p.add_argument("--config")
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--endpoint", help="remote backend host:port")
    p.add_argument("--oracle", choices=["perfect", "noisy", "degraded"], default="perfect")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("evaluate", help="evaluate snapshots against ground truth")
    p.add_argument("--snapshots", required=True, help="directory of *.snapshots.tsv")
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=25.0)
    p.add_argument("--scatter", help="write score-count scatter table here")
    p.add_argument("--fp-bars", help="write FP taxonomy table here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("select", help="produce a selection manifest")
    p.add_argument("--candidates", required=True)
    p.add_argument("--strategy", choices=list(select_mod.STRATEGIES), default="disagreement")
    p.add_argument("-n", type=int, default=20000)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("bench", help="compare tiling strategy costs")
    p.add_argument("--gt", required=True)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--oracle", choices=["perfect", "noisy", "degraded"], default="perfect")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
