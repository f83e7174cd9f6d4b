import sys
from dataclasses import replace
from pathlib import Path

import pytest

from mitopipe import fileio
from mitopipe.backend import Backend, OracleBackend, RemoteBackend
from mitopipe.fuse import FusionConfig
from mitopipe.geometry import Annotation, CellClass, Point, SlideDims
from mitopipe.oracle import OracleConfig, degraded_config
from mitopipe.pipeline import (
    STAGE_ADJUSTED,
    STAGE_DETECT,
    STAGE_FINAL,
    STAGE_NMS,
    STAGE_RELOCATED,
    PipelineConfig,
    SlideRun,
    ablation_ladder,
    bench,
    format_bench,
    run_slide,
)
from mitopipe.protocol import BackendError
from mitopipe.synth import SynthConfig, generate

STUB = str(Path(__file__).parent / "stub_server.py")


def small_slide(seed=3):
    cfg = SynthConfig(width=4000, height=3000, hotspot_width=1500, hotspot_height=1100,
                      hotspot_count=10, positives_per_window=0.3, rng_seed=seed)
    return generate(cfg)


def perfect_backend(slide, anns):
    b = OracleBackend(cfg=OracleConfig(mode="perfect"))
    b.add_slide("s", slide, anns)
    return b


class TestRunSlide:
    def test_perfect_oracle_recovers_every_positive(self):
        slide, anns = small_slide()
        run = run_slide("s", slide, perfect_backend(slide, anns), PipelineConfig())
        assert run.complete
        got = {(d.center.x, d.center.y) for d in run.final_detections}
        want = {(a.center.x, a.center.y) for a in anns if a.is_positive}
        assert got == want

    def test_snapshot_stages_present(self):
        slide, anns = small_slide()
        run = run_slide("s", slide, perfect_backend(slide, anns), PipelineConfig())
        for stage in (STAGE_DETECT, STAGE_RELOCATED, STAGE_NMS, STAGE_ADJUSTED, STAGE_FINAL):
            assert stage in run.snapshots
        assert run.window_counts["grid"] == 8 * 6

    def test_fusion_scores_recorded(self):
        slide, anns = small_slide()
        run = run_slide("s", slide, perfect_backend(slide, anns), PipelineConfig())
        for row in run.snapshots[STAGE_FINAL]:
            assert row.s_cls is not None and row.fused is not None
            assert row.fused == pytest.approx(0.4 * row.s_det + 0.6 * row.s_cls)

    def test_stage_toggles(self):
        slide, anns = small_slide()
        cfg = PipelineConfig(use_relocation=False, use_adjustment=False, use_fusion=False)
        run = run_slide("s", slide, perfect_backend(slide, anns), cfg)
        assert run.complete
        assert STAGE_RELOCATED not in run.snapshots
        assert STAGE_ADJUSTED not in run.snapshots
        assert run.window_counts["relocated"] == 0
        for row in run.snapshots[STAGE_FINAL]:
            assert row.s_cls is None

    def test_overlap_disables_relocation(self):
        from mitopipe.tiling import OverlapConfig
        slide, anns = small_slide()
        cfg = PipelineConfig(overlap=OverlapConfig(0.1))
        run = run_slide("s", slide, perfect_backend(slide, anns), cfg)
        assert STAGE_RELOCATED not in run.snapshots
        assert run.window_counts["relocated"] == 0

    def test_backend_failure_marks_run_incomplete(self):
        slide, anns = small_slide()

        class Flaky(Backend):
            calls = 0

            def detect(self, slide_id, window):
                self.calls += 1
                if self.calls > 5:
                    raise BackendError("boom")
                return []

        run = run_slide("s", slide, Flaky(), PipelineConfig())
        assert not run.complete
        assert STAGE_FINAL not in run.snapshots

    def test_parallel_detection_matches_serial(self):
        slide, anns = small_slide()
        serial = run_slide("s", slide, perfect_backend(slide, anns), PipelineConfig())
        par = run_slide(
            "s", slide, perfect_backend(slide, anns), PipelineConfig(max_inflight=4)
        )
        assert fileio.format_snapshots(serial) == fileio.format_snapshots(par)

    def test_byte_identical_replay(self):
        slide, anns = small_slide()
        backend = OracleBackend(cfg=degraded_config(5))
        backend.add_slide("s", slide, anns)
        a = run_slide("s", slide, backend, PipelineConfig(rng_seed=5))
        b = run_slide("s", slide, backend, PipelineConfig(rng_seed=5))
        assert fileio.format_snapshots(a) == fileio.format_snapshots(b)


def test_ablation_ladder_toggles_accumulate():
    steps = ablation_ladder()
    order = list(steps)
    assert order == ["baseline", "+adjustment", "+fusion", "+relocation"]
    flags = [
        (c.use_adjustment, c.use_fusion, c.use_relocation) for c in steps.values()
    ]
    assert flags == [
        (False, False, False),
        (True, False, False),
        (True, True, False),
        (True, True, True),
    ]


def test_bench_rows_and_format():
    slide, anns = small_slide()
    backend = perfect_backend(slide, anns)
    base = PipelineConfig(use_adjustment=False, use_fusion=False)
    rows = bench("s", slide, backend, {
        "grid": replace(base, use_relocation=False),
        "relocation": base,
    })
    assert [r.name for r in rows] == ["grid", "relocation"]
    assert rows[1].windows >= rows[0].windows
    text = format_bench(rows)
    assert text.splitlines()[0] == "strategy\twindows\twall_s\tdetections"


class TestRemoteBackend:
    def test_subprocess_backend_matches_in_process(self, tmp_path):
        slide, anns = small_slide()
        gt = tmp_path / "s.tsv"
        fileio.write_annotations(gt, slide, anns)
        local = run_slide("s", slide, perfect_backend(slide, anns), PipelineConfig())
        with RemoteBackend(argv=[sys.executable, STUB, str(gt)]) as remote:
            over_wire = run_slide("s", slide, remote, PipelineConfig())
        assert fileio.format_snapshots(local) == fileio.format_snapshots(over_wire)

    def test_noisy_mode_reproduced_over_wire(self, tmp_path):
        slide, anns = small_slide()
        gt = tmp_path / "s.tsv"
        fileio.write_annotations(gt, slide, anns)
        # both sides must see the file-rounded coordinates
        slide, anns = fileio.read_annotations(gt)
        backend = OracleBackend(cfg=OracleConfig(mode="noisy", position_jitter_sd=2.0,
                                                 fp_rate=0.2, fn_rate=0.05,
                                                 score_noise_sd=0.05, rng_seed=0))
        backend.add_slide("s", slide, anns)
        local = run_slide("s", slide, backend, PipelineConfig(rng_seed=0))
        with RemoteBackend(argv=[sys.executable, STUB, str(gt), "noisy"]) as remote:
            over_wire = run_slide("s", slide, remote, PipelineConfig(rng_seed=0))
        assert fileio.format_snapshots(local) == fileio.format_snapshots(over_wire)

    def test_unknown_slide_is_reported(self, tmp_path):
        slide, anns = small_slide()
        gt = tmp_path / "s.tsv"
        fileio.write_annotations(gt, slide, anns)
        backend = OracleBackend(cfg=OracleConfig(mode="perfect"))
        backend.add_slide("s", slide, anns)
        with pytest.raises(BackendError):
            backend.detect("nope", __import__("mitopipe.tiling", fromlist=["Window"]).Window(0, 0, 512))

    def test_endpoint_and_argv_are_exclusive(self):
        with pytest.raises(ValueError):
            RemoteBackend()
        with pytest.raises(ValueError):
            RemoteBackend(endpoint="127.0.0.1:1", argv=["x"])
