import math

import numpy as np
import pytest

from mitopipe.geometry import Annotation, CellClass, Point, SlideDims
from mitopipe.oracle import (
    OracleConfig,
    degraded_config,
    oracle_adjust,
    oracle_classify,
    oracle_detect,
)
from mitopipe.tiling import Window

SLIDE = SlideDims(100000, 100000)


def mito(x, y):
    return Annotation(Point(x, y), CellClass.MITOSIS)


NOISY = OracleConfig(
    mode="noisy", position_jitter_sd=3.0, fp_rate=0.2, fn_rate=0.1,
    score_noise_sd=0.1, border_degradation=3.0, rng_seed=42,
)


class TestPerfectDetect:
    CFG = OracleConfig(mode="perfect")

    def test_exact_centers_and_scores(self):
        w = Window(0, 0, 512)
        gt = [mito(100, 100), mito(600, 100), Annotation(Point(50, 50), CellClass.MITOSIS_LIKE)]
        dets = oracle_detect(w, gt, self.CFG, SLIDE)
        assert len(dets) == 1
        assert dets[0].center == Point(100, 100)
        assert dets[0].score == 1.0
        assert dets[0].source_window is w

    def test_window_boundary_inclusive(self):
        w = Window(0, 0, 512)
        dets = oracle_detect(w, [mito(512, 512)], self.CFG, SLIDE)
        assert len(dets) == 1


class TestNoisyDetect:
    def test_deterministic_per_window(self):
        w = Window(1024, 2048, 512)
        gt = [mito(1100, 2100), mito(1400, 2400)]
        a = oracle_detect(w, gt, NOISY, SLIDE)
        b = oracle_detect(w, gt, NOISY, SLIDE)
        assert a == b

    def test_seed_depends_on_window_origin(self):
        gt = [mito(600, 600)]
        a = oracle_detect(Window(512, 512, 512), gt, NOISY, SLIDE)
        b = oracle_detect(Window(256, 256, 512, index=3), gt, NOISY, SLIDE)
        centers_a = {(d.center.x, d.center.y) for d in a}
        centers_b = {(d.center.x, d.center.y) for d in b}
        assert centers_a != centers_b  # different draws for different windows

    def test_fn_rate_statistic(self):
        # one interior GT per window over many windows: miss fraction ~ fn_rate
        n = 4000
        misses = 0
        for i in range(n):
            w = Window(1024 * (i % 60), 1024 * (i // 60), 512)
            gt = [mito(w.x + 256, w.y + 256)]
            dets = [d for d in oracle_detect(w, gt, NOISY, SLIDE) if d.score > 0]
            near = [d for d in dets if d.center.distance_to(gt[0].center) < 50]
            misses += not near
        se = math.sqrt(NOISY.fn_rate * (1 - NOISY.fn_rate) / n)
        assert abs(misses / n - NOISY.fn_rate) < 4 * se

    def test_fp_poisson_mean(self):
        n = 4000
        total_fp = 0
        for i in range(n):
            w = Window(1024 * (i % 60), 1024 * (i // 60), 512)
            total_fp += len(oracle_detect(w, [], NOISY, SLIDE))
        se = math.sqrt(NOISY.fp_rate / n)
        assert abs(total_fp / n - NOISY.fp_rate) < 4 * se

    def test_border_jitter_amplified(self):
        interior_err, border_err = [], []
        for i in range(1500):
            w = Window(1024 * (i % 60), 1024 * (i // 60), 512)
            for gt_pt, bucket in (
                (mito(w.x + 256, w.y + 256), interior_err),
                (mito(w.x + 5, w.y + 256), border_err),
            ):
                dets = oracle_detect(w, [gt_pt], NOISY, SLIDE)
                if dets:
                    bucket.append(dets[0].center.distance_to(gt_pt.center))
        assert np.mean(border_err) > 2 * np.mean(interior_err)

    def test_scores_bounded(self):
        for i in range(200):
            w = Window(512 * i, 0, 512)
            for d in oracle_detect(w, [mito(w.x + 10, 30)], NOISY, SLIDE):
                assert 0.0 <= d.score <= 1.0


class TestAdjust:
    def test_perfect_points_at_nearest_gt(self):
        gt = [mito(1000, 1000)]
        p = oracle_adjust(Point(1005, 997), gt, OracleConfig(mode="perfect"))
        assert (p.d_x, p.d_y) == (-5.0, 3.0)
        assert p.positive_score == 1.0

    def test_perfect_no_target(self):
        p = oracle_adjust(Point(0, 0), [mito(5000, 5000)], OracleConfig(mode="perfect"))
        assert (p.d_x, p.d_y) == (0.0, 0.0)
        assert p.positive_score == 0.0

    def test_offset_clipped(self):
        gt = [mito(1000, 1000)]
        p = oracle_adjust(Point(970, 1000), gt, OracleConfig(mode="perfect"))
        assert p.d_x == 12.0

    def test_noisy_keyed_on_quantized_center(self):
        gt = [mito(1000, 1000)]
        cfg = degraded_config(1)
        a = oracle_adjust(Point(1003.25, 998.5), gt, cfg)
        b = oracle_adjust(Point(1003.25, 998.5), gt, cfg)
        c = oracle_adjust(Point(1003.5, 998.5), gt, cfg)
        assert a == b
        assert a != c

    def test_radius_boundary(self):
        cfg = OracleConfig(mode="perfect", adjust_radius=50.0)
        near = oracle_adjust(Point(1050, 1000), [mito(1000, 1000)], cfg)
        far = oracle_adjust(Point(1051, 1000), [mito(1000, 1000)], cfg)
        assert near.positive_score == 1.0
        assert far.positive_score == 0.0


class TestClassify:
    def test_perfect(self):
        gt = [mito(1000, 1000)]
        cfg = OracleConfig(mode="perfect")
        assert oracle_classify(Point(1010, 1000), gt, cfg) == 1.0
        assert oracle_classify(Point(1026, 1000), gt, cfg) == 0.0

    def test_noisy_levels(self):
        gt = [mito(1000, 1000)]
        cfg = degraded_config(2)
        hi = oracle_classify(Point(1010, 1000), gt, cfg)
        lo = oracle_classify(Point(5000, 5000), gt, cfg)
        assert hi > 0.85 and lo < 0.15


def test_mode_validation():
    with pytest.raises(ValueError):
        OracleConfig(mode="fuzzy")
    with pytest.raises(ValueError):
        OracleConfig(fn_rate=1.5)


def test_degraded_preset_is_noisy():
    cfg = degraded_config(9)
    assert cfg.mode == "noisy"
    assert cfg.border_degradation > 1.0
    assert cfg.fp_score_range[1] < 0.5  # injected FPs stay sub-threshold
