import math

import numpy as np
import pytest

from cornertext.errors import ConfigError
from cornertext.geometry import Point, RotatedRect, rotated_iou
from cornertext.pipeline import (CornerDetection, Detection, PipelineConfig,
                                 decode_corners, detect, detect_from_maps, rotated_nms,
                                 rps_roi_average_pool, rps_roi_average_pool_reference,
                                 sample_and_group, score_and_filter)
from cornertext.synth import SynthConfig, generate_scene
from cornertext.targets import CornerType, DefaultBoxConfig, ps_masks

from oracles import nms_reference

CFG = PipelineConfig()


def det(ctype, x, y, ss=10.0, score=1.0):
    return CornerDetection(ctype, Point(x, y), ss, score)


def small_box_cfg():
    return DefaultBoxConfig(input_size=(64, 64), strides={"F4": 8}, scales={"F4": (16, 24)})


def empty_maps(cfg, background=10.0):
    score_maps, offset_maps = {}, {}
    for name, stride in cfg.strides.items():
        k = len(cfg.scales[name])
        gh, gw = cfg.input_size[0] // stride, cfg.input_size[1] // stride
        scores = np.zeros((k * 4 * 2, gh, gw), dtype=np.float32)
        scores[0::2] = background  # background logit dominates everywhere
        score_maps[name] = scores
        offset_maps[name] = np.zeros((k * 4 * 4, gh, gw), dtype=np.float32)
    return score_maps, offset_maps


class TestDecodeCorners:
    def test_all_background(self):
        cfg = small_box_cfg()
        sets = decode_corners(*empty_maps(cfg), cfg, CFG)
        assert all(len(v) == 0 for v in sets.values())

    def test_single_cell_zero_offsets(self):
        cfg = small_box_cfg()
        score_maps, offset_maps = empty_maps(cfg)
        # scale index 1 (side 24), type TL, cell (2, 3): corner logit wins
        ch = (1 * 4 + CornerType.TL) * 2
        score_maps["F4"][ch, 2, 3] = 0.0
        score_maps["F4"][ch + 1, 2, 3] = 4.0
        sets = decode_corners(score_maps, offset_maps, cfg, CFG)
        assert len(sets[CornerType.TL]) == 1
        d = sets[CornerType.TL][0]
        assert d.position == Point(3.5 * 8, 2.5 * 8)
        assert d.short_side == pytest.approx(24.0)
        assert d.score == pytest.approx(1 / (1 + math.exp(-4.0)))
        assert all(len(sets[t]) == 0 for t in CornerType if t != CornerType.TL)

    def test_coincident_candidates_nms(self):
        cfg = small_box_cfg()
        score_maps, offset_maps = empty_maps(cfg)
        ch16 = (0 * 4 + CornerType.TL) * 2
        ch24 = (1 * 4 + CornerType.TL) * 2
        # same cell, both scales fire; decode both to the same square
        score_maps["F4"][ch16 + 1, 2, 3] = 10.0
        score_maps["F4"][ch16, 2, 3] = 0.0
        score_maps["F4"][ch24 + 1, 2, 3] = 2.0
        score_maps["F4"][ch24, 2, 3] = 0.0
        offset_maps["F4"][(1 * 4 + CornerType.TL) * 4 + 2, 2, 3] = math.log(24 / 16)
        offset_maps["F4"][(1 * 4 + CornerType.TL) * 4 + 3, 2, 3] = math.log(24 / 16)
        sets = decode_corners(score_maps, offset_maps, cfg, CFG)
        assert len(sets[CornerType.TL]) == 1
        assert sets[CornerType.TL][0].score > 0.99

    def test_shape_mismatch(self):
        cfg = small_box_cfg()
        score_maps, offset_maps = empty_maps(cfg)
        score_maps["F4"] = score_maps["F4"][:, :4, :]
        with pytest.raises(ConfigError):
            decode_corners(score_maps, offset_maps, cfg, CFG)


class TestSampleAndGroup:
    def test_tl_tr_construction(self):
        cands = sample_and_group({CornerType.TL: [det(CornerType.TL, 0, 0)],
                                  CornerType.TR: [det(CornerType.TR, 40, 0)]}, CFG)
        assert len(cands) == 1
        assert cands[0].rect.corners == (Point(0, 0), Point(40, 0), Point(40, 10), Point(0, 10))
        assert cands[0].source_pair == (CornerType.TL, CornerType.TR)

    def test_ratio_rejection(self):
        cands = sample_and_group({CornerType.TL: [det(CornerType.TL, 0, 0, ss=10)],
                                  CornerType.TR: [det(CornerType.TR, 40, 0, ss=16)]}, CFG)
        assert cands == []  # 16/10 = 1.6 > 1.5

    def test_ratio_boundary_kept(self):
        cands = sample_and_group({CornerType.TL: [det(CornerType.TL, 0, 0, ss=10)],
                                  CornerType.TR: [det(CornerType.TR, 40, 0, ss=15)]}, CFG)
        assert len(cands) == 1  # ratio exactly 1.5 passes

    def test_position_rule_rejection(self):
        cands = sample_and_group({CornerType.TL: [det(CornerType.TL, 10, 0)],
                                  CornerType.TR: [det(CornerType.TR, 0, 0)]}, CFG)
        assert cands == []

    def test_min_short_side_rejection(self):
        sets = {CornerType.TL: [det(CornerType.TL, 0, 0, ss=4.5)],
                CornerType.TR: [det(CornerType.TR, 40, 0, ss=4.5)]}
        assert sample_and_group(sets, CFG) == []

    def test_all_four_pair_types(self):
        rect = RotatedRect.from_center_form(50, 50, 40, 20, 0.0)
        sets = {t: [det(t, rect.corners[int(t)].x, rect.corners[int(t)].y, ss=20)]
                for t in CornerType}
        cands = sample_and_group(sets, CFG)
        assert {c.source_pair for c in cands} == {
            (CornerType.TL, CornerType.TR), (CornerType.TR, CornerType.BR),
            (CornerType.BL, CornerType.BR), (CornerType.TL, CornerType.BL)}

    def test_vertical_pair_construction(self):
        cands = sample_and_group({CornerType.TL: [det(CornerType.TL, 0, 0, ss=10)],
                                  CornerType.BL: [det(CornerType.BL, 0, 20, ss=10)]}, CFG)
        assert len(cands) == 1
        assert cands[0].rect.corners == (Point(0, 0), Point(10, 0), Point(10, 20), Point(0, 20))

    def test_output_bound(self):
        rng = np.random.default_rng(0)
        sets = {t: [det(t, rng.uniform(0, 100), rng.uniform(0, 100), ss=rng.uniform(8, 14))
                    for _ in range(5)] for t in CornerType}
        cands = sample_and_group(sets, CFG)
        assert len(cands) <= 4 * 5 * 5

    def test_constructed_boxes_are_rectangles(self):
        from test_geometry import assert_rectangular
        rng = np.random.default_rng(8)
        sets = {t: [det(t, rng.uniform(0, 100), rng.uniform(0, 100), ss=rng.uniform(8, 14))
                    for _ in range(6)] for t in CornerType}
        cands = sample_and_group(sets, CFG)
        assert cands
        for c in cands:
            assert_rectangular(c.rect)


class TestRpsPooling:
    def test_perfect_labels_axis_aligned(self):
        rect = RotatedRect((Point(0, 0), Point(4, 0), Point(4, 4), Point(0, 4)))
        masks = ps_masks([rect], 2, (8, 8))
        assert rps_roi_average_pool(rect, masks, 2) == 1.0

    def test_all_zero_maps(self):
        rect = RotatedRect((Point(0, 0), Point(4, 0), Point(4, 4), Point(0, 4)))
        assert rps_roi_average_pool(rect, np.zeros((4, 8, 8), np.float32), 2) == 0.0

    def test_fast_equals_reference(self):
        rng = np.random.default_rng(1)
        for _ in range(60):
            h, w = (int(v) for v in rng.integers(20, 56, size=2))
            g = int(rng.integers(1, 4))
            seg = rng.random((g * g, h, w)).astype(np.float32)
            rect = RotatedRect.from_center_form(
                rng.uniform(4, w - 4), rng.uniform(4, h - 4),
                rng.uniform(3, w), rng.uniform(3, h), rng.uniform(-math.pi / 2, math.pi / 2))
            fast = rps_roi_average_pool(rect, seg, g)
            ref = rps_roi_average_pool_reference(rect, seg, g)
            assert fast == pytest.approx(ref, abs=1e-9)

    def test_perfect_labels_rotated_high(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            rect = RotatedRect.from_center_form(
                rng.uniform(25, 40), rng.uniform(25, 40),
                rng.uniform(10, 28), rng.uniform(10, 28), rng.uniform(-1.3, 1.3))
            masks = ps_masks([rect], 2, (64, 64))
            assert rps_roi_average_pool(rect, masks, 2) >= 0.95

    def test_translation_invariance_integer_offsets(self):
        rng = np.random.default_rng(3)
        rect = RotatedRect.from_center_form(20, 20, 14, 9, 0.6)
        seg = rng.random((4, 64, 64)).astype(np.float32)
        base = rps_roi_average_pool(rect, seg, 2)
        for dx, dy in ((5, 0), (0, 7), (3, 11)):
            shifted_seg = np.zeros_like(seg)
            shifted_seg[:, dy:, dx:] = seg[:, :64 - dy, :64 - dx]
            shifted = rps_roi_average_pool(rect.translated(dx, dy), shifted_seg, 2)
            assert shifted == pytest.approx(base, abs=1e-6)

    def test_channel_count_validated(self):
        rect = RotatedRect((Point(0, 0), Point(4, 0), Point(4, 4), Point(0, 4)))
        with pytest.raises(ConfigError):
            rps_roi_average_pool(rect, np.zeros((3, 8, 8), np.float32), 2)


class TestScoreAndFilter:
    def test_perfect_candidate_survives(self):
        rect = RotatedRect((Point(2, 2), Point(14, 2), Point(14, 10), Point(2, 10)))
        masks = ps_masks([rect], 2, (16, 16))
        sets = {t: [det(t, rect.corners[int(t)].x, rect.corners[int(t)].y, ss=8)]
                for t in CornerType}
        cands = sample_and_group(sets, CFG)
        kept = score_and_filter(cands, masks, CFG)
        assert kept and all(c.seg_score > CFG.tau for c in kept)
        exact = [c for c in kept if c.source_pair == (CornerType.TL, CornerType.TR)]
        assert exact and exact[0].seg_score == pytest.approx(1.0)

    def test_zero_map_candidate_removed(self):
        sets = {CornerType.TL: [det(CornerType.TL, 2, 2, ss=8)],
                CornerType.TR: [det(CornerType.TR, 14, 2, ss=8)]}
        cands = sample_and_group(sets, CFG)
        assert score_and_filter(cands, np.zeros((4, 16, 16), np.float32), CFG) == []

    def test_score_exactly_tau_removed(self):
        rect = RotatedRect((Point(0, 0), Point(8, 0), Point(8, 8), Point(0, 8)))
        masks = ps_masks([rect], 2, (16, 16))
        cand = sample_and_group({CornerType.TL: [det(CornerType.TL, 0, 0, ss=8)],
                                 CornerType.TR: [det(CornerType.TR, 8, 0, ss=8)]}, CFG)
        score = rps_roi_average_pool(cand[0].rect, masks, 2)
        cfg_at = PipelineConfig(tau=score)  # threshold equal to the score
        assert score_and_filter(cand, masks, cfg_at) == []

    def test_threads_equal_serial(self):
        rng = np.random.default_rng(4)
        seg = rng.random((4, 64, 64)).astype(np.float32)
        sets = {t: [det(t, rng.uniform(10, 50), rng.uniform(10, 50), ss=rng.uniform(8, 12))
                    for _ in range(4)] for t in CornerType}
        cands = sample_and_group(sets, PipelineConfig(tau=0.0))
        serial = [c.seg_score for c in score_and_filter(cands, seg, PipelineConfig(tau=0.0))]
        threaded = [c.seg_score for c in score_and_filter(cands, seg, PipelineConfig(tau=0.0, threads=4))]
        assert serial == threaded


class TestRotatedNms:
    def test_single_box(self):
        rect = RotatedRect.from_center_form(10, 10, 8, 4, 0.2)
        assert rotated_nms([Detection(rect, 0.9)], 0.3) == [Detection(rect, 0.9)]

    def test_identical_boxes_one_survivor(self):
        rect = RotatedRect.from_center_form(10, 10, 8, 4, 0.2)
        kept = rotated_nms([Detection(rect, 0.9), Detection(rect, 0.8)], 0.3)
        assert kept == [Detection(rect, 0.9)]

    def test_survivors_form_antichain(self):
        rng = np.random.default_rng(5)
        dets = [Detection(RotatedRect.from_center_form(
            rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(5, 25),
            rng.uniform(5, 25), rng.uniform(-1.5, 1.5)), float(rng.random()))
            for _ in range(80)]
        kept = rotated_nms(dets, 0.3)
        for i, a in enumerate(kept):
            for b in kept[i + 1:]:
                assert rotated_iou(a.rect, b.rect) <= 0.3

    def test_matches_reference(self):
        rng = np.random.default_rng(6)
        dets = [Detection(RotatedRect.from_center_form(
            rng.uniform(0, 80), rng.uniform(0, 80), rng.uniform(5, 30),
            rng.uniform(5, 30), rng.uniform(-1.5, 1.5)), float(rng.random()))
            for _ in range(100)]
        assert rotated_nms(dets, 0.3) == nms_reference(dets, 0.3)

    def test_input_order_free(self):
        rng = np.random.default_rng(7)
        dets = [Detection(RotatedRect.from_center_form(
            rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(5, 20),
            rng.uniform(5, 20), rng.uniform(-1, 1)), float(rng.random()))
            for _ in range(30)]
        kept = rotated_nms(dets, 0.3)
        assert rotated_nms(dets[::-1], 0.3) == kept


class TestDetect:
    def test_perfect_scene_three_boxes(self):
        scene = generate_scene(SynthConfig(box_count=(3, 3)), seed=11)
        dets = detect(scene.corner_sets, scene.masks, CFG)
        assert len(dets) == 3
        for d in dets:
            assert max(rotated_iou(d.rect, gt) for gt in scene.annotation.boxes) >= 0.95

    def test_empty_corner_sets(self):
        assert detect({t: [] for t in CornerType}, np.zeros((4, 16, 16), np.float32), CFG) == []

    def test_duplicates_from_pair_types_collapse(self):
        rect = RotatedRect((Point(4, 4), Point(44, 4), Point(44, 24), Point(4, 24)))
        masks = ps_masks([rect], 2, (48, 48))
        sets = {t: [det(t, rect.corners[int(t)].x, rect.corners[int(t)].y, ss=20)]
                for t in CornerType}
        cands = sample_and_group(sets, CFG)
        assert len(cands) == 4
        dets = detect(sets, masks, CFG)
        assert len(dets) == 1
        assert rotated_iou(dets[0].rect, rect) == pytest.approx(1.0, abs=1e-9)

    def test_deterministic(self):
        scene = generate_scene(SynthConfig(box_count=(4, 6)), seed=13)
        a = detect(scene.corner_sets, scene.masks, CFG)
        b = detect(scene.corner_sets, scene.masks, CFG)
        assert a == b

    def test_tau_monotonicity(self):
        scene = generate_scene(SynthConfig(box_count=(4, 6)), seed=17)
        counts = []
        for tau in (0.2, 0.4, 0.6, 0.8, 0.95):
            cfg = PipelineConfig(tau=tau)
            counts.append(len(detect(scene.corner_sets, scene.masks, cfg)))
        assert counts == sorted(counts, reverse=True)

    def test_detect_from_maps_roundtrip(self):
        # Encode one synthetic corner layout into maps and decode end to end.
        cfg = small_box_cfg()
        rect = RotatedRect((Point(8, 8), Point(40, 8), Point(40, 28), Point(8, 28)))
        masks = ps_masks([rect], 2, (64, 64))
        score_maps, offset_maps = empty_maps(cfg)
        from cornertext.targets import CornerSquare, DefaultBox, encode_offsets
        for t in CornerType:
            corner = rect.corners[int(t)]
            row, col = int(corner.y // 8), int(corner.x // 8)
            box = DefaultBox("F4", row, col, Point((col + 0.5) * 8, (row + 0.5) * 8), 24.0)
            off = encode_offsets(box, CornerSquare(t, corner, 20.0))
            ch = (1 * 4 + int(t)) * 2
            score_maps["F4"][ch + 1, row, col] = 8.0
            score_maps["F4"][ch, row, col] = 0.0
            base = (1 * 4 + int(t)) * 4
            offset_maps["F4"][base + 0, row, col] = off.dx
            offset_maps["F4"][base + 1, row, col] = off.dy
            offset_maps["F4"][base + 2, row, col] = off.dss
            offset_maps["F4"][base + 3, row, col] = off.dss
        dets = detect_from_maps(score_maps, offset_maps, masks, cfg, CFG)
        assert len(dets) == 1
        assert rotated_iou(dets[0].rect, rect) >= 0.99


class TestPipelineConfig:
    def test_standard_defaults(self):
        cfg = PipelineConfig()
        assert cfg.corner_score_threshold == 0.5
        assert cfg.min_short_side == 5.0
        assert cfg.ss_ratio_max == 1.5
        assert cfg.grid_order == 2
        assert cfg.tau == 0.6
        assert cfg.final_nms_iou == 0.3

    def test_invalid_ranges(self):
        with pytest.raises(ConfigError):
            PipelineConfig(tau=1.5)
        with pytest.raises(ConfigError):
            PipelineConfig(grid_order=0)
