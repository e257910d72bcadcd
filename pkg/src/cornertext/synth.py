"""Synthetic-scene oracle.

Generates ground-truth scenes together with the perfect corner detections
and position-sensitive masks a detector head would emit, plus a corruption
pass (jitter, drops, spurious corners, mask bit flips) for robustness
testing. All randomness flows from a single seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SynthError
from .geometry import Point, RotatedRect, canonical_corner_order, rotated_iou
from .pipeline import CornerDetection
from .targets import CornerType, ps_masks
from .tensorio import SceneAnnotation

EDGE_MARGIN = 4.0  # boxes stay this far inside the frame
_PLACE_TRIES = 400
_SCENE_TRIES = 40


@dataclass(frozen=True)
class SynthConfig:
    image_size: tuple[int, int] = (512, 512)  # (height, width)
    box_count: tuple[int, int] = (1, 6)
    theta_range_deg: tuple[float, float] = (-80.0, 80.0)
    short_side_range: tuple[float, float] = (8.0, 32.0)
    aspect_range: tuple[float, float] = (1.0, 4.0)
    min_separation: float = 24.0
    jitter_sigma: float = 0.0
    score_noise: float = 0.0
    drop_prob: float = 0.0
    spurious_rate: float = 0.0
    seg_flip_rate: float = 0.0
    grid_order: int = 2

    def __post_init__(self):
        if self.box_count[0] < 1 or self.box_count[0] > self.box_count[1]:
            raise ValueError("box_count range is empty")
        if self.short_side_range[0] < 8.0:
            raise ValueError("short sides below 8 px are not representable reliably")
        for p in (self.drop_prob, self.spurious_rate, self.seg_flip_rate):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")


@dataclass
class Scene:
    annotation: SceneAnnotation
    corner_sets: dict[CornerType, list[CornerDetection]]
    masks: np.ndarray


def _sample_box(cfg: SynthConfig, rng: np.random.Generator) -> RotatedRect | None:
    h, w = cfg.image_size
    ss = rng.uniform(*cfg.short_side_range)
    aspect = rng.uniform(*cfg.aspect_range)
    theta = math.radians(rng.uniform(*cfg.theta_range_deg))
    bw, bh = ss * aspect, ss
    half_x = (bw * abs(math.cos(theta)) + bh * abs(math.sin(theta))) / 2.0
    half_y = (bw * abs(math.sin(theta)) + bh * abs(math.cos(theta))) / 2.0
    lo_x, hi_x = EDGE_MARGIN + half_x, w - EDGE_MARGIN - half_x
    lo_y, hi_y = EDGE_MARGIN + half_y, h - EDGE_MARGIN - half_y
    if lo_x >= hi_x or lo_y >= hi_y:
        return None
    cx = rng.uniform(lo_x, hi_x)
    cy = rng.uniform(lo_y, hi_y)
    return canonical_corner_order(RotatedRect.from_center_form(cx, cy, bw, bh, theta).corners)


def _separated(candidate: RotatedRect, placed: list[RotatedRect], sep: float) -> bool:
    cx, cy, cw, ch, ct = candidate.to_center_form()
    grown_c = RotatedRect.from_center_form(cx, cy, cw + sep, ch + sep, ct)
    for other in placed:
        ox, oy, ow, oh, ot = other.to_center_form()
        grown_o = RotatedRect.from_center_form(ox, oy, ow + sep, oh + sep, ot)
        if rotated_iou(grown_c, grown_o) > 0.0:
            return False
        # Same-type corners must also stay apart so per-type corner NMS
        # cannot suppress one box's corner with another's.
        for i in range(4):
            a, b = candidate.corners[i], other.corners[i]
            if math.hypot(a.x - b.x, a.y - b.y) < sep:
                return False
    return True


def generate_scene(cfg: SynthConfig, seed: int) -> Scene:
    """Deterministically generate a scene of separated oriented boxes with
    exact corner detections (score 1.0) and ideal masks."""
    rng = np.random.default_rng(seed)
    h, w = cfg.image_size
    for _ in range(_SCENE_TRIES):
        count = int(rng.integers(cfg.box_count[0], cfg.box_count[1] + 1))
        placed: list[RotatedRect] = []
        tries = 0
        while len(placed) < count and tries < _PLACE_TRIES:
            tries += 1
            rect = _sample_box(cfg, rng)
            if rect is None:
                continue
            if _separated(rect, placed, cfg.min_separation):
                placed.append(rect)
        if len(placed) == count:
            corner_sets: dict[CornerType, list[CornerDetection]] = {t: [] for t in CornerType}
            for rect in placed:
                side = rect.short_side
                for t in CornerType:
                    corner_sets[t].append(CornerDetection(t, rect.corners[int(t)], side, 1.0))
            masks = ps_masks(placed, cfg.grid_order, cfg.image_size)
            return Scene(SceneAnnotation(w, h, placed), corner_sets, masks)
    raise SynthError(f"could not place {cfg.box_count} boxes in {w}x{h} "
                     f"with separation {cfg.min_separation} (seed {seed})")


def corrupt(scene: Scene, cfg: SynthConfig, seed: int) -> Scene:
    """Apply the configured noise to a scene's detector-facing outputs.

    Ground truth stays untouched; corner positions get Gaussian jitter
    (short sides unchanged), corners drop out independently, spurious
    corners appear at the configured rate, and mask bits flip pixelwise.
    Zero noise reproduces the input values exactly.
    """
    h, w = cfg.image_size
    rng = np.random.default_rng(seed)
    corner_sets: dict[CornerType, list[CornerDetection]] = {t: [] for t in CornerType}
    for t in CornerType:
        for det in scene.corner_sets[t]:
            dropped = cfg.drop_prob > 0.0 and rng.random() < cfg.drop_prob
            jx, jy = rng.normal(0.0, cfg.jitter_sigma, size=2) if cfg.jitter_sigma > 0.0 else (0.0, 0.0)
            score = det.score
            if cfg.score_noise > 0.0:
                score = float(np.clip(det.score - abs(rng.normal(0.0, cfg.score_noise)), 0.0, 1.0))
            if dropped:
                continue
            corner_sets[t].append(det._replace(
                position=Point(det.position.x + jx, det.position.y + jy), score=score))
        for det in scene.corner_sets[t]:
            if cfg.spurious_rate > 0.0 and rng.random() < cfg.spurious_rate:
                corner_sets[t].append(CornerDetection(
                    t,
                    Point(rng.uniform(0.0, w), rng.uniform(0.0, h)),
                    float(rng.uniform(*cfg.short_side_range)),
                    float(rng.uniform(0.6, 1.0)),
                ))
    masks = scene.masks
    if cfg.seg_flip_rate > 0.0:
        flips = rng.random(masks.shape) < cfg.seg_flip_rate
        masks = np.where(flips, 1.0 - masks, masks).astype(np.float32)
    else:
        masks = masks.copy()
    return Scene(scene.annotation, corner_sets, masks)
