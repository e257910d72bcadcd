"""Inference path: corner decoding, grouping, rotated position-sensitive
scoring, and non-maximum suppression.

Candidate boxes are built from pairs of typed corner detections — (TL, TR),
(TR, BR), (BL, BR), (TL, BL) — filtered by relative-position, minimum-side
and short-side-ratio rules, scored against the position-sensitive maps, and
finally deduplicated with rotated NMS.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError
from .geometry import Point, RotatedRect, aabb_iou, rotated_iou
from .targets import CornerSquare, CornerType, DefaultBox, DefaultBoxConfig, OffsetTarget, decode_offsets

# The four corner pairings that can seed a box, with the ordering rule each
# one must respect (axis 0 = x for horizontal pairs, 1 = y for vertical).
PAIR_RULES: tuple[tuple[CornerType, CornerType, int], ...] = (
    (CornerType.TL, CornerType.TR, 0),
    (CornerType.TR, CornerType.BR, 1),
    (CornerType.BL, CornerType.BR, 0),
    (CornerType.TL, CornerType.BL, 1),
)


class CornerDetection(NamedTuple):
    corner_type: CornerType
    position: Point
    short_side: float
    score: float

    def square(self) -> CornerSquare:
        return CornerSquare(self.corner_type, self.position, self.short_side)


@dataclass
class CandidateBox:
    rect: RotatedRect
    source_pair: tuple[CornerType, CornerType]
    seg_score: float | None = None


class Detection(NamedTuple):
    rect: RotatedRect
    score: float


@dataclass(frozen=True)
class PipelineConfig:
    corner_score_threshold: float = 0.5
    corner_nms_iou: float = 0.3
    min_short_side: float = 5.0
    ss_ratio_max: float = 1.5
    grid_order: int = 2
    tau: float = 0.6
    final_nms_iou: float = 0.3
    threads: int = 1

    def __post_init__(self):
        if not (0.0 <= self.corner_score_threshold <= 1.0 and 0.0 <= self.tau <= 1.0):
            raise ConfigError("score thresholds must lie in [0, 1]")
        if not (0.0 <= self.corner_nms_iou <= 1.0 and 0.0 <= self.final_nms_iou <= 1.0):
            raise ConfigError("NMS thresholds must lie in [0, 1]")
        if self.min_short_side < 0 or self.ss_ratio_max < 1.0 or self.grid_order < 1:
            raise ConfigError("invalid size filter or grid order")


def decode_corners(score_maps: Mapping[str, np.ndarray], offset_maps: Mapping[str, np.ndarray],
                   box_cfg: DefaultBoxConfig, cfg: PipelineConfig) -> dict[CornerType, list[CornerDetection]]:
    """Decode per-layer score/offset maps into four typed corner sets.

    Layer maps carry ``k*4*2`` score channels and ``k*4*4`` offset channels
    (scale-major, then corner type, then class/offset component; the scale
    offset component is duplicated and averaged on decode). Cells whose
    corner probability exceeds the threshold are decoded against their
    default box, then each set goes through axis-aligned square NMS.
    """
    h, w = box_cfg.input_size
    q = len(CornerType)
    raw: dict[CornerType, list[CornerDetection]] = {t: [] for t in CornerType}
    for name, stride in box_cfg.strides.items():
        if name not in score_maps or name not in offset_maps:
            raise ConfigError(f"missing maps for layer {name}")
        scores = np.asarray(score_maps[name], dtype=np.float64)
        offsets = np.asarray(offset_maps[name], dtype=np.float64)
        scales = box_cfg.scales[name]
        k = len(scales)
        gh, gw = h // stride, w // stride
        if scores.shape != (k * q * 2, gh, gw):
            raise ConfigError(f"layer {name}: expected score shape {(k * q * 2, gh, gw)}, got {scores.shape}")
        if offsets.shape != (k * q * 4, gh, gw):
            raise ConfigError(f"layer {name}: expected offset shape {(k * q * 4, gh, gw)}, got {offsets.shape}")
        z = scores.reshape(k, q, 2, gh, gw)
        z = z - z.max(axis=2, keepdims=True)
        e = np.exp(z)
        prob = e[:, :, 1] / e.sum(axis=2)
        off = offsets.reshape(k, q, 4, gh, gw)
        for s_idx, t_idx, row, col in np.argwhere(prob > cfg.corner_score_threshold):
            box = DefaultBox(name, int(row), int(col),
                             Point((col + 0.5) * stride, (row + 0.5) * stride), float(scales[s_idx]))
            dss = 0.5 * (off[s_idx, t_idx, 2, row, col] + off[s_idx, t_idx, 3, row, col])
            target = OffsetTarget(off[s_idx, t_idx, 0, row, col], off[s_idx, t_idx, 1, row, col], dss)
            square = decode_offsets(box, target, CornerType(int(t_idx)))
            raw[CornerType(int(t_idx))].append(
                CornerDetection(square.corner_type, square.center, square.side,
                                float(prob[s_idx, t_idx, row, col])))
    return {t: nms_corner_squares(dets, cfg.corner_nms_iou) for t, dets in raw.items()}


def nms_corner_squares(dets: Sequence[CornerDetection], iou_threshold: float) -> list[CornerDetection]:
    """Greedy axis-aligned NMS over the detections' corner squares."""
    ordered = sorted(dets, key=lambda d: (-d.score, d.position.x, d.position.y, d.short_side))
    kept: list[CornerDetection] = []
    for det in ordered:
        box = det.square().aabb()
        if all(aabb_iou(box, other.square().aabb()) <= iou_threshold for other in kept):
            kept.append(det)
    return kept


def build_pair_box(a: CornerDetection, b: CornerDetection, cfg: PipelineConfig) -> CandidateBox | None:
    """Apply the pair rules and build the rotated rectangle, or reject.

    Rules: (1) the pair's relative-position ordering holds strictly,
    (2) the constructed box's shortest side exceeds ``min_short_side``,
    (3) max(ss1, ss2) / min(ss1, ss2) <= ``ss_ratio_max``.
    The box edge runs from ``a`` to ``b`` and extends toward the interior
    implied by the corner types, by the mean of the two predicted sides.
    """
    rule = next((r for r in PAIR_RULES if r[0] == a.corner_type and r[1] == b.corner_type), None)
    if rule is None:
        return None
    axis = rule[2]
    if not a.position[axis] < b.position[axis]:
        return None
    ss1, ss2 = a.short_side, b.short_side
    if min(ss1, ss2) <= 0.0 or max(ss1, ss2) / min(ss1, ss2) > cfg.ss_ratio_max:
        return None
    side = 0.5 * (ss1 + ss2)
    edge = math.hypot(b.position.x - a.position.x, b.position.y - a.position.y)
    if min(edge, side) <= cfg.min_short_side:
        return None
    ux, uy = (b.position.x - a.position.x) / edge, (b.position.y - a.position.y) / edge
    pair = (a.corner_type, b.corner_type)
    if pair == (CornerType.TL, CornerType.TR) or pair == (CornerType.TR, CornerType.BR):
        nx, ny = -uy, ux  # clockwise normal points into the box
    else:
        nx, ny = uy, -ux
    pa, pb = a.position, b.position
    qa = Point(pa.x + side * nx, pa.y + side * ny)
    qb = Point(pb.x + side * nx, pb.y + side * ny)
    if pair == (CornerType.TL, CornerType.TR):
        corners = (pa, pb, qb, qa)
    elif pair == (CornerType.TR, CornerType.BR):
        corners = (qa, pa, pb, qb)
    elif pair == (CornerType.BL, CornerType.BR):
        corners = (qa, qb, pb, pa)
    else:  # (TL, BL)
        corners = (pa, qa, qb, pb)
    return CandidateBox(RotatedRect(corners), pair)


def sample_and_group(corner_sets: Mapping[CornerType, Sequence[CornerDetection]],
                     cfg: PipelineConfig) -> list[CandidateBox]:
    """Enumerate the four pair types over the corner sets and keep every
    pair that passes the rules."""
    out: list[CandidateBox] = []
    for type_a, type_b, _ in PAIR_RULES:
        for a in corner_sets.get(type_a, ()):
            for b in corner_sets.get(type_b, ()):
                cand = build_pair_box(a, b, cfg)
                if cand is not None:
                    out.append(cand)
    return out


def _bin_corners(rect: RotatedRect, grid: int, i: int, j: int) -> tuple[Point, Point, Point, Point]:
    tl, tr, _, bl = rect.corners
    ux, uy = (tr.x - tl.x) / grid, (tr.y - tl.y) / grid
    vx, vy = (bl.x - tl.x) / grid, (bl.y - tl.y) / grid
    ox = tl.x + j * ux + i * vx
    oy = tl.y + j * uy + i * vy
    return (Point(ox, oy), Point(ox + ux, oy + uy),
            Point(ox + ux + vx, oy + uy + vy), Point(ox + vx, oy + vy))


def _pixel_span(points: Sequence[Point], lo: int, hi: int, axis: int) -> tuple[int, int]:
    vals = [p[axis] for p in points]
    start = max(lo, math.ceil(min(vals) - 0.5))
    stop = min(hi, math.floor(max(vals) - 0.5))
    return start, stop


def rps_roi_average_pool(rect: RotatedRect, seg: np.ndarray, grid: int = 2) -> float:
    """Rotated position-sensitive ROI average pooling.

    The box splits into a ``grid x grid`` regular grid of bins; bin ``(i, j)``
    averages channel ``i*grid + j`` over the pixels (center sampling,
    boundary inclusive) inside the bin, and the score is the mean of the bin
    means. Bins without any pixel contribute 0.
    """
    gsq, h, w = seg.shape
    if gsq != grid * grid:
        raise ConfigError(f"segmentation maps have {gsq} channels, expected {grid * grid}")
    total = 0.0
    for i in range(grid):
        for j in range(grid):
            corners = _bin_corners(rect, grid, i, j)
            a, b, _, d = corners
            e1x, e1y = b.x - a.x, b.y - a.y
            e2x, e2y = d.x - a.x, d.y - a.y
            l1 = e1x * e1x + e1y * e1y
            l2 = e2x * e2x + e2y * e2y
            if l1 <= 0.0 or l2 <= 0.0:
                continue
            x0, x1 = _pixel_span(corners, 0, w - 1, 0)
            y0, y1 = _pixel_span(corners, 0, h - 1, 1)
            if x1 < x0 or y1 < y0:
                continue
            cx = np.arange(x0, x1 + 1) + 0.5 - a.x
            cy = np.arange(y0, y1 + 1) + 0.5 - a.y
            s = cx[None, :] * e1x + cy[:, None] * e1y
            t = cx[None, :] * e2x + cy[:, None] * e2y
            inside = (s >= 0.0) & (s <= l1) & (t >= 0.0) & (t <= l2)
            count = int(inside.sum())
            if count == 0:
                continue
            values = seg[i * grid + j, y0:y1 + 1, x0:x1 + 1].astype(np.float64)
            total += float(values[inside].sum()) / count
    return total / (grid * grid)


def rps_roi_average_pool_reference(rect: RotatedRect, seg: np.ndarray, grid: int = 2) -> float:
    """Literal pixel-loop reference for :func:`rps_roi_average_pool`.

    Loops every pixel of each bin's minimum covering rectangle and tests it
    against the bin; kept as the executable contract the vectorized path is
    checked against.
    """
    gsq, h, w = seg.shape
    if gsq != grid * grid:
        raise ConfigError(f"segmentation maps have {gsq} channels, expected {grid * grid}")
    total = 0.0
    for i in range(grid):
        for j in range(grid):
            corners = _bin_corners(rect, grid, i, j)
            a, b, _, d = corners
            e1x, e1y = b.x - a.x, b.y - a.y
            e2x, e2y = d.x - a.x, d.y - a.y
            l1 = e1x * e1x + e1y * e1y
            l2 = e2x * e2x + e2y * e2y
            if l1 <= 0.0 or l2 <= 0.0:
                continue
            x0, x1 = _pixel_span(corners, 0, w - 1, 0)
            y0, y1 = _pixel_span(corners, 0, h - 1, 1)
            count = 0
            acc = 0.0
            for py in range(y0, y1 + 1):
                cy = py + 0.5 - a.y
                for px in range(x0, x1 + 1):
                    cx = px + 0.5 - a.x
                    s = cx * e1x + cy * e1y
                    t = cx * e2x + cy * e2y
                    if 0.0 <= s <= l1 and 0.0 <= t <= l2:
                        count += 1
                        acc += float(seg[i * grid + j, py, px])
            if count:
                total += acc / count
    return total / (grid * grid)


def score_and_filter(candidates: Sequence[CandidateBox], seg: np.ndarray,
                     cfg: PipelineConfig) -> list[CandidateBox]:
    """Score candidates against the segmentation maps; keep score > tau."""
    if cfg.threads > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            scores = list(pool.map(lambda c: rps_roi_average_pool(c.rect, seg, cfg.grid_order), candidates))
    else:
        scores = [rps_roi_average_pool(c.rect, seg, cfg.grid_order) for c in candidates]
    return [replace(c, seg_score=s) for c, s in zip(candidates, scores) if s > cfg.tau]


def _canonical_key(det: Detection):
    return (-det.score, tuple(c for p in det.rect.corners for c in p))


def rotated_nms(detections: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy descending-score suppression under rotated IoU.

    Survivors form an antichain: no two kept boxes overlap above the
    threshold. Candidates are canonicalized (score desc, then corners) so
    the result does not depend on input order.
    """
    ordered = sorted(detections, key=_canonical_key)
    kept: list[Detection] = []
    kept_aabbs = []
    for det in ordered:
        box = det.rect.aabb()
        suppressed = False
        for other, other_box in zip(kept, kept_aabbs):
            # Disjoint axis-aligned hulls cannot exceed any threshold >= 0.
            if box.x_min > other_box.x_max or other_box.x_min > box.x_max \
                    or box.y_min > other_box.y_max or other_box.y_min > box.y_max:
                continue
            if rotated_iou(det.rect, other.rect) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(det)
            kept_aabbs.append(box)
    return kept


def detect(corner_sets: Mapping[CornerType, Sequence[CornerDetection]], seg: np.ndarray,
           cfg: PipelineConfig) -> list[Detection]:
    """Full post-processing: group corners, score, filter at tau, NMS."""
    candidates = sample_and_group(corner_sets, cfg)
    scored = score_and_filter(candidates, seg, cfg)
    detections = [Detection(c.rect, float(c.seg_score)) for c in scored]
    return rotated_nms(detections, cfg.final_nms_iou)


def detect_from_maps(score_maps: Mapping[str, np.ndarray], offset_maps: Mapping[str, np.ndarray],
                     seg: np.ndarray, box_cfg: DefaultBoxConfig, cfg: PipelineConfig) -> list[Detection]:
    """Decode raw network maps, then run :func:`detect`."""
    corner_sets = decode_corners(score_maps, offset_maps, box_cfg, cfg)
    return detect(corner_sets, seg, cfg)
