"""Ground-truth target generation.

Turns annotated oriented boxes into everything the detector trains on:
canonically ordered corners, corner squares, position-sensitive masks,
the default-box grid, anchor matching, and offset encoding/decoding.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DegenerateGeometry, InvalidBox
from .geometry import AxisAlignedBox, Point, RotatedRect, canonical_corner_order

__all__ = [
    "CornerType", "CornerSquare", "DefaultBox", "DefaultBoxConfig", "OffsetTarget",
    "Match", "MatchResult", "canonical_corner_order", "corner_squares", "ps_masks",
    "generate_default_boxes", "match", "encode_offsets", "decode_offsets",
]


class CornerType(enum.IntEnum):
    TL = 0
    TR = 1
    BR = 2
    BL = 3


class CornerSquare(NamedTuple):
    """A corner re-encoded as an axis-aligned square whose side is the short
    side of the owning box."""

    corner_type: CornerType
    center: Point
    side: float

    def aabb(self) -> AxisAlignedBox:
        h = self.side / 2.0
        return AxisAlignedBox(self.center.x - h, self.center.y - h,
                              self.center.x + h, self.center.y + h)


class DefaultBox(NamedTuple):
    """Square anchor at one feature-grid cell."""

    layer: str
    row: int
    col: int
    center: Point
    side: float

    def aabb(self) -> AxisAlignedBox:
        h = self.side / 2.0
        return AxisAlignedBox(self.center.x - h, self.center.y - h,
                              self.center.x + h, self.center.y + h)


# Default per-layer anchor scales; F3 keeps its published non-monotone order
# (order has no semantic effect). Strides follow standard VGG/SSD
# downsampling for a 512 input and are configurable.
DEFAULT_SCALES: dict[str, tuple[int, ...]] = {
    "F3": (4, 8, 6, 10, 12, 16),
    "F4": (20, 24, 28, 32),
    "F7": (36, 40, 44, 48),
    "F8": (56, 64, 72, 80),
    "F9": (88, 96, 104, 112),
    "F10": (124, 136, 148, 160),
    "F11": (184, 208, 232, 256),
}

DEFAULT_STRIDES: dict[str, int] = {
    "F3": 4, "F4": 8, "F7": 16, "F8": 32, "F9": 64, "F10": 128, "F11": 256,
}


@dataclass(frozen=True)
class DefaultBoxConfig:
    input_size: tuple[int, int] = (512, 512)  # (height, width)
    strides: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_STRIDES))
    scales: dict[str, tuple[int, ...]] = field(default_factory=lambda: dict(DEFAULT_SCALES))

    def layers(self) -> list[str]:
        return list(self.strides)

    def expected_count(self) -> int:
        h, w = self.input_size
        return sum((h // s) * (w // s) * len(self.scales[name])
                   for name, s in self.strides.items())


class OffsetTarget(NamedTuple):
    """Offsets of a corner square relative to a default box; the scale term
    is duplicated on the wire to mirror the 4-channel regression head."""

    dx: float
    dy: float
    dss: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dss, self.dss], dtype=np.float64)


def corner_squares(rect: RotatedRect) -> tuple[CornerSquare, CornerSquare, CornerSquare, CornerSquare]:
    """One square per corner, all with side equal to the box's short side."""
    side = rect.short_side
    if side <= 0.0:
        raise DegenerateGeometry("box has zero short side")
    return tuple(CornerSquare(CornerType(i), rect.corners[i], side) for i in range(4))  # type: ignore[return-value]


def ps_masks(boxes: Sequence[RotatedRect], grid: int = 2,
             size: tuple[int, int] = (512, 512)) -> np.ndarray:
    """Position-sensitive masks: grid**2 channels at image resolution.

    Channel ``i*grid + j`` (row-major from the top-left corner, rows along
    the TL->BL edge) is 1 where a pixel center falls in that bin of any box.
    Pixel (x, y) has its center at (x + 0.5, y + 0.5); the bins of a single
    box partition it (half-open internal bin edges).
    """
    if grid < 1:
        raise ConfigError(f"grid order must be >= 1, got {grid}")
    h, w = size
    masks = np.zeros((grid * grid, h, w), dtype=np.float32)
    for rect in boxes:
        tl, tr, _, bl = rect.corners
        ux, uy = tr.x - tl.x, tr.y - tl.y
        vx, vy = bl.x - tl.x, bl.y - tl.y
        lu = ux * ux + uy * uy
        lv = vx * vx + vy * vy
        if lu <= 0.0 or lv <= 0.0:
            continue  # zero-area boxes mark nothing
        box = rect.aabb()
        x0 = max(0, math.ceil(box.x_min - 0.5))
        x1 = min(w - 1, math.floor(box.x_max - 0.5))
        y0 = max(0, math.ceil(box.y_min - 0.5))
        y1 = min(h - 1, math.floor(box.y_max - 0.5))
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1)
        ys = np.arange(y0, y1 + 1)
        cx = xs + 0.5 - tl.x
        cy = ys + 0.5 - tl.y
        s = (cx[None, :] * ux + cy[:, None] * uy) / lu
        t = (cx[None, :] * vx + cy[:, None] * vy) / lv
        inside = (s >= 0.0) & (s <= 1.0) & (t >= 0.0) & (t <= 1.0)
        if not inside.any():
            continue
        col = np.clip(np.floor(s * grid), 0, grid - 1).astype(np.intp)
        row = np.clip(np.floor(t * grid), 0, grid - 1).astype(np.intp)
        iy, ix = np.nonzero(inside)
        masks[row[iy, ix] * grid + col[iy, ix], ys[iy], xs[ix]] = 1.0
    return masks


def generate_default_boxes(cfg: DefaultBoxConfig) -> list[DefaultBox]:
    """Enumerate the anchor grid: per layer, per cell, one box per scale."""
    h, w = cfg.input_size
    boxes: list[DefaultBox] = []
    for name, stride in cfg.strides.items():
        if h % stride or w % stride:
            raise ConfigError(f"input size {h}x{w} not divisible by stride {stride} of layer {name}")
        scales = cfg.scales.get(name)
        if not scales:
            raise ConfigError(f"layer {name} has no scales configured")
        for row in range(h // stride):
            cy = (row + 0.5) * stride
            for col in range(w // stride):
                cx = (col + 0.5) * stride
                for scale in scales:
                    boxes.append(DefaultBox(name, row, col, Point(cx, cy), float(scale)))
    return boxes


class Match(NamedTuple):
    box_index: int
    square_index: int
    corner_type: CornerType
    iou: float


@dataclass
class MatchResult:
    """Positive (default box, corner type) assignments plus the complement.

    ``positive_mask[i, t]`` says whether default box ``i`` is a positive for
    corner type ``t``; a box may be positive for several types at once.
    """

    positives: list[Match]
    positive_mask: np.ndarray

    def negatives(self) -> np.ndarray:
        """(box_index, corner_type) pairs that stay negative."""
        return np.argwhere(~self.positive_mask)


def match(default_boxes: Sequence[DefaultBox], squares: Sequence[CornerSquare],
          iou_threshold: float = 0.5) -> MatchResult:
    """SSD-style matching between the anchor grid and corner squares.

    A default box is positive for a square's corner type when their
    axis-aligned IoU reaches the threshold; additionally every corner square
    claims its best-overlapping default box even below the threshold.
    """
    n = len(default_boxes)
    mask = np.zeros((n, len(CornerType)), dtype=bool)
    best: dict[tuple[int, int], Match] = {}
    if n == 0 or len(squares) == 0:
        return MatchResult([], mask)

    b = np.array([db.aabb() for db in default_boxes], dtype=np.float64)
    areas_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    for j, sq in enumerate(squares):
        sb = sq.aabb()
        iw = np.minimum(b[:, 2], sb.x_max) - np.maximum(b[:, 0], sb.x_min)
        ih = np.minimum(b[:, 3], sb.y_max) - np.maximum(b[:, 1], sb.y_min)
        inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
        union = areas_b + sb.area - inter
        iou = np.where(union > 0.0, inter / np.maximum(union, 1e-300), 0.0)
        hit = np.flatnonzero(iou >= iou_threshold)
        argmax = int(np.argmax(iou))
        if iou[argmax] > 0.0 and argmax not in hit:
            hit = np.append(hit, argmax)
        for i in hit:
            i = int(i)
            key = (i, int(sq.corner_type))
            cand = Match(i, j, sq.corner_type, float(iou[i]))
            prev = best.get(key)
            # Keep the best-overlapping square per (box, type) slot.
            if prev is None or cand.iou > prev.iou:
                best[key] = cand
            mask[i, int(sq.corner_type)] = True
    positives = [best[k] for k in sorted(best)]
    return MatchResult(positives, mask)


def encode_offsets(box: DefaultBox, square: CornerSquare) -> OffsetTarget:
    """Offsets of a corner square relative to a default box:
    dx = (x_b - x_c) / ss_b, dy = (y_b - y_c) / ss_b, dss = log(ss_b / ss_c).
    """
    if box.side <= 0.0 or square.side <= 0.0:
        raise InvalidBox(f"non-positive side (box {box.side}, square {square.side})")
    return OffsetTarget(
        (box.center.x - square.center.x) / box.side,
        (box.center.y - square.center.y) / box.side,
        math.log(box.side / square.side),
    )


def decode_offsets(box: DefaultBox, offsets: OffsetTarget, corner_type: CornerType) -> CornerSquare:
    """Exact inverse of :func:`encode_offsets`."""
    return CornerSquare(
        corner_type,
        Point(box.center.x - offsets.dx * box.side, box.center.y - offsets.dy * box.side),
        box.side / math.exp(offsets.dss),
    )
