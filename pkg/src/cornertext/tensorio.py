"""On-disk formats shared by all CLI commands.

Two wire contracts:

* Tensor files (``.cft``): magic ``CFT1``, three little-endian u32 dims
  (channels, height, width), then float32 little-endian payload in
  channel-major, row-major order.
* Box files: JSON-lines, one box per line with keys ``x1..y4`` holding the
  corners in top-left, top-right, bottom-right, bottom-left order, plus an
  optional ``score``. Values survive a round-trip to 6 decimal places.

Corner-detection files reuse the JSON-lines style with keys ``type``, ``x``,
``y``, ``short_side`` and optional ``score``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import FormatError
from .geometry import Point, RotatedRect

TENSOR_MAGIC = b"CFT1"
_HEADER = struct.Struct("<4sIII")
_MAX_ELEMENTS = 1 << 31


def write_tensor(data: np.ndarray, path: str | Path) -> None:
    """Write a (channels, height, width) float array as a tensor file."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"tensor must have 3 dims (channels, height, width), got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor payload contains non-finite values")
    c, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TENSOR_MAGIC, c, h, w))
        fh.write(arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor file back as a float32 array of shape (c, h, w)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad magic in {path!s}, expected {TENSOR_MAGIC!r}", offset=0)
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated header in {path!s}", offset=len(raw))
    _, c, h, w = _HEADER.unpack_from(raw)
    n = int(c) * int(h) * int(w)
    if n > _MAX_ELEMENTS:
        raise FormatError(f"dimensions {c}x{h}x{w} overflow the element limit", offset=4)
    expected = _HEADER.size + 4 * n
    if len(raw) < expected:
        raise FormatError(f"truncated payload in {path!s}", offset=len(raw))
    if len(raw) > expected:
        raise FormatError(f"trailing data in {path!s}", offset=expected)
    arr = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(c, h, w)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise FormatError(f"non-finite value in {path!s}", offset=_HEADER.size + 4 * int(bad[0]))
    return arr.copy()


class BoxRecord(NamedTuple):
    rect: RotatedRect
    score: float | None


_BOX_KEYS = ("x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4")


def _round6(v: float) -> float:
    return round(float(v), 6)


def write_boxes(boxes: Iterable[RotatedRect | BoxRecord | tuple], path: str | Path) -> None:
    """Write boxes (optionally scored) as JSON-lines."""
    lines = []
    for item in boxes:
        if isinstance(item, RotatedRect):
            rect, score = item, None
        else:
            rect, score = item
        obj = {}
        for key, value in zip(_BOX_KEYS, (c for p in rect.corners for c in p)):
            obj[key] = _round6(value)
        if score is not None:
            obj["score"] = _round6(score)
        lines.append(json.dumps(obj))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_boxes(path: str | Path) -> list[BoxRecord]:
    """Read a JSON-lines box file; malformed lines raise FormatError."""
    records: list[BoxRecord] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed JSON in {path!s}: {exc.msg}", line=lineno) from exc
        if not isinstance(obj, dict):
            raise FormatError(f"expected an object per line in {path!s}", line=lineno)
        try:
            coords = [float(obj[k]) for k in _BOX_KEYS]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"missing or non-numeric corner key in {path!s}: {exc}", line=lineno) from exc
        if not all(map(math.isfinite, coords)):
            raise FormatError(f"non-finite corner in {path!s}", line=lineno)
        score = obj.get("score")
        if score is not None:
            score = float(score)
        rect = RotatedRect((Point(coords[0], coords[1]), Point(coords[2], coords[3]),
                            Point(coords[4], coords[5]), Point(coords[6], coords[7])))
        records.append(BoxRecord(rect, score))
    return records


def write_corners(corners: Iterable, path: str | Path) -> None:
    """Write corner detections/squares as JSON-lines.

    Accepts anything with ``corner_type``, a position and a side: corner
    detections carry a score, plain corner squares do not.
    """
    lines = []
    for det in corners:
        obj = {
            "type": det.corner_type.name,
            "x": _round6(det.position.x if hasattr(det, "position") else det.center.x),
            "y": _round6(det.position.y if hasattr(det, "position") else det.center.y),
            "short_side": _round6(det.short_side if hasattr(det, "short_side") else det.side),
        }
        score = getattr(det, "score", None)
        if score is not None:
            obj["score"] = _round6(score)
        lines.append(json.dumps(obj))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_corners(path: str | Path):
    """Read corner detections; a missing score defaults to 1.0."""
    from .pipeline import CornerDetection
    from .targets import CornerType

    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed JSON in {path!s}: {exc.msg}", line=lineno) from exc
        try:
            ctype = CornerType[obj["type"]]
            x, y = float(obj["x"]), float(obj["y"])
            side = float(obj["short_side"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad corner record in {path!s}: {exc}", line=lineno) from exc
        score = float(obj.get("score", 1.0))
        out.append(CornerDetection(ctype, Point(x, y), side, score))
    return out


def write_matches(matches: Iterable[dict], path: str | Path) -> None:
    """Write match/offset records (one JSON object per line)."""
    lines = [json.dumps(m) for m in matches]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


@dataclass
class SceneAnnotation:
    """Ground truth for one scene: image size plus oriented boxes."""

    image_width: int
    image_height: int
    boxes: list[RotatedRect] = field(default_factory=list)
    text_flags: list[bool] | None = None

    def __post_init__(self):
        for rect in self.boxes:
            for p in rect.corners:
                if not (-0.25 * self.image_width <= p.x <= 1.25 * self.image_width
                        and -0.25 * self.image_height <= p.y <= 1.25 * self.image_height):
                    raise ValueError(f"box corner {p} far outside the {self.image_width}x{self.image_height} frame")
        if self.text_flags is not None and len(self.text_flags) != len(self.boxes):
            raise ValueError("text_flags length must match boxes")
