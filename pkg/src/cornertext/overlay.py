"""SVG overlay rendering: ground truth in green, predictions in red."""

from __future__ import annotations

from typing import Sequence

from .geometry import RotatedRect
from .pipeline import Detection


def _poly(rect: RotatedRect, color: str, label: str | None = None) -> str:
    points = " ".join(f"{p.x:.2f},{p.y:.2f}" for p in rect.corners)
    title = f"<title>{label}</title>" if label else ""
    return (f'<polygon points="{points}" fill="none" stroke="{color}" '
            f'stroke-width="2">{title}</polygon>')


def render_svg(width: int, height: int, ground_truth: Sequence[RotatedRect] = (),
               predictions: Sequence[Detection] = ()) -> str:
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for rect in ground_truth:
        lines.append(_poly(rect, "green"))
    for det in predictions:
        lines.append(_poly(det.rect, "red", f"score={det.score:.4f}"))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
