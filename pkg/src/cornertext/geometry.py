"""Rotated-rectangle primitives.

Image coordinates throughout: x grows rightward, y grows downward, so the
corner sequence top-left, top-right, bottom-right, bottom-left is clockwise
on screen. Boundary points count as inside everywhere (>=/<= half-plane
tests) so pixel counts are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import DegenerateGeometry, InvalidBox


class Point(NamedTuple):
    x: float
    y: float


class AxisAlignedBox(NamedTuple):
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def area(self) -> float:
        return max(0.0, self.x_max - self.x_min) * max(0.0, self.y_max - self.y_min)


def aabb_iou(a: AxisAlignedBox, b: AxisAlignedBox) -> float:
    """Intersection over union of two axis-aligned boxes, 0 when disjoint."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class RotatedRect:
    """Oriented rectangle as 4 corners in top-left, top-right, bottom-right,
    bottom-left order."""

    corners: tuple[Point, Point, Point, Point]

    def __post_init__(self):
        if len(self.corners) != 4:
            raise InvalidBox(f"expected 4 corners, got {len(self.corners)}")

    @property
    def top_left(self) -> Point:
        return self.corners[0]

    @property
    def top_right(self) -> Point:
        return self.corners[1]

    @property
    def bottom_right(self) -> Point:
        return self.corners[2]

    @property
    def bottom_left(self) -> Point:
        return self.corners[3]

    @property
    def width(self) -> float:
        tl, tr = self.corners[0], self.corners[1]
        return math.hypot(tr.x - tl.x, tr.y - tl.y)

    @property
    def height(self) -> float:
        tl, bl = self.corners[0], self.corners[3]
        return math.hypot(bl.x - tl.x, bl.y - tl.y)

    @property
    def short_side(self) -> float:
        return min(self.width, self.height)

    @property
    def area(self) -> float:
        return polygon_area(self.corners)

    def aabb(self) -> AxisAlignedBox:
        xs = [p.x for p in self.corners]
        ys = [p.y for p in self.corners]
        return AxisAlignedBox(min(xs), min(ys), max(xs), max(ys))

    @classmethod
    def from_center_form(cls, x: float, y: float, w: float, h: float, theta: float) -> "RotatedRect":
        """Build from center, side lengths and rotation, theta in (-pi/2, pi/2].

        The width is the side whose direction makes angle ``theta`` with the
        x-axis; the top-left corner sits at ``center - w/2*u - h/2*v``.
        """
        if not (w > 0.0 and h > 0.0) or not all(map(math.isfinite, (x, y, w, h, theta))):
            raise InvalidBox(f"non-positive or non-finite box (w={w}, h={h})")
        ux, uy = math.cos(theta), math.sin(theta)
        vx, vy = -uy, ux
        hw, hh = w / 2.0, h / 2.0
        return cls((
            Point(x - hw * ux - hh * vx, y - hw * uy - hh * vy),
            Point(x + hw * ux - hh * vx, y + hw * uy - hh * vy),
            Point(x + hw * ux + hh * vx, y + hw * uy + hh * vy),
            Point(x - hw * ux + hh * vx, y - hw * uy + hh * vy),
        ))

    def to_center_form(self) -> tuple[float, float, float, float, float]:
        """Inverse of :meth:`from_center_form`: (x, y, w, h, theta)."""
        tl, tr, _, bl = self.corners
        cx = sum(p.x for p in self.corners) / 4.0
        cy = sum(p.y for p in self.corners) / 4.0
        w = math.hypot(tr.x - tl.x, tr.y - tl.y)
        h = math.hypot(bl.x - tl.x, bl.y - tl.y)
        theta = math.atan2(tr.y - tl.y, tr.x - tl.x)
        if theta <= -math.pi / 2.0:
            theta += math.pi
        elif theta > math.pi / 2.0:
            theta -= math.pi
        return cx, cy, w, h, theta

    def contains(self, p: Point | tuple[float, float]) -> bool:
        """True iff ``p`` lies inside or on the boundary."""
        px, py = p
        tl, tr, _, bl = self.corners
        ux, uy = tr.x - tl.x, tr.y - tl.y
        vx, vy = bl.x - tl.x, bl.y - tl.y
        lu = ux * ux + uy * uy
        lv = vx * vx + vy * vy
        s = (px - tl.x) * ux + (py - tl.y) * uy
        t = (px - tl.x) * vx + (py - tl.y) * vy
        return 0.0 <= s <= lu and 0.0 <= t <= lv

    def translated(self, dx: float, dy: float) -> "RotatedRect":
        return RotatedRect(tuple(Point(p.x + dx, p.y + dy) for p in self.corners))  # type: ignore[arg-type]


def contains(rect: RotatedRect, p: Point | tuple[float, float]) -> bool:
    return rect.contains(p)


def polygon_area(points: Sequence[Point | tuple[float, float]]) -> float:
    """Unsigned polygon area by the shoelace formula."""
    return abs(signed_area(points))


def signed_area(points: Sequence[Point | tuple[float, float]]) -> float:
    n = len(points)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return acc / 2.0


def clip_convex(subject: Sequence[tuple[float, float]],
                clip: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clipping of a convex ``subject`` by a convex ``clip``.

    Both polygons must be positively oriented (use :func:`signed_area` to
    normalize beforehand); boundary points are kept.
    """
    output = list(subject)
    ax, ay = clip[-1]
    for bx, by in clip:
        if not output:
            return []
        ex, ey = bx - ax, by - ay
        # Tolerance of ~1e-9 px keeps vertices that sit exactly on the clip
        # edge (coincident or shared-edge rectangles) consistently inside.
        tol = 1e-9 * (abs(ex) + abs(ey) + 1.0)
        inputs = output
        output = []
        sx, sy = inputs[-1]
        s_in = ex * (sy - ay) - ey * (sx - ax) >= -tol
        for px, py in inputs:
            p_in = ex * (py - ay) - ey * (px - ax) >= -tol
            if p_in:
                if not s_in:
                    output.append(_intersect(sx, sy, px, py, ax, ay, bx, by))
                output.append((px, py))
            elif s_in:
                output.append(_intersect(sx, sy, px, py, ax, ay, bx, by))
            sx, sy, s_in = px, py, p_in
        ax, ay = bx, by
    return output


def _intersect(sx, sy, px, py, ax, ay, bx, by):
    dcx, dcy = ax - bx, ay - by
    dpx, dpy = sx - px, sy - py
    den = dcx * dpy - dcy * dpx
    if den == 0.0:  # segment effectively on the clip line
        return ((sx + px) / 2.0, (sy + py) / 2.0)
    n1 = ax * by - ay * bx
    n2 = sx * py - sy * px
    return ((n1 * dpx - n2 * dcx) / den, (n1 * dpy - n2 * dcy) / den)


def _oriented(points: Sequence[Point | tuple[float, float]]) -> list[tuple[float, float]]:
    pts = [(float(x), float(y)) for x, y in points]
    if signed_area(pts) < 0.0:
        pts.reverse()
    return pts


def intersection_area(a: RotatedRect, b: RotatedRect) -> float:
    poly = clip_convex(_oriented(a.corners), _oriented(b.corners))
    if len(poly) < 3:
        return 0.0
    return polygon_area(poly)


def rotated_iou(a: RotatedRect, b: RotatedRect) -> float:
    """Polygon IoU of two rotated rectangles; 0 when the union has zero area."""
    # Canonical argument order makes the result exactly symmetric.
    if tuple(b.corners) < tuple(a.corners):
        a, b = b, a
    # Cheap reject: disjoint axis-aligned hulls cannot intersect.
    aa, bb = a.aabb(), b.aabb()
    if aa.x_max < bb.x_min or bb.x_max < aa.x_min or aa.y_max < bb.y_min or bb.y_max < aa.y_min:
        inter = 0.0
    else:
        inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def convex_hull(points: Sequence[Point | tuple[float, float]]) -> list[tuple[float, float]]:
    """Monotone-chain convex hull, counter-clockwise in math orientation."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def min_area_rect(points: Sequence[Point | tuple[float, float]]) -> RotatedRect:
    """Minimum-area enclosing rectangle of >= 3 non-collinear points.

    Rotating-calipers over the convex hull: the optimal rectangle has one
    side collinear with a hull edge. Corners come back in canonical order.
    """
    hull = convex_hull(points)
    if len(hull) < 3:
        raise DegenerateGeometry(f"need >= 3 non-collinear points, got hull of {len(hull)}")
    best_area = math.inf
    best = None
    for i in range(len(hull)):
        x0, y0 = hull[i]
        x1, y1 = hull[(i + 1) % len(hull)]
        ang = math.atan2(y1 - y0, x1 - x0)
        c, s = math.cos(ang), math.sin(ang)
        xs = [c * px + s * py for px, py in hull]
        ys = [-s * px + c * py for px, py in hull]
        w = max(xs) - min(xs)
        h = max(ys) - min(ys)
        area = w * h
        if area < best_area - 1e-12:
            best_area = area
            best = (c, s, min(xs), max(xs), min(ys), max(ys))
    assert best is not None
    c, s, xmin, xmax, ymin, ymax = best
    local = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    world = [Point(c * lx - s * ly, s * lx + c * ly) for lx, ly in local]
    return canonical_corner_order(world)


def canonical_corner_order(quad: Sequence[Point | tuple[float, float]]) -> RotatedRect:
    """Permute a rectangle's 4 corners into canonical TL, TR, BR, BL order.

    Canonical means: left corners have smaller x than their right
    counterparts and top corners smaller y than their bottom counterparts.
    Two clockwise labelings generally satisfy those inequalities; the one
    whose top edge is closest to horizontal wins, and an exact 45-degree
    tie is broken by the labeling with the smallest (y, x) top-left corner.
    """
    pts = [Point(float(x), float(y)) for x, y in quad]
    if len(pts) != 4:
        raise DegenerateGeometry(f"expected 4 corners, got {len(pts)}")
    cx = sum(p.x for p in pts) / 4.0
    cy = sum(p.y for p in pts) / 4.0
    # Clockwise on screen = ascending atan2 in y-down coordinates.
    cw = sorted(pts, key=lambda p: math.atan2(p.y - cy, p.x - cx))
    if polygon_area(cw) <= 0.0:
        raise DegenerateGeometry("zero-area quad has no corner order")
    diag = math.hypot(cw[2].x - cw[0].x, cw[2].y - cw[0].y)
    eps = 1e-9 * max(diag, 1.0)

    candidates = []
    for k in range(4):
        tl, tr, br, bl = (cw[(k + i) % 4] for i in range(4))
        if (tl.x <= tr.x + eps and bl.x <= br.x + eps
                and tl.y <= bl.y + eps and tr.y <= br.y + eps):
            theta = math.atan2(tr.y - tl.y, tr.x - tl.x)
            candidates.append((abs(theta), tl.y, tl.x, k))
    if not candidates:
        raise DegenerateGeometry("no corner labeling satisfies the ordering rules")
    k = min(candidates)[3]
    return RotatedRect(tuple(cw[(k + i) % 4] for i in range(4)))  # type: ignore[arg-type]
