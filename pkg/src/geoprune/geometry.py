"""Waiting circles, detour ellipses and their bounding rectangles.

All boundaries are closed: a point exactly on a circle or ellipse is inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Point = tuple[float, float]


@dataclass(frozen=True, slots=True)
class MBR:
    minx: float
    miny: float
    maxx: float
    maxy: float

    def __post_init__(self):
        if self.minx > self.maxx or self.miny > self.maxy:
            raise ValueError(f"inverted rectangle {self}")

    @classmethod
    def of_point(cls, p: Point) -> "MBR":
        return cls(p[0], p[1], p[0], p[1])

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.minx, self.miny, self.maxx, self.maxy)

    def contains_point(self, p: Point) -> bool:
        return self.minx <= p[0] <= self.maxx and self.miny <= p[1] <= self.maxy

    def intersects(self, other: "MBR") -> bool:
        return (self.minx <= other.maxx and other.minx <= self.maxx
                and self.miny <= other.maxy and other.miny <= self.maxy)


@dataclass(frozen=True, slots=True)
class DetourEllipse:
    """Ellipse with foci ``f1``/``f2``; ``major`` bounds the sum of focal distances."""

    f1: Point
    f2: Point
    major: float

    def __post_init__(self):
        focal = math.dist(self.f1, self.f2)
        if not self.major >= focal:
            raise ValueError(f"empty ellipse: major {self.major} < focal distance {focal}")

    def contains(self, p: Point, tol: float = 0.0) -> bool:
        return ellipse_contains(self, p, tol)

    def mbr(self) -> MBR:
        return ellipse_mbr(self)


@dataclass(frozen=True, slots=True)
class WaitingCircle:
    center: Point
    radius: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise ValueError(f"negative radius {self.radius}")

    def contains(self, p: Point, tol: float = 0.0) -> bool:
        return circle_contains(self, p, tol)

    def mbr(self) -> MBR:
        return circle_mbr(self)


def ellipse_contains(e: DetourEllipse, p: Point, tol: float = 0.0) -> bool:
    """``|f1 p| + |p f2| <= major (+ tol)``."""
    return math.dist(e.f1, p) + math.dist(p, e.f2) <= e.major + tol


def circle_contains(c: WaitingCircle, p: Point, tol: float = 0.0) -> bool:
    return math.dist(c.center, p) <= c.radius + tol


def ellipse_mbr(e: DetourEllipse) -> MBR:
    """Tight axis-aligned box of a (possibly rotated) ellipse."""
    (x1, y1), (x2, y2) = e.f1, e.f2
    a = e.major / 2.0
    dx, dy = x2 - x1, y2 - y1
    c = math.hypot(dx, dy) / 2.0
    b2 = max(a * a - c * c, 0.0)
    if c > 0:
        cos_t, sin_t = dx / (2.0 * c), dy / (2.0 * c)
    else:
        cos_t, sin_t = 1.0, 0.0
    hx = math.sqrt(a * a * cos_t * cos_t + b2 * sin_t * sin_t)
    hy = math.sqrt(a * a * sin_t * sin_t + b2 * cos_t * cos_t)
    cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
    return MBR(cx - hx, cy - hy, cx + hx, cy + hy)


def circle_mbr(c: WaitingCircle) -> MBR:
    x, y = c.center
    r = c.radius
    return MBR(x - r, y - r, x + r, y + r)

