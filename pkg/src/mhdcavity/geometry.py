"""Computational domains: the heated cavity, the right-triangular validation
cavity and a plain rectangle.

All lengths are dimensionless (scaled by the cavity height). Each domain
exposes the same small surface used by the mesher and the solver:

* ``loops()`` -- closed boundary loops of tagged line/arc segments
  (outer loop counterclockwise, holes clockwise),
* ``contains(points)`` -- vectorised strict fluid-membership test,
* ``holes`` -- one interior point per hole,
* ``circles`` -- ``{tag: (center, radius)}`` for curved boundary pieces,
* ``area`` / ``perimeter`` -- exact measures of the fluid region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class InvalidGeometry(ValueError):
    """Raised when a domain description violates one of its constraints."""


class BoundaryTag(IntEnum):
    LeftWall = 1
    RightWall = 2
    Lid = 3
    BottomAdiabatic = 4
    HeaterLeft = 5
    HeaterRight = 6
    Obstacle = 7
    # validation cavity only
    SlidingWall = 8
    HeatedWall = 9


HEATED_TAGS = (BoundaryTag.HeaterLeft, BoundaryTag.HeaterRight,
               BoundaryTag.Obstacle, BoundaryTag.HeatedWall)


@dataclass(frozen=True)
class LineSegment:
    start: tuple[float, float]
    end: tuple[float, float]
    tag: BoundaryTag

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    def point(self, t):
        """Point at parameter ``t`` in [0, 1] (arrays accepted)."""
        t = np.asarray(t, dtype=float)[..., None]
        a = np.asarray(self.start)
        b = np.asarray(self.end)
        return a + t * (b - a)

    def discretize(self, h: float, sagitta: float = 0.0) -> np.ndarray:
        n = max(1, math.ceil(self.length / h - 1e-9))
        return self.point(np.linspace(0.0, 1.0, n + 1))


@dataclass(frozen=True)
class ArcSegment:
    """Circular arc from ``theta0`` to ``theta1`` (radians, either direction)."""

    center: tuple[float, float]
    radius: float
    theta0: float
    theta1: float
    tag: BoundaryTag

    @property
    def length(self) -> float:
        return self.radius * abs(self.theta1 - self.theta0)

    @property
    def start(self) -> tuple[float, float]:
        return tuple(self.point(0.0))

    @property
    def end(self) -> tuple[float, float]:
        return tuple(self.point(1.0))

    def point(self, t):
        t = np.asarray(t, dtype=float)
        ang = self.theta0 + t * (self.theta1 - self.theta0)
        cx, cy = self.center
        return np.stack([cx + self.radius * np.cos(ang),
                         cy + self.radius * np.sin(ang)], axis=-1)

    def discretize(self, h: float, sagitta: float = 0.0) -> np.ndarray:
        # chord of angle a has sagitta r(1 - cos(a/2))
        span = abs(self.theta1 - self.theta0)
        n = max(2, math.ceil(self.length / h - 1e-9))
        if sagitta > 0.0:
            a_max = 2.0 * math.acos(max(-1.0, 1.0 - sagitta / self.radius))
            n = max(n, math.ceil(span / a_max - 1e-9))
        return self.point(np.linspace(0.0, 1.0, n + 1))


Segment = LineSegment | ArcSegment


@dataclass(frozen=True)
class BoundaryLoop:
    segments: tuple[Segment, ...]

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)

    @property
    def perimeter(self) -> float:
        return sum(s.length for s in self.segments)

    def closure_gap(self) -> float:
        gaps = [math.dist(a.end, b.start)
                for a, b in zip(self.segments, self.segments[1:] + self.segments[:1])]
        return max(gaps)

    def signed_area(self) -> float:
        """Exact signed area (arcs contribute their circular-segment part)."""
        total = 0.0
        for s in self.segments:
            (x0, y0), (x1, y1) = s.start, s.end
            total += 0.5 * (x0 * y1 - x1 * y0)
            if isinstance(s, ArcSegment):
                d = s.theta1 - s.theta0
                total += 0.5 * s.radius ** 2 * (d - math.sin(d))
        return total


def _polygon_contains(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Even-odd rule point-in-polygon test, vectorised over ``pts``."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    xj, yj = poly[-1]
    for xi, yi in poly:
        cond = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= cond & (x < xint)
        xj, yj = xi, yi
    return inside


@dataclass(frozen=True)
class Trapezoid:
    center_x: float = 1.0
    base_y: float = 0.35
    bottom_half_width: float = 0.3
    top_half_width: float = 0.15
    height: float = 0.3

    def corners(self) -> np.ndarray:
        """Counterclockwise corners starting at the bottom-left one."""
        c, b, h = self.center_x, self.base_y, self.height
        return np.array([
            [c - self.bottom_half_width, b],
            [c + self.bottom_half_width, b],
            [c + self.top_half_width, b + h],
            [c - self.top_half_width, b + h],
        ])

    @property
    def area(self) -> float:
        return (self.bottom_half_width + self.top_half_width) * self.height

    @property
    def centroid(self) -> tuple[float, float]:
        a, b, h = 2 * self.bottom_half_width, 2 * self.top_half_width, self.height
        return self.center_x, self.base_y + h * (a + 2 * b) / (3 * (a + b))


@dataclass(frozen=True)
class CavityGeometry:
    """Lid-driven enclosure with a trapezoidal hole and two semicircular
    heater bumps on the bottom wall (height scaled to 1)."""

    aspect_ratio: float = 2.0
    trapezoid: Trapezoid = field(default_factory=Trapezoid)
    heater_radius: float = 0.15
    heater_centers: tuple[float, float] = (0.5, 1.5)
    arc_chord_tolerance: float = 1e-3

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        t = self.trapezoid
        values = [self.aspect_ratio, self.heater_radius, self.arc_chord_tolerance,
                  *self.heater_centers, t.center_x, t.base_y, t.bottom_half_width,
                  t.top_half_width, t.height]
        if not all(math.isfinite(v) for v in values):
            raise InvalidGeometry("all coordinates must be finite")
        if len(self.heater_centers) != 2:
            raise InvalidGeometry("exactly two heater centers are required")
        if self.aspect_ratio <= 0:
            raise InvalidGeometry("aspect_ratio must be positive")
        if self.arc_chord_tolerance <= 0:
            raise InvalidGeometry("arc_chord_tolerance must be positive")
        if t.height <= 0 or t.top_half_width <= 0:
            raise InvalidGeometry("trapezoid height and top_half_width must be positive")
        if t.bottom_half_width < t.top_half_width:
            raise InvalidGeometry("trapezoid bottom_half_width must be >= top_half_width")
        r = self.heater_radius
        if r <= 0:
            raise InvalidGeometry("heater_radius must be positive")
        x0, x1 = self.heater_centers
        if x0 - r <= 0:
            raise InvalidGeometry("left heater arc intersects the left wall")
        if x1 + r >= self.aspect_ratio:
            raise InvalidGeometry("right heater arc intersects the right wall")
        if not x0 + r < x1 - r:
            raise InvalidGeometry("heater arcs overlap or are out of order")
        if r >= 1.0:
            raise InvalidGeometry("heater arc reaches the lid")
        corners = t.corners()
        if (corners[:, 0].min() <= 0 or corners[:, 0].max() >= self.aspect_ratio
                or t.base_y <= 0 or t.base_y + t.height >= 1.0):
            raise InvalidGeometry("trapezoid must lie strictly inside the rectangle")
        for xc in self.heater_centers:
            if _circle_polygon_distance((xc, 0.0), corners) <= r:
                raise InvalidGeometry("heater arc intersects the trapezoid")

    # -- boundary -----------------------------------------------------------
    def loops(self) -> list[BoundaryLoop]:
        W, r = self.aspect_ratio, self.heater_radius
        xl, xr = self.heater_centers
        T = BoundaryTag
        outer = (
            LineSegment((0.0, 0.0), (xl - r, 0.0), T.BottomAdiabatic),
            ArcSegment((xl, 0.0), r, math.pi, 0.0, T.HeaterLeft),
            LineSegment((xl + r, 0.0), (xr - r, 0.0), T.BottomAdiabatic),
            ArcSegment((xr, 0.0), r, math.pi, 0.0, T.HeaterRight),
            LineSegment((xr + r, 0.0), (W, 0.0), T.BottomAdiabatic),
            LineSegment((W, 0.0), (W, 1.0), T.RightWall),
            LineSegment((W, 1.0), (0.0, 1.0), T.Lid),
            LineSegment((0.0, 1.0), (0.0, 0.0), T.LeftWall),
        )
        c = self.trapezoid.corners()
        # clockwise: bottom-left -> top-left -> top-right -> bottom-right
        order = [0, 3, 2, 1]
        hole = tuple(
            LineSegment(tuple(c[order[i]]), tuple(c[order[(i + 1) % 4]]), T.Obstacle)
            for i in range(4)
        )
        return [BoundaryLoop(outer), BoundaryLoop(hole)]

    @property
    def holes(self) -> list[tuple[float, float]]:
        return [self.trapezoid.centroid]

    @property
    def circles(self) -> dict[BoundaryTag, tuple[tuple[float, float], float]]:
        r = self.heater_radius
        return {BoundaryTag.HeaterLeft: ((self.heater_centers[0], 0.0), r),
                BoundaryTag.HeaterRight: ((self.heater_centers[1], 0.0), r)}

    @property
    def area(self) -> float:
        return self.aspect_ratio - self.trapezoid.area - math.pi * self.heater_radius ** 2

    @property
    def perimeter(self) -> float:
        return sum(loop.perimeter for loop in self.loops())

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = p[:, 0], p[:, 1]
        inside = (x > 0) & (x < self.aspect_ratio) & (y > 0) & (y < 1)
        r2 = self.heater_radius ** 2
        for xc in self.heater_centers:
            inside &= (x - xc) ** 2 + y ** 2 > r2
        inside &= ~_polygon_contains(self.trapezoid.corners(), p)
        return inside


def _circle_polygon_distance(center, poly: np.ndarray) -> float:
    c = np.asarray(center, dtype=float)
    if _polygon_contains(poly, c[None, :])[0]:
        return 0.0
    best = math.inf
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        ab = b - a
        t = np.clip(np.dot(c - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(a + t * ab - c)))
    return best


@dataclass(frozen=True)
class PolygonDomain:
    """Simple polygonal domain (no holes, no arcs) with tagged edges.

    Used for the right-triangular validation cavity and for plain
    rectangles (lid-driven benchmark, manufactured solutions).
    """

    segments: tuple[LineSegment, ...]
    arc_chord_tolerance: float = 1e-3

    def loops(self) -> list[BoundaryLoop]:
        return [BoundaryLoop(self.segments)]

    @property
    def holes(self) -> list[tuple[float, float]]:
        return []

    @property
    def circles(self) -> dict:
        return {}

    @property
    def corners(self) -> np.ndarray:
        return np.array([s.start for s in self.segments])

    @property
    def area(self) -> float:
        return BoundaryLoop(self.segments).signed_area()

    @property
    def perimeter(self) -> float:
        return BoundaryLoop(self.segments).perimeter

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        inside = _polygon_contains(self.corners, p)
        # strictness: drop points within round-off of an edge
        for s in self.segments:
            a, b = np.asarray(s.start), np.asarray(s.end)
            ab = b - a
            t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
            d = np.linalg.norm(a + t[:, None] * ab - p, axis=1)
            inside &= d > 1e-12
        return inside


def rectangle_domain(width: float = 1.0, height: float = 1.0) -> PolygonDomain:
    """Plain rectangle tagged like the cavity: lid on top, cold side walls."""
    if not (width > 0 and height > 0):
        raise InvalidGeometry("rectangle sides must be positive")
    T = BoundaryTag
    return PolygonDomain((
        LineSegment((0.0, 0.0), (width, 0.0), T.BottomAdiabatic),
        LineSegment((width, 0.0), (width, height), T.RightWall),
        LineSegment((width, height), (0.0, height), T.Lid),
        LineSegment((0.0, height), (0.0, 0.0), T.LeftWall),
    ))


def triangular_cavity_geometry(height: float = 1.0) -> PolygonDomain:
    """Right-triangular cavity: sliding cold vertical wall at x = 0, adiabatic
    bottom, heated hypotenuse from (height, 0) to (0, height)."""
    if not (math.isfinite(height) and height > 0):
        raise InvalidGeometry("triangular cavity height must be positive")
    T = BoundaryTag
    return PolygonDomain((
        LineSegment((0.0, 0.0), (height, 0.0), T.BottomAdiabatic),
        LineSegment((height, 0.0), (0.0, height), T.HeatedWall),
        LineSegment((0.0, height), (0.0, 0.0), T.SlidingWall),
    ))


def build_boundary(geom: CavityGeometry) -> list[BoundaryLoop]:
    """Validate ``geom`` and return its [outer, hole] boundary loops."""
    geom.validate()
    return geom.loops()


def point_in_domain(geom, p) -> bool:
    """True iff ``p`` lies strictly inside the fluid region.

    Points exactly on a wall, arc or obstacle edge return ``False`` up to
    floating-point round-off (about 1e-12 in dimensionless length).
    """
    return bool(geom.contains(np.asarray(p, dtype=float)[None, :])[0])
