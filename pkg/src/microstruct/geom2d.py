"""Planar geometry for the two-dimensional cell family (later extruded along
the first coordinate).  Shapely supplies the exact polygon algebra; curved
pieces (discs, radial sectors) get their own containment tests and exact or
quadrature measures mirroring the 3D catalogue.
"""

from __future__ import annotations

import math

import numpy as np
from shapely import contains_xy
from shapely.geometry import Polygon as ShPolygon
from shapely.ops import unary_union

from .errors import DegenerateHull


class ConvexPolygon2D:
    """Convex polygon from its extreme points (counterclockwise)."""

    def __init__(self, points, name=""):
        pts = np.asarray(points, float)
        poly = ShPolygon(pts).convex_hull
        if poly.area <= 0.0:
            raise DegenerateHull("collinear 2D points")
        self.poly = ShPolygon(poly.exterior.coords)
        self.name = name
        xs, ys = self.poly.exterior.coords.xy
        self.vertices = np.column_stack([xs, ys])[:-1]
        self.bbox = (self.vertices.min(axis=0), self.vertices.max(axis=0))
        self.scale = float(np.max(self.bbox[1] - self.bbox[0]))

    def contains(self, points, tol=None):
        p = np.atleast_2d(np.asarray(points, float))
        if tol is None:
            tol = 1e-11 * max(self.scale, 1.0)
        probe = self.poly.buffer(tol) if tol else self.poly
        return contains_xy(probe, p[:, 0], p[:, 1])

    def measure(self):
        return float(self.poly.area)

    def sample_bbox(self):
        return self.bbox


class Disk2D:
    def __init__(self, center, radius, clip_rect=None, name="disk"):
        self.center = np.asarray(center, float)
        self.radius = float(radius)
        self.clip_rect = clip_rect  # ((x0,y0),(x1,y1)) or None
        self.name = name
        lo = self.center - self.radius
        hi = self.center + self.radius
        if clip_rect is not None:
            lo = np.maximum(lo, np.asarray(clip_rect[0], float))
            hi = np.minimum(hi, np.asarray(clip_rect[1], float))
        self.bbox = (lo, hi)
        self.scale = float(np.max(hi - lo))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        d = p - self.center
        inside = np.einsum("ij,ij->i", d, d) <= (self.radius + tol) ** 2
        if self.clip_rect is not None:
            (x0, y0), (x1, y1) = self.clip_rect
            inside &= (p[:, 0] >= x0 - tol) & (p[:, 0] <= x1 + tol)
            inside &= (p[:, 1] >= y0 - tol) & (p[:, 1] <= y1 + tol)
        return inside

    def measure(self):
        if self.clip_rect is None:
            return math.pi * self.radius ** 2
        from .geometry import circle_rect_area
        (x0, y0), (x1, y1) = self.clip_rect
        return circle_rect_area(self.center[0], self.center[1], self.radius,
                                x0, x1, y0, y1)

    def sample_bbox(self):
        return self.bbox


class Sector2D:
    """Radial shell {Z + t v : r_in < t < r_out} whose ray at radius `reach`
    lands inside the rectangle (2D spreading cone of the boundary cell)."""

    def __init__(self, apex, r_in, r_out, rect, reach=None, name="sector"):
        self.apex = np.asarray(apex, float)
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.rect = tuple(np.asarray(v, float) for v in rect)
        self.reach = self.r_out if reach is None else float(reach)
        self.name = name
        self.bbox = self.rect
        self.scale = float(np.max(self.rect[1] - self.rect[0]))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        d = p - self.apex
        t = np.linalg.norm(d, axis=1)
        ok = (t > self.r_in) & (t < self.r_out)
        lo, hi = self.rect
        ok &= np.all((p >= lo - tol) & (p <= hi + tol), axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            end = self.apex + self.reach * d / t[:, None]
        ok &= np.all((end >= lo - 1e-15) & (end <= hi + 1e-15), axis=1)
        return ok

    def measure(self):
        lo, hi = self.rect
        n = 2048
        xs = lo[0] + (np.arange(n) + 0.5) * (hi[0] - lo[0]) / n
        ys = lo[1] + (np.arange(n) + 0.5) * (hi[1] - lo[1]) / n
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        frac = float(np.mean(self.contains(pts)))
        return frac * float(np.prod(hi - lo))

    def sample_bbox(self):
        return self.rect


class Rect2D:
    def __init__(self, lo, hi, name="rect"):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        self.name = name
        self.bbox = (self.lo, self.hi)
        self.scale = float(np.max(self.hi - self.lo))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        return np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)

    def measure(self):
        return float(np.prod(self.hi - self.lo))

    def sample_bbox(self):
        return self.bbox


class Complement2D:
    """Part of a rectangle outside one primitive."""

    def __init__(self, lo, hi, primitive, name="complement"):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        self.primitive = primitive
        self.name = name
        self.bbox = (self.lo, self.hi)
        self.scale = float(np.max(self.hi - self.lo))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        inside = np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)
        return inside & ~self.primitive.contains(p)

    def measure(self):
        return float(np.prod(self.hi - self.lo)) - self.primitive.measure()

    def sample_bbox(self):
        return self.bbox


# ---------------------------------------------------------------------------
# polygon-union helpers
# ---------------------------------------------------------------------------

def union_area(polys):
    return float(unary_union([p.poly for p in polys]).area)


def pairwise_quadratic_integral_2d(polys, weights):
    """sum_ij w_ij area(P_i & P_j), exact through shapely booleans."""
    n = len(polys)
    total = 0.0
    for i in range(n):
        total += weights[i, i] * polys[i].poly.area
        for j in range(i + 1, n):
            if weights[i, j] == 0.0:
                continue
            a = polys[i].poly.intersection(polys[j].poly).area
            if a > 0.0:
                total += 2.0 * weights[i, j] * float(a)
    return total


def free_boundary_length(polys, exclude_lines=(), scale=None):
    """Length of the boundary of union(polys) not lying on excluded lines.

    exclude_lines: iterable of (axis, value) meaning the line {x_axis = value}.
    """
    union = unary_union([p.poly for p in polys])
    if scale is None:
        scale = max(p.scale for p in polys)
    tol = 1e-9 * scale

    def rings(geom):
        if geom.geom_type == "Polygon":
            yield geom.exterior
            yield from geom.interiors
        elif geom.geom_type in ("MultiPolygon", "GeometryCollection"):
            for g in geom.geoms:
                yield from rings(g)
        elif geom.geom_type == "LineString":
            yield geom
        elif geom.geom_type == "MultiLineString":
            yield from geom.geoms

    total = 0.0
    for boundary in rings(union):
        segs = []
        coords = list(boundary.coords)
        for a, b in zip(coords[:-1], coords[1:]):
            keep = True
            for axis, value in exclude_lines:
                if abs(a[axis] - value) < tol and abs(b[axis] - value) < tol:
                    keep = False
                    break
            if keep:
                segs.append(math.hypot(b[0] - a[0], b[1] - a[1]))
        total += sum(segs)
    return total


# ---------------------------------------------------------------------------
# interval sets (1D traces of 2D cells)
# ---------------------------------------------------------------------------

class IntervalSet:
    """Finite union of closed intervals with exact set algebra."""

    def __init__(self, intervals=()):
        self.intervals = self._normalize(intervals)

    @staticmethod
    def _normalize(intervals):
        ivs = sorted((float(a), float(b)) for a, b in intervals if b > a)
        out = []
        for a, b in ivs:
            if out and a <= out[-1][1] + 1e-15:
                out[-1] = (out[-1][0], max(out[-1][1], b))
            else:
                out.append((a, b))
        return out

    @property
    def length(self):
        return sum(b - a for a, b in self.intervals)

    def union(self, other):
        return IntervalSet(self.intervals + other.intervals)

    def difference(self, other):
        out = []
        for a, b in self.intervals:
            cur = [(a, b)]
            for c, d in other.intervals:
                nxt = []
                for x, y in cur:
                    if d <= x or c >= y:
                        nxt.append((x, y))
                    else:
                        if x < c:
                            nxt.append((x, c))
                        if d < y:
                            nxt.append((d, y))
                cur = nxt
            out.extend(cur)
        return IntervalSet(out)

    def symmetric_difference_length(self, other):
        return (self.difference(other).length
                + other.difference(self).length)

    def translate(self, shift):
        return IntervalSet([(a + shift, b + shift) for a, b in self.intervals])

    def scale_about_origin(self, factor):
        return IntervalSet([(a * factor, b * factor) for a, b in self.intervals])
