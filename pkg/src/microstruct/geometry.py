"""Exact and numerical 3D geometry for the region catalogue used by the cell
constructions: convex polyhedra from small vertex lists, balls and cylinders
clipped to boxes, solids of revolution, and the few boolean combinations the
cells need (box minus voids, complement of a primitive inside a box, radial
sector shells).

Conventions
-----------
* Points are numpy arrays of shape (3,); batches are (n, 3).
* A plane is (unit normal n, offset d) with the plane being {x : x.n = d}.
* Convex polyhedra carry merged polygonal faces with outward normals, and a
  halfspace matrix H = [A | b] meaning the solid is {x : A x + b <= 0}.
* Measures are exact (closed form or 1D quadrature of exact slice areas)
  wherever the shape allows; a deterministic quasi-Monte-Carlo path and a
  seeded Monte-Carlo oracle are available for the rest and for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError
from scipy.stats import qmc
from shapely.geometry import Polygon as ShPolygon
from shapely.ops import unary_union

from .errors import DegenerateHull, QuadratureFailed, UnsupportedBoolean

GEOM_EPS = 1e-12  # relative tolerance on normalized coordinates


# ---------------------------------------------------------------------------
# plane helpers
# ---------------------------------------------------------------------------

def plane_basis(normal):
    """Deterministic orthonormal (t1, t2) spanning the plane with normal n."""
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    k = int(np.argmin(np.abs(n)))
    t1 = np.zeros(3)
    t1[k] = 1.0
    t1 = t1 - n * t1.dot(n)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return n, t1, t2


def plane_key(normal, offset, scale):
    """Canonical hashable key identifying a plane up to orientation."""
    n = np.asarray(normal, float)
    nn = n / np.linalg.norm(n)
    d = float(offset) / scale
    for c in nn:
        if abs(c) > 1e-9:
            if c < 0.0:
                nn, d = -nn, -d
            break
    return tuple(np.round(nn, 9)) + (round(d, 9),)


def clip_convex_polygon(pts, a, b, c, tol=0.0):
    """Clip convex polygon (list of (u, v)) by halfplane a*u + b*v + c <= tol."""
    out = []
    m = len(pts)
    for i in range(m):
        p, q = pts[i], pts[(i + 1) % m]
        fp = a * p[0] + b * p[1] + c
        fq = a * q[0] + b * q[1] + c
        if fp <= tol:
            out.append(p)
        if (fp <= tol) != (fq <= tol):
            t = (tol - fp) / (fq - fp)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _poly_area(pts):
    if len(pts) < 3:
        return 0.0
    u = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    return 0.5 * float(np.dot(u, np.roll(v, -1)) - np.dot(v, np.roll(u, -1)))


# ---------------------------------------------------------------------------
# convex polyhedra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Face:
    cycle: tuple          # vertex indices, counterclockwise seen from outside
    normal: np.ndarray    # outward unit normal
    offset: float         # x . normal = offset on the face plane
    area: float
    centroid: np.ndarray


class ConvexPolyhedron:
    """Convex polyhedron built from its extreme points (Qhull backed).

    Faces are merged into maximal coplanar polygons so cubes report six quads
    and the face list matches the geometric faces, not a triangulation.
    """

    def __init__(self, vertices, faces, halfspaces, volume, name=""):
        self.vertices = vertices
        self.faces = faces
        self.halfspaces = halfspaces  # (m, 4): A x + b <= 0 rows, unit A
        self.volume = volume
        self.name = name
        self.bbox = (vertices.min(axis=0), vertices.max(axis=0))
        self.scale = float(np.max(self.bbox[1] - self.bbox[0]))

    # -- construction ------------------------------------------------------

    @classmethod
    def from_points(cls, points, name="", allow_flat=False):
        pts = np.asarray(points, float)
        if pts.shape[0] < 4 and not allow_flat:
            raise DegenerateHull("need at least 4 points for a solid hull")
        try:
            hull = ConvexHull(pts)
        except QhullError as exc:
            if allow_flat:
                return cls._flat_hull(pts, name)
            raise DegenerateHull(f"coplanar or degenerate input: {exc}") from exc
        verts = pts[hull.vertices]
        remap = {old: new for new, old in enumerate(hull.vertices)}
        scale = float(np.max(verts.max(axis=0) - verts.min(axis=0)))

        groups: dict = {}
        for simplex, eq in zip(hull.simplices, hull.equations):
            n = eq[:3] / np.linalg.norm(eq[:3])
            d = -eq[3]
            key = tuple(np.round(n, 8)) + (round(d / scale, 8),)
            g = groups.setdefault(key, {"normal": n, "offset": d, "idx": set()})
            g["idx"].update(remap[i] for i in simplex)

        faces = []
        for g in groups.values():
            n = g["normal"]
            d = g["offset"]
            idx = sorted(g["idx"])
            _, t1, t2 = plane_basis(n)
            uv = np.column_stack([verts[idx].dot(t1), verts[idx].dot(t2)])
            cen = uv.mean(axis=0)
            order = np.argsort(np.arctan2(uv[:, 1] - cen[1], uv[:, 0] - cen[0]))
            cycle = [idx[i] for i in order]
            area = _poly_area([tuple(uv[i]) for i in order])
            # counterclockwise about n when (t1, t2, n) is right-handed
            if np.dot(np.cross(t1, t2), n) < 0:
                area = -area
            if area < 0:
                cycle.reverse()
                area = -area
            centroid = verts[cycle].mean(axis=0)
            faces.append(Face(tuple(cycle), n, d, float(area), centroid))

        A = np.array([f.normal for f in faces])
        b = -np.array([f.offset for f in faces])
        return cls(verts, faces, np.column_stack([A, b]), float(hull.volume), name)

    @classmethod
    def _flat_hull(cls, pts, name):
        """Zero-volume hull of coplanar points (double-sided single face)."""
        c = pts.mean(axis=0)
        q = pts - c
        _, s, vt = np.linalg.svd(q, full_matrices=False)
        n = vt[2]
        _, t1, t2 = plane_basis(n)
        uv = np.column_stack([q.dot(t1), q.dot(t2)])
        try:
            h2 = ConvexHull(uv)
        except QhullError as exc:
            raise DegenerateHull(f"points are collinear: {exc}") from exc
        verts = pts[h2.vertices]
        cyc = tuple(range(len(verts)))
        area = float(h2.volume)  # 2D hull volume is its area
        d = float(c.dot(n))
        faces = [Face(cyc, n, d, area, verts.mean(axis=0)),
                 Face(tuple(reversed(cyc)), -n, -d, area, verts.mean(axis=0))]
        hs = np.array([[*n, -d], [*(-n), d]])
        return cls(verts, faces, hs, 0.0, name)

    # -- queries -----------------------------------------------------------

    @property
    def boundary_area(self):
        return float(sum(f.area for f in self.faces))

    def contains(self, points, tol=None):
        p = np.atleast_2d(np.asarray(points, float))
        if tol is None:
            tol = GEOM_EPS * max(self.scale, 1.0) * 10
        vals = p @ self.halfspaces[:, :3].T + self.halfspaces[:, 3]
        return np.all(vals <= tol, axis=1)

    def closedness_defect(self):
        """Norm of sum(area * normal) over faces; zero for a closed surface."""
        s = np.zeros(3)
        for f in self.faces:
            s += f.area * f.normal
        return float(np.linalg.norm(s))

    def face_planarity_defect(self):
        worst = 0.0
        for f in self.faces:
            v = self.vertices[list(f.cycle)]
            worst = max(worst, float(np.max(np.abs(v.dot(f.normal) - f.offset))))
        return worst

    def transformed(self, A=None, shift=None, name=None):
        """Image under x -> A x + shift for orthogonal-ish A (hull rebuilt)."""
        v = self.vertices
        if A is not None:
            v = v @ np.asarray(A, float).T
        if shift is not None:
            v = v + np.asarray(shift, float)
        return ConvexPolyhedron.from_points(v, name=name or self.name)

    def slice_polygon(self, normal, offset, tol_rel=1e-12):
        """Cross-section polygon with the plane x.n = d, as shapely in the
        plane's (t1, t2) coordinates (plane_basis convention). None if empty."""
        n, t1, t2 = plane_basis(normal)
        d = float(offset)
        p0 = n * d
        lo, hi = self.bbox
        big = 4.0 * max(self.scale, 1.0)
        sq = [(-big, -big), (big, -big), (big, big), (-big, big)]
        tol = tol_rel * max(self.scale, 1.0)
        for row in self.halfspaces:
            a3, b = row[:3], row[3]
            au = a3.dot(t1)
            av = a3.dot(t2)
            c = a3.dot(p0) + b
            sq = clip_convex_polygon(sq, au, av, c, tol=tol)
            if len(sq) < 3:
                return None
        poly = ShPolygon(sq)
        if poly.area <= 0.0:
            return None
        return poly

    def measure(self):
        return self.volume

    def sample_bbox(self):
        return self.bbox


def box(lo, hi, name="box"):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    corners = [(x, y, z) for x in (lo[0], hi[0]) for y in (lo[1], hi[1])
               for z in (lo[2], hi[2])]
    return ConvexPolyhedron.from_points(corners, name=name)


# ---------------------------------------------------------------------------
# polyhedron booleans (pairwise intersections, unions, free surface)
# ---------------------------------------------------------------------------

def _chebyshev_center(halfspaces):
    """Interior point and radius of {A x + b <= 0}; radius <= 0 means empty."""
    A = halfspaces[:, :3]
    b = halfspaces[:, 3]
    norms = np.linalg.norm(A, axis=1)
    res = linprog(c=[0, 0, 0, -1.0],
                  A_ub=np.column_stack([A, norms]), b_ub=-b,
                  bounds=[(None, None)] * 3 + [(None, None)],
                  method="highs")
    if not res.success:
        return None, -np.inf
    return res.x[:3], res.x[3]


def _bbox_overlap(P, Q, margin):
    lo = np.maximum(P.bbox[0], Q.bbox[0])
    hi = np.minimum(P.bbox[1], Q.bbox[1])
    return np.all(hi - lo > margin)


def intersection_polyhedron(P, Q, rel_tol=1e-9):
    """Intersection of two convex polyhedra, or None if it has no volume.

    Sliver intersections that defeat the exact hull construction fall back
    to a joggled hull (volume exact to joggle precision); their inscribed
    radius is below rel_tol x scale anyway."""
    scale = max(P.scale, Q.scale)
    if not _bbox_overlap(P, Q, rel_tol * scale):
        return None
    hs = np.vstack([P.halfspaces, Q.halfspaces])
    center, radius = _chebyshev_center(hs)
    if center is None or radius <= rel_tol * scale:
        return None
    name = f"{P.name}&{Q.name}"
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            hi = HalfspaceIntersection(hs, center)
        pts = hi.intersections
        pts = pts[np.all(np.isfinite(pts), axis=1)]
        if len(pts) < 4:
            return None
        out = ConvexPolyhedron.from_points(pts, name=name)
    except (QhullError, DegenerateHull):
        # sliver below the resolvable scale: inscribed radius barely above
        # the gate but no well-posed hull; its volume is negligible
        return None
    cap = min(P.volume, Q.volume)
    if out.volume > cap * (1.0 + 1e-6):
        if radius < 1e-6 * scale:
            return None  # sliver arithmetic noise, negligible volume
        raise QuadratureFailed(
            f"inconsistent intersection volume for {name}: "
            f"{out.volume} > {cap}")
    return out


def intersect_volume(P, Q):
    inter = intersection_polyhedron(P, Q)
    return 0.0 if inter is None else inter.volume


def union_volume(polys):
    """Volume of the union of convex polyhedra by sweep decomposition:
    vol(U) = sum_i [vol(P_i) - vol(union of P_j & P_i for j < i)]."""
    total = 0.0
    for i, P in enumerate(polys):
        cuts = []
        for Q in polys[:i]:
            X = intersection_polyhedron(P, Q)
            if X is not None:
                cuts.append(X)
        total += P.volume - (union_volume(cuts) if cuts else 0.0)
    return total


def pairwise_quadratic_integral(polys, weights):
    """Integral over R^3 of (sum_i w_i * chi_i)^2-type products: given scalar
    weights w_ij = <S_i, S_j>, returns sum_ij w_ij vol(P_i & P_j).

    `weights` is an (n, n) symmetric matrix.  Self terms use exact volumes.
    """
    n = len(polys)
    total = 0.0
    for i in range(n):
        total += weights[i, i] * polys[i].volume
        for j in range(i + 1, n):
            if weights[i, j] == 0.0:
                continue
            v = intersect_volume(polys[i], polys[j])
            if v > 0.0:
                total += 2.0 * weights[i, j] * v
    return total


def free_boundary_area(polys, exclude_planes=(), scale=None):
    """Area of the boundary of union(polys) not lying in any excluded plane.

    For every face of every polyhedron, the parts covered by other polyhedra
    (their cross-sections in the face plane) are removed.  Coincident
    same-side faces are assumed to occur only on excluded planes, which holds
    for the cell catalogue.
    """
    if scale is None:
        scale = max(p.scale for p in polys)
    excl = {plane_key(n, d, scale) for (n, d) in exclude_planes}
    total = 0.0
    for i, P in enumerate(polys):
        for f in P.faces:
            if plane_key(f.normal, f.offset, scale) in excl:
                continue
            n, t1, t2 = plane_basis(f.normal)
            d = f.offset
            uv = [(float(v.dot(t1)), float(v.dot(t2)))
                  for v in P.vertices[list(f.cycle)]]
            fpoly = ShPolygon(uv)
            if fpoly.area <= (1e-12 * scale) ** 2:
                continue
            covers = []
            for j, Q in enumerate(polys):
                if j == i:
                    continue
                sl = Q.slice_polygon(n, d)
                if sl is not None and sl.area > 0:
                    covers.append(sl)
            free = fpoly
            if covers:
                free = fpoly.difference(unary_union(covers))
            total += float(free.area)
    return total


# ---------------------------------------------------------------------------
# circle / rectangle helpers (exact slice areas for balls and cylinders)
# ---------------------------------------------------------------------------

def circle_rect_area(cx, cy, r, x0, x1, y0, y1):
    """Area of the disc of radius r about (cx, cy) intersected with the
    axis-aligned rectangle [x0, x1] x [y0, y1] (1D adaptive quadrature of the
    exact chord length; breakpoints at the tangency abscissae)."""
    if r <= 0.0:
        return 0.0
    a = max(x0, cx - r)
    b = min(x1, cx + r)
    if b <= a:
        return 0.0

    def chord(x):
        h = r * r - (x - cx) ** 2
        if h <= 0.0:
            return 0.0
        h = math.sqrt(h)
        return max(0.0, min(y1, cy + h) - max(y0, cy - h))

    pts = sorted({a, b, cx, max(a, min(b, cx - r)), max(a, min(b, cx + r))})
    total = 0.0
    import warnings
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo <= 0:
            continue
        with warnings.catch_warnings():
            # the chord has a sqrt kink at the tangency abscissae; the
            # breakpoints isolate it and the achieved accuracy is ample
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(chord, lo, hi, limit=200,
                                    epsabs=1e-14 * max(r, 1.0) ** 2,
                                    epsrel=1e-12)
        total += val
    return total


# ---------------------------------------------------------------------------
# curved primitives
# ---------------------------------------------------------------------------

class Ball:
    """Ball, optionally clipped to an axis-aligned box."""

    def __init__(self, center, radius, clip_box=None, name="ball"):
        self.center = np.asarray(center, float)
        self.radius = float(radius)
        self.clip_box = None if clip_box is None else tuple(
            np.asarray(v, float) for v in clip_box)
        self.name = name
        if self.clip_box is None:
            self.bbox = (self.center - self.radius, self.center + self.radius)
        else:
            self.bbox = (np.maximum(self.center - self.radius, self.clip_box[0]),
                         np.minimum(self.center + self.radius, self.clip_box[1]))
        self.scale = float(np.max(self.bbox[1] - self.bbox[0]))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        inside = np.einsum("ij,ij->i", p - self.center, p - self.center) \
            <= (self.radius + tol) ** 2
        if self.clip_box is not None:
            lo, hi = self.clip_box
            inside &= np.all((p >= lo - tol) & (p <= hi + tol), axis=1)
        return inside

    def measure(self):
        if self.clip_box is None:
            return 4.0 / 3.0 * math.pi * self.radius ** 3
        lo, hi = self.clip_box
        c, r = self.center, self.radius
        z0, z1 = max(lo[2], c[2] - r), min(hi[2], c[2] + r)
        if z1 <= z0:
            return 0.0

        def slice_area(z):
            rho2 = r * r - (z - c[2]) ** 2
            if rho2 <= 0:
                return 0.0
            return circle_rect_area(c[0], c[1], math.sqrt(rho2),
                                    lo[0], hi[0], lo[1], hi[1])

        val, _ = integrate.quad(slice_area, z0, z1, limit=400, epsrel=1e-10)
        return val

    @property
    def boundary_area(self):
        if self.clip_box is not None:
            raise UnsupportedBoolean("area of clipped ball not in catalogue")
        return 4.0 * math.pi * self.radius ** 2

    def sample_bbox(self):
        return self.bbox


class AxisCylinder:
    """Infinite circular cylinder along a coordinate axis, clipped to a box."""

    def __init__(self, center, axis, radius, clip_box, name="cyl"):
        self.center = np.asarray(center, float)
        self.axis = int(axis)  # 0, 1 or 2
        self.radius = float(radius)
        self.clip_box = tuple(np.asarray(v, float) for v in clip_box)
        self.name = name
        self.tr = [i for i in range(3) if i != self.axis]  # transverse axes
        lo = np.array(self.clip_box[0], float)
        hi = np.array(self.clip_box[1], float)
        for t in self.tr:
            lo[t] = max(lo[t], self.center[t] - self.radius)
            hi[t] = min(hi[t], self.center[t] + self.radius)
        self.bbox = (lo, hi)
        self.scale = float(np.max(hi - lo))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        u = p[:, self.tr[0]] - self.center[self.tr[0]]
        v = p[:, self.tr[1]] - self.center[self.tr[1]]
        inside = u * u + v * v <= (self.radius + tol) ** 2
        lo, hi = self.clip_box
        inside &= np.all((p >= lo - tol) & (p <= hi + tol), axis=1)
        return inside

    def measure(self):
        lo, hi = self.clip_box
        length = hi[self.axis] - lo[self.axis]
        t0, t1 = self.tr
        area = circle_rect_area(self.center[t0], self.center[t1], self.radius,
                                lo[t0], hi[t0], lo[t1], hi[t1])
        return area * length

    def sample_bbox(self):
        return self.bbox


class RevolutionSolid:
    """Solid of revolution about a vertical axis through (cx, cy):
    {(x, y, z) : (x-cx)^2 + (y-cy)^2 <= r2(zeta)} for zeta = (z-z0)/height.

    The squared radius r2 is a polynomial in the normalized height, so the
    volume is an exact polynomial integral and the derivative r*r' needed by
    the stress fields is available in closed form.
    """

    def __init__(self, center_xy, z0, height, r2_poly: Polynomial, name="rev"):
        self.center = np.asarray(center_xy, float)
        self.z0 = float(z0)
        self.height = float(height)
        self.r2 = r2_poly
        self.name = name
        rmax = math.sqrt(max(1e-300, float(np.max(
            self.r2(np.linspace(0.0, 1.0, 513))))))
        lo = np.array([self.center[0] - rmax, self.center[1] - rmax, self.z0])
        hi = np.array([self.center[0] + rmax, self.center[1] + rmax,
                       self.z0 + self.height])
        self.bbox = (lo, hi)
        self.scale = float(np.max(hi - lo))

    def radius_at(self, z):
        zeta = (np.asarray(z, float) - self.z0) / self.height
        return np.sqrt(np.maximum(self.r2(zeta), 0.0))

    def r_rprime(self, z):
        """r(z) * r'(z) = (r^2)'(z) / 2, exact from the polynomial."""
        zeta = (np.asarray(z, float) - self.z0) / self.height
        return self.r2.deriv()(zeta) / (2.0 * self.height)

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        zeta = (p[:, 2] - self.z0) / self.height
        ok = (zeta >= -tol) & (zeta <= 1.0 + tol)
        r2 = np.where(ok, np.maximum(self.r2(np.clip(zeta, 0, 1)), 0.0), -1.0)
        u = p[:, 0] - self.center[0]
        v = p[:, 1] - self.center[1]
        return ok & (u * u + v * v <= r2 + tol * max(self.scale, 1.0))

    def measure(self):
        return math.pi * self.height * float(self.r2.integ()(1.0) -
                                             self.r2.integ()(0.0))

    @property
    def boundary_area(self):
        return self.lateral_area()

    def lateral_area(self):
        """Integral of 2 pi r sqrt(1 + r'^2) dz, written through r^2 so the
        cone tip (r -> 0) stays finite: 2 pi sqrt(r^2 + ((r^2)'/2h)^2)."""
        dr2 = self.r2.deriv()

        def f(zeta):
            r2 = max(float(self.r2(zeta)), 0.0)
            slope = float(dr2(zeta)) / (2.0 * self.height)
            return 2.0 * math.pi * math.sqrt(r2 + slope * slope)

        val, _ = integrate.quad(f, 0.0, 1.0, limit=400, epsrel=1e-8)
        return val * self.height

    def sample_bbox(self):
        return self.bbox


class BoxMinus:
    """Axis-aligned box minus a list of pairwise disjoint interior voids."""

    def __init__(self, lo, hi, voids, name="box-minus"):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        self.voids = list(voids)
        self.name = name
        self.bbox = (self.lo, self.hi)
        self.scale = float(np.max(self.hi - self.lo))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        inside = np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)
        for v in self.voids:
            inside &= ~v.contains(p, tol=-tol if tol else 0.0)
        return inside

    def measure(self):
        vol = float(np.prod(self.hi - self.lo))
        return vol - sum(v.measure() for v in self.voids)

    def sample_bbox(self):
        return self.bbox


class ComplementInBox:
    """Part of a box outside one primitive (ball or cylinder)."""

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
        vol = float(np.prod(self.hi - self.lo))
        return vol - self.primitive.measure()

    def sample_bbox(self):
        return self.bbox


class RegionDifference:
    """Base region minus subtracted regions (subtractions must lie inside the
    base for the measure to be exact, which holds in the cell catalogue)."""

    def __init__(self, base, subtractions, name="difference"):
        self.base = base
        self.subtractions = list(subtractions)
        self.name = name
        self.bbox = base.sample_bbox()
        self.scale = getattr(base, "scale", 1.0)

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        inside = self.base.contains(p, tol=tol)
        for s in self.subtractions:
            inside &= ~s.contains(p)
        return inside

    def measure(self):
        return self.base.measure() - sum(s.measure() for s in self.subtractions)

    def sample_bbox(self):
        return self.bbox


class SectorShell:
    """Radial shell {x = Z + t v : r_in < t < r_out} restricted to the points
    whose ray, extended to radius `reach`, still lands inside the box.  This
    is the spreading-cone region of the boundary cells."""

    def __init__(self, apex, r_in, r_out, lo, hi, reach=None, name="sector"):
        self.apex = np.asarray(apex, float)
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        self.reach = self.r_out if reach is None else float(reach)
        self.name = name
        self.bbox = (self.lo, self.hi)
        self.scale = float(np.max(self.hi - self.lo))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, float))
        d = p - self.apex
        t = np.linalg.norm(d, axis=1)
        ok = (t > self.r_in + tol) & (t < self.r_out - tol if tol else t < self.r_out)
        ok &= np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            end = self.apex + self.reach * d / t[:, None]
        ok &= np.all((end >= self.lo - 1e-15) & (end <= self.hi + 1e-15), axis=1)
        return ok

    def measure(self):
        lo, hi = self.bbox
        est, _ = qmc_measure(self, m=21)
        return est

    def sample_bbox(self):
        return self.bbox


# ---------------------------------------------------------------------------
# generic measure paths
# ---------------------------------------------------------------------------

def measure(region):
    """Exact/closed-form measure where the shape provides one."""
    return region.measure()


def boundary_area(region):
    return region.boundary_area


def qmc_measure(region, m=21):
    """Deterministic Sobol estimate of the measure over the region's bbox;
    returns (estimate, crude error scale)."""
    lo, hi = region.sample_bbox()
    vol = float(np.prod(hi - lo))
    eng = qmc.Sobol(d=3, scramble=False)
    pts = lo + eng.random_base2(m) * (hi - lo)
    frac = float(np.mean(region.contains(pts)))
    return frac * vol, vol / math.sqrt(len(pts))


def mc_measure(region, n=1_000_000, seed=0):
    """Seeded Monte-Carlo measure oracle: (estimate, standard error)."""
    lo, hi = region.sample_bbox()
    vol = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    pts = lo + rng.random((int(n), 3)) * (hi - lo)
    hits = region.contains(pts)
    frac = float(np.mean(hits))
    se = vol * math.sqrt(max(frac * (1 - frac), 1e-30) / n)
    return frac * vol, se
