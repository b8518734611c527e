"""The cell families.

Every construction is stacked from rectangular cells of width w and height l
carrying a piecewise stress field:

* strut cell        -- eight struts along the edges of an imaginary pyramid,
                       built from eleven convex hulls per quarter, all struts
                       at unit uniaxial stress (valid for F <= 1/2, w <= l);
* strut boundary    -- full-material cell spreading the concentrated square
                       traction of the strut cell onto a flat face through a
                       ball / cylinder / radial-sector decomposition;
* planar cell       -- two-dimensional strut pattern extruded along the first
                       axis (valid for F > 1/16, (1-F) w <= l);
* planar boundary   -- 2D analogue of the spreading cell;
* cone cell         -- full material block perforated by five cone-like voids
                       whose radius profile keeps the material fraction equal
                       to F on every horizontal slice (valid for 1-F < 1/64);
* block             -- the trivial full-material cell.

Each builder returns a `Cell` bundling geometry, stress field, exact cost
terms, interface samplers for the admissibility certificate, and the slice
functions used by flux-conservation and lower-bound checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate
from shapely.geometry import Polygon as ShPolygon, box as shbox
from shapely.ops import unary_union

from .errors import ParamDomain
from .geom2d import (Complement2D, ConvexPolygon2D, Disk2D, IntervalSet,
                     Rect2D, Sector2D, free_boundary_length,
                     pairwise_quadratic_integral_2d, union_area)
from .geometry import (AxisCylinder, Ball, BoxMinus, ComplementInBox,
                       ConvexPolyhedron, RegionDifference, RevolutionSolid,
                       SectorShell, circle_rect_area, free_boundary_area,
                       pairwise_quadratic_integral, union_volume)
from .stresses import (AdmissibilityReport, CallablePatch, ConstantPatch,
                       I3, InterfaceCheck, PiecewiseStressField, RadialPatch,
                       curved_flux_residual, divergence_residual,
                       face_flux_residual, frobenius, outer,
                       polygon_window_points, tensors_from_cylindrical)

F_MIN = 1e-6  # below this the strut cross-sections collapse


# ---------------------------------------------------------------------------
# shared cell container
# ---------------------------------------------------------------------------

@dataclass
class CellCosts:
    compliance: float          # integral of |sigma|_F^2 over the cell
    vertical_energy: float     # integral of |sigma e3|^2 (minorization check)
    volume: float
    perimeter_interior: float  # material-void area away from the cell top/bottom
    bottom_exposure: float     # bottom-face area unmatched by the layer below
    provenance: dict


@dataclass
class Cell:
    family: str
    dim: int
    F: float
    w: float
    height: float
    params: dict
    field: object
    material_regions: list
    void_regions: list
    costs: CellCosts
    interface_runner: object = None      # callable(n) -> [InterfaceCheck]
    divergence_runner: object = None     # callable(n) -> [InterfaceCheck]
    frobenius_cap: float = None
    flux_fn: object = None               # z -> integral of sigma_zz over slice
    slice_area_fn: object = None
    slice_compliance_fn: object = None
    bottom_pattern: object = None
    top_pattern: object = None
    notes: dict = dc_field(default_factory=dict)

    # -- evaluation ---------------------------------------------------------

    def stress_at(self, points):
        p = np.atleast_2d(np.asarray(points, float))
        if self.dim == 3:
            return self.field.stress_at(p)
        S2 = self.field.stress_at(p[:, 1:3])
        out = np.zeros((len(p), 3, 3))
        out[:, 1:3, 1:3] = S2
        return out

    def contains_material(self, points):
        p = np.atleast_2d(np.asarray(points, float))
        q = p if self.dim == 3 else p[:, 1:3]
        inside = np.zeros(len(p), dtype=bool)
        for r in self.material_regions:
            inside |= r.contains(q)
        return inside

    # -- costs --------------------------------------------------------------

    def perimeter_cell(self):
        return self.costs.perimeter_interior + self.costs.bottom_exposure

    def base_measure(self):
        """Cell footprint measure: w^2 for 3D cells, w per unit depth in 2D."""
        return self.w ** 2 if self.dim == 3 else self.w

    def delta_j(self, eps):
        c = self.costs
        return (c.compliance + c.volume + eps * self.perimeter_cell()
                - 2.0 * self.F * self.base_measure() * self.height)

    def mean_vertical_traction(self, z):
        return self.flux_fn(z) / self.base_measure()

    # -- certificate --------------------------------------------------------

    def certify(self, n=5):
        rep = AdmissibilityReport(cell=self.family)
        if self.interface_runner is not None:
            rep.interfaces = self.interface_runner(n)
        if self.divergence_runner is not None:
            rep.divergences = self.divergence_runner(max(n * n, 16))
        rep.support_residual, rep.support_tol = self._support_check()
        if self.frobenius_cap is not None:
            cap, worst = self._cap_check()
            rep.notes["frobenius_cap"] = cap
            rep.notes["frobenius_max"] = worst
        rep.notes["family"] = self.family
        return rep

    def _support_check(self, n=10000, seed=7):
        if self.dim == 3:
            lo = self.field.box_lo
            hi = self.field.box_hi
        else:
            lo, hi = self.field.box_lo, self.field.box_hi
        rng = np.random.default_rng(seed)
        d = len(lo)
        pts = lo + rng.random((n, d)) * (np.asarray(hi) - np.asarray(lo))
        pts3 = pts if d == 3 else np.column_stack(
            [np.zeros(len(pts)), pts])
        void = ~self.contains_material(pts3)
        if not np.any(void):
            return 0.0, 1e-12
        S = self.stress_at(pts3[void])
        return float(np.max(frobenius(S))), 1e-12

    def _cap_check(self, n=20000, seed=11):
        lo = np.asarray(self.field.box_lo, float)
        hi = np.asarray(self.field.box_hi, float)
        rng = np.random.default_rng(seed)
        pts = lo + rng.random((n, len(lo))) * (hi - lo)
        pts3 = pts if len(lo) == 3 else np.column_stack(
            [np.zeros(len(pts)), pts])
        worst = float(np.max(frobenius(self.stress_at(pts3))))
        return self.frobenius_cap, worst


# ---------------------------------------------------------------------------
# 2D field (planar cells)
# ---------------------------------------------------------------------------

class PiecewiseStressField2D:
    """Additive piecewise 2x2 field on the planar cell rectangle."""

    def __init__(self, patches, box_lo, box_hi):
        self.patches = list(patches)
        self.box_lo = np.asarray(box_lo, float)
        self.box_hi = np.asarray(box_hi, float)

    @property
    def scale(self):
        return float(np.max(self.box_hi - self.box_lo))

    def stress_at(self, points):
        p = np.atleast_2d(np.asarray(points, float))
        out = np.zeros((len(p), 2, 2))
        for patch in self.patches:
            mask = patch.region.contains(p)
            if np.any(mask):
                out[mask] += patch.stress_at(p[mask])
        return out


class Constant2D:
    def __init__(self, region, tensor, name=""):
        self.region = region
        self.tensor = np.asarray(tensor, float)
        self.name = name or getattr(region, "name", "patch2d")

    def stress_at(self, points):
        return np.broadcast_to(self.tensor,
                               (len(np.atleast_2d(points)), 2, 2)).copy()

    def divergence_at(self, points):
        return np.zeros((len(np.atleast_2d(points)), 2))


class Radial2D:
    """c0 (t0/t)^k rhat@rhat about an apex; divergence (c' + c/t) rhat."""

    def __init__(self, region, apex, c0, t0, k, name="radial2d"):
        self.region = region
        self.apex = np.asarray(apex, float)
        self.c0, self.t0, self.k = float(c0), float(t0), float(k)
        self.name = name

    def _ct(self, t):
        return self.c0 * (self.t0 / t) ** self.k

    def stress_at(self, points):
        p = np.atleast_2d(points)
        d = p - self.apex
        t = np.linalg.norm(d, axis=1)
        rhat = d / t[:, None]
        c = self._ct(t)
        return c[:, None, None] * np.einsum("ni,nj->nij", rhat, rhat)

    def divergence_at(self, points):
        p = np.atleast_2d(points)
        d = p - self.apex
        t = np.linalg.norm(d, axis=1)
        rhat = d / t[:, None]
        c = self._ct(t)
        return (-self.k * c / t + c / t)[:, None] * rhat


def edge_flux_residual_2d(field, a, b, delta=None, n=7):
    """Max jump of traction across the segment a-b of a 2D field
    (extrapolated one-sided probes, irrational sample spacing)."""
    from .stresses import _R2A, _one_sided_limits
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if delta is None:
        delta = 1e-7 * min(float(np.linalg.norm(b - a)), field.scale)
    t = (b - a)
    L = np.linalg.norm(t)
    t = t / L
    nrm = np.array([-t[1], t[0]])
    lam = 0.05 + 0.9 * np.mod(0.5 + np.arange(1, n + 1) * _R2A, 1.0)
    pts = a[None, :] + lam[:, None] * (b - a)[None, :]
    nrm2 = np.broadcast_to(nrm, pts.shape)
    Sp, Sm, valid = _one_sided_limits(field, pts, nrm2, delta)
    jump = np.einsum("nij,j->ni", Sp - Sm, nrm)
    norms = np.linalg.norm(jump, axis=1)
    norms = norms[valid] if np.any(valid) else norms
    return float(np.max(norms))


# ---------------------------------------------------------------------------
# strut cell (pyramid-edge framework), F <= 1/2, w <= l
# ---------------------------------------------------------------------------

def strut_angle(F, w, l):
    """Inclination of the rising struts: bisection for tan(alpha) on the
    bracket [(sqrt2-1) w / (4 l), w / (sqrt2 l)].  The root makes the strut
    hull an exact prism from the base quad onto the top landing square."""
    s = 0.5 * w * math.sqrt(F)

    def f(T):
        return math.sqrt(2) * s * T * T - l * T + math.sqrt(2) * (w / 4 - s / 2)

    lo = (math.sqrt(2) - 1) * w / (4 * l)
    hi = w / (math.sqrt(2) * l)
    flo, fhi = f(lo), f(hi)
    if flo < 0 or fhi > 0:
        raise ParamDomain("strut angle bracket has no sign change")
    while hi - lo > 1e-14 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _strut_quarter(F, w, l):
    """Eleven hulls and stresses of the front-right quarter."""
    s = 0.5 * w * math.sqrt(F)
    tan_a = strut_angle(F, w, l)
    alpha = math.atan(tan_a)
    a = math.sqrt(2) * s * tan_a
    u = w / 4.0
    P1, P2, P3, P4 = (s, s, 0), (0, s, 0), (0, 0, 0), (s, 0, 0)
    P5, P6, P7, P8 = (s, s, a / 2), (0, s, a / 2), (0, 0, a / 2), (s, 0, a / 2)
    P9 = (0, 0, a)
    A = (u - s / 2, u - s / 2, l)
    B = (u + s / 2, u - s / 2, l)
    C = (u + s / 2, u + s / 2, l)
    D = (u - s / 2, u + s / 2, l)
    E = (u + s / 2, u - s / 2, l - a / 2)
    Fp = (u + s / 2, u + s / 2, l - a)
    G = (u - s / 2, u + s / 2, l - a / 2)
    H = (u + s / 2, u + s / 2, l - a / 2)
    Iv = (u - s / 2, 0, l)
    J = (u + s / 2, 0, l - a / 2)
    K = (u + s / 2, 0, l - a)
    L = (u - s / 2, 0, l - a / 2)
    M = (0, u - s / 2, l)
    N = (0, u + s / 2, l - a / 2)
    O = (0, u + s / 2, l - a)
    P = (0, u - s / 2, l - a / 2)

    tau = np.array([math.sin(alpha) / math.sqrt(2),
                    math.sin(alpha) / math.sqrt(2), math.cos(alpha)])
    e1, e2, e3 = I3
    defs = [
        ("O1", [P1, P2, P3, P4, P5, P6, P7, P8], outer(e3)),
        ("O2", [P6, P7, P8, P9], I3.copy()),
        ("O3", [P1, P5, P6, P8], -I3),
        ("O4", [P1, P2, P5, P6, P7, P8], outer(e1)),
        ("O5", [P1, P4, P5, P6, P7, P8], outer(e2)),
        ("O6", [P1, P6, P9, P8, A, E, Fp, G], outer(tau)),
        ("O7", [A, B, C, D, E, Fp, G], I3.copy()),
        ("O8", [A, B, C, D, E, H], -outer(e2)),
        ("O9", [D, Fp, G, H, Iv, J, K, L], -outer(e2)),
        ("O10", [A, B, C, D, G, H], -outer(e1)),
        ("O11", [M, N, O, P, B, E, Fp, H], -outer(e1)),
    ]
    hulls = [(ConvexPolyhedron.from_points(p, name=nm), S)
             for nm, p, S in defs]
    derived = dict(s=s, a=a, alpha=alpha, tan_alpha=tan_a)
    return hulls, derived


_DY = np.diag([1.0, -1.0, 1.0])
_DX = np.diag([-1.0, 1.0, 1.0])


def _mirror_pieces(quarter):
    """Quarter -> full cell: reflect in y, then reflect the front half in x,
    conjugating the stresses by the corresponding sign matrices."""
    front = list(quarter)
    front += [(h.transformed(A=_DY, name=h.name + "'"), _DY @ S @ _DY)
              for h, S in quarter]
    full = list(front)
    full += [(h.transformed(A=_DX, name=h.name + "''"), _DX @ S @ _DX)
             for h, S in front]
    return full


def _polyhedral_interface_runner(field, hulls, exclude_planes, scale, tol,
                                 feature_scale=None):
    """Probe every hull face (windows shrunk away from edges).  The probe
    offset scales with the local feature size so that nearly parallel
    interfaces from slanted thin pieces are not straddled."""

    def run(n):
        from .geometry import plane_basis, plane_key
        excl = {plane_key(nrm, d, scale) for (nrm, d) in exclude_planes}
        checks = []
        for h, _ in hulls:
            for f in h.faces:
                if plane_key(f.normal, f.offset, scale) in excl:
                    continue
                nrm, t1, t2 = plane_basis(f.normal)
                sgn = 1.0 if np.dot(nrm, f.normal) > 0 else -1.0
                verts = h.vertices[list(f.cycle)]
                uv = [(float(v.dot(t1)), float(v.dot(t2))) for v in verts]
                poly = ShPolygon(uv)
                pts = polygon_window_points(poly, f.normal * sgn,
                                            sgn * f.offset, n=n)
                if len(pts) == 0:
                    continue
                edges = np.linalg.norm(np.diff(
                    np.vstack([verts, verts[:1]]), axis=0), axis=1)
                local = min(float(np.min(edges[edges > 0])),
                            feature_scale or scale)
                delta = max(1e-7 * local, 1e-13 * scale)
                res = face_flux_residual(field, None, f.normal, pts,
                                         delta=delta)
                checks.append(InterfaceCheck(
                    name=f"{h.name}:{np.round(f.normal, 3)}",
                    residual=res, tol=tol))
        return checks

    return run


def _constant_divergence_runner(patches):
    def run(n):
        return [InterfaceCheck(name=p.name, residual=0.0, tol=1e-12)
                for p in patches]
    return run


@lru_cache(maxsize=256)
def build_strut_cell(F, w, l):
    """Pyramid-edge strut cell: 44 hulls (11 per quarter) with unit-stress
    struts; admissible for 0 < F <= 1/2 and w <= l."""
    F, w, l = float(F), float(w), float(l)
    if not (F_MIN <= F <= 0.5):
        raise ParamDomain(f"strut cell needs F in [{F_MIN}, 1/2], got {F}")
    if w > l * (1 + 1e-12):
        raise ParamDomain(f"strut cell needs w <= l, got w={w} > l={l}")
    quarter, derived = _strut_quarter(F, w, l)
    pieces = _mirror_pieces(quarter)
    s = derived["s"]

    patches = [ConstantPatch(h, S, name=h.name) for h, S in pieces]
    lo = np.array([-w / 2, -w / 2, 0.0])
    hi = np.array([w / 2, w / 2, l])
    fld = PiecewiseStressField(patches, lo, hi)

    # exact costs from the quarter (mirrors contribute identically)
    qh = [h for h, _ in quarter]
    qS = [S for _, S in quarter]
    n = len(qh)
    Wfro = np.array([[np.tensordot(qS[i], qS[j]) for j in range(n)]
                     for i in range(n)])
    Wver = np.array([[qS[i][2] @ qS[j][2] for j in range(n)]
                     for i in range(n)])
    comp = 4.0 * pairwise_quadratic_integral(qh, Wfro)
    vert = 4.0 * pairwise_quadratic_integral(qh, Wver)
    vol = 4.0 * union_volume(qh)
    mirrors = [((1, 0, 0), 0.0), ((0, 1, 0), 0.0),
               ((0, 0, 1), 0.0), ((0, 0, 1), l)]
    per = 4.0 * free_boundary_area(qh, exclude_planes=mirrors, scale=w)
    costs = CellCosts(compliance=comp, vertical_energy=vert, volume=vol,
                      perimeter_interior=per, bottom_exposure=0.0,
                      provenance={"compliance": "exact", "volume": "exact",
                                  "perimeter": "exact"})

    def slice_polys(z):
        out = []
        for h, S in pieces:
            lo_z, hi_z = h.bbox[0][2], h.bbox[1][2]
            if not (lo_z - 1e-15 <= z <= hi_z + 1e-15):
                continue
            poly = h.slice_polygon((0, 0, 1), z)
            if poly is not None:
                out.append((poly, S))
        return out

    def flux_fn(z):
        return sum(S[2, 2] * p.area for p, S in slice_polys(z))

    def slice_area_fn(z):
        polys = [p for p, _ in slice_polys(z)]
        return float(unary_union(polys).area) if polys else 0.0

    def slice_compliance_fn(z):
        ps = slice_polys(z)
        total = 0.0
        for i, (pi, Si) in enumerate(ps):
            total += np.tensordot(Si, Si) * pi.area
            for j in range(i + 1, len(ps)):
                pj, Sj = ps[j]
                wij = float(np.tensordot(Si, Sj))
                if wij:
                    total += 2.0 * wij * float(pi.intersection(pj).area)
        return total

    cell = Cell(
        family="strut", dim=3, F=F, w=w, height=l,
        params=dict(F=F, w=w, l=l, **derived),
        field=fld,
        material_regions=[h for h, _ in pieces], void_regions=[],
        costs=costs,
        interface_runner=_polyhedral_interface_runner(
            fld, pieces, mirrors, w, tol=1e-10,
            feature_scale=derived["a"]),
        divergence_runner=_constant_divergence_runner(patches),
        frobenius_cap=math.sqrt(3.0),
        flux_fn=flux_fn, slice_area_fn=slice_area_fn,
        slice_compliance_fn=slice_compliance_fn,
        bottom_pattern=shbox(-s, -s, s, s),
        top_pattern=unary_union(
            [shbox(sx * w / 4 - s / 2, sy * w / 4 - s / 2,
                   sx * w / 4 + s / 2, sy * w / 4 + s / 2)
             for sx in (-1, 1) for sy in (-1, 1)]),
    )
    return cell


# ---------------------------------------------------------------------------
# strut boundary cell (full material, spreads squares onto a flat face)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def build_strut_boundary_cell(F, w, qmc_m=19):
    """Boundary cell of the strut family: height sqrt(3) w / 2, fully filled
    with material; ball + cylinder + radial-sector patches spread the unit
    square traction into the uniform traction F e3 on the top face."""
    F, w = float(F), float(w)
    if not (F_MIN <= F <= 0.5):
        raise ParamDomain(f"boundary cell needs F in [{F_MIN}, 1/2]")
    s = 0.5 * w * math.sqrt(F)
    l = math.sqrt(3.0) * w / 2.0
    Z = np.array([0.0, 0.0, -s])
    lo = np.array([-w / 2, -w / 2, 0.0])
    hi = np.array([w / 2, w / 2, l])
    small_lo = np.array([-s, -s, 0.0])
    small_hi = np.array([s, s, l])

    ball_in = Ball(Z, math.sqrt(3) * s, clip_box=(small_lo, small_hi),
                   name="O12")
    cyl_x = AxisCylinder(Z, 0, math.sqrt(2) * s, (small_lo, small_hi),
                         name="O13")
    cyl_y = AxisCylinder(Z, 1, math.sqrt(2) * s, (small_lo, small_hi),
                         name="O14")
    sector = SectorShell(Z, math.sqrt(3) * s, math.sqrt(3) * w / 2, lo, hi,
                         reach=math.sqrt(3) * w / 2, name="O15")
    out_ball = ComplementInBox(lo, hi, Ball(Z, math.sqrt(3) * w / 2,
                                            clip_box=(lo, hi)), name="O16")
    out_cx = ComplementInBox(lo, hi,
                             AxisCylinder(Z, 0, math.sqrt(2) * w / 2,
                                          (lo, hi)), name="O17")
    out_cy = ComplementInBox(lo, hi,
                             AxisCylinder(Z, 1, math.sqrt(2) * w / 2,
                                          (lo, hi)), name="O18")

    e1, e2, _ = I3
    patches = [
        ConstantPatch(ball_in, I3, "O12"),
        ConstantPatch(cyl_x, -outer(e1), "O13"),
        ConstantPatch(cyl_y, -outer(e2), "O14"),
        RadialPatch(sector, Z, 1.0, math.sqrt(3) * s, 2.0, name="O15"),
        ConstantPatch(out_ball, F * I3, "O16"),
        ConstantPatch(out_cx, -F * outer(e1), "O17"),
        ConstantPatch(out_cy, -F * outer(e2), "O18"),
    ]
    fld = PiecewiseStressField(patches, lo, hi)

    # compliance by deterministic Sobol quadrature (curved overlapping
    # regions have no common closed form); volume exact
    from scipy.stats import qmc as _qmc
    eng = _qmc.Sobol(d=3, scramble=False)
    pts = lo + eng.random_base2(qmc_m) * (hi - lo)
    S = fld.stress_at(pts)
    volbox = float(np.prod(hi - lo))
    comp = float(np.mean(np.einsum("nij,nij->n", S, S))) * volbox
    vert = float(np.mean(np.einsum("nij,nij->n", S[:, :, 2:3], S[:, :, 2:3]))) \
        * volbox
    vol = w * w * l
    costs = CellCosts(compliance=comp, vertical_energy=vert, volume=vol,
                      perimeter_interior=0.0,
                      bottom_exposure=w * w * (1.0 - F),
                      provenance={"compliance": f"qmc2^{qmc_m}",
                                  "volume": "exact", "perimeter": "exact"})

    # interface samplers -----------------------------------------------------
    def run_interfaces(n):
        checks = []
        rng = np.random.default_rng(3)

        def sphere_pts(radius, count):
            v = rng.normal(size=(count * 20, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            pts = Z + radius * v
            keep = (np.abs(v[:, 0]) < 1 / math.sqrt(3) - 0.02) & \
                   (np.abs(v[:, 1]) < 1 / math.sqrt(3) - 0.02) & \
                   (pts[:, 2] > 0.02 * s)
            pts, v = pts[keep][:count], v[keep][:count]
            return pts, v

        for radius, nm in ((math.sqrt(3) * s, "sphere-inner"),
                           (math.sqrt(3) * w / 2, "sphere-outer")):
            pts, v = sphere_pts(radius, n * n)
            if nm == "sphere-inner":
                keep = np.all(np.abs(pts[:, :2]) < s - 1e-3 * s, axis=1)
                pts, v = pts[keep], v[keep]
            else:
                keep = np.all(np.abs(pts[:, :2]) < w / 2 - 1e-3 * w, axis=1) \
                    & (pts[:, 2] < l - 1e-3 * w)
                pts, v = pts[keep], v[keep]
            if len(pts):
                checks.append(InterfaceCheck(
                    nm, curved_flux_residual(fld, pts, v), 1e-10))

        # cylinder walls inside the small box (angle range where z > 0)
        for axis, nm in ((0, "cylx-wall"), (1, "cyly-wall")):
            r = math.sqrt(2) * s
            tr = 1 - axis  # transverse horizontal axis
            th = np.linspace(math.pi / 4 + 0.05, 3 * math.pi / 4 - 0.05,
                             n * 2)
            ax = np.linspace(-0.9 * s, 0.9 * s, n * 2)
            TH, AX = np.meshgrid(th, ax, indexing="ij")
            pts = np.tile(Z, (TH.size, 1))
            pts[:, axis] = AX.ravel()
            pts[:, tr] += r * np.cos(TH.ravel())
            pts[:, 2] += r * np.sin(TH.ravel())
            keep = (pts[:, 2] > 1e-3 * s) & \
                   (np.abs(pts[:, tr]) < s * (1 - 1e-3))
            pts = pts[keep]
            if len(pts):
                nrm = np.zeros_like(pts)
                nrm[:, tr] = (pts[:, tr] - Z[tr]) / r
                nrm[:, 2] = (pts[:, 2] - Z[2]) / r
                checks.append(InterfaceCheck(
                    nm, curved_flux_residual(fld, pts, nrm), 1e-10))

        # outer cylinder walls (radius sqrt2 w/2 about Z along e1/e2)
        for axis, nm in ((0, "cylx-outer"), (1, "cyly-outer")):
            tr = 1 - axis
            r = math.sqrt(2) * w / 2
            th = np.linspace(math.pi / 4 + 0.03, 3 * math.pi / 4 - 0.03,
                             n * 3)
            ax = np.linspace(-0.45 * w, 0.45 * w, n * 3)
            TH, AX = np.meshgrid(th, ax, indexing="ij")
            pts = np.tile(Z, (TH.size, 1))
            pts[:, axis] = AX.ravel()
            pts[:, tr] += r * np.cos(TH.ravel())
            pts[:, 2] += r * np.sin(TH.ravel())
            keep = (pts[:, 2] > 1e-3 * w) & (pts[:, 2] < l * (1 - 1e-3)) & \
                   (np.abs(pts[:, tr]) < w / 2 * (1 - 1e-3))
            pts = pts[keep]
            if len(pts):
                nrm = np.zeros_like(pts)
                nrm[:, tr] = (pts[:, tr] - Z[tr]) / r
                nrm[:, 2] = (pts[:, 2] - Z[2]) / r
                checks.append(InterfaceCheck(
                    nm, curved_flux_residual(fld, pts, nrm), 1e-10))

        # small-box side walls where the ball/cylinder patches are clipped
        for axis in (0, 1):
            for sign in (-1.0, 1.0):
                zz = np.linspace(1e-3 * s, 0.9 * s, n * 2)
                tt = np.linspace(-0.9 * s, 0.9 * s, n * 2)
                Zt, Tt = np.meshgrid(zz, tt, indexing="ij")
                pts = np.zeros((Zt.size, 3))
                pts[:, axis] = sign * s
                pts[:, 1 - axis] = Tt.ravel()
                pts[:, 2] = Zt.ravel()
                nrm = np.zeros(3)
                nrm[axis] = sign
                checks.append(InterfaceCheck(
                    f"smallbox-wall-{axis}{'+' if sign > 0 else '-'}",
                    face_flux_residual(fld, None, nrm, pts), 1e-10))
        return checks

    def run_divergence(n):
        checks = [InterfaceCheck(p.name, 0.0, 1e-12)
                  for p in patches if isinstance(p, ConstantPatch)]
        rng = np.random.default_rng(5)
        pts = lo + rng.random((n, 3)) * (hi - lo)
        mask = sector.contains(pts)
        if np.any(mask):
            checks.append(InterfaceCheck(
                "O15", divergence_residual(patches[3], pts[mask]), 1e-8))
        return checks

    def flux_fn(z):
        zs = z + s
        total = 0.0
        rho2 = 3 * s * s - zs * zs
        if rho2 > 0:  # isotropic core: sigma_zz = 1
            total += circle_rect_area(0.0, 0.0, math.sqrt(rho2), -s, s, -s, s)
        R2 = 0.75 * w * w - zs * zs
        rout = math.sqrt(R2) if R2 > 0 else 0.0
        outside = w * w - circle_rect_area(0.0, 0.0, rout,
                                           -w / 2, w / 2, -w / 2, w / 2)
        total += F * outside

        def sector_vert(rho):
            t2 = rho * rho + zs * zs
            t = math.sqrt(t2)
            if not (math.sqrt(3) * s < t < math.sqrt(3) * w / 2):
                return 0.0
            c = t / (math.sqrt(3) * rho) if rho > 0 else 2.0
            if c >= 1.0:
                theta = 2 * math.pi
            elif c <= 1 / math.sqrt(2):
                theta = 0.0
            else:
                theta = 2 * math.pi - 8 * math.acos(c)
            return 3 * s * s * zs * zs / t2 ** 2 * theta * rho

        span = math.sqrt(max(0.75 * w * w - zs * zs, 0.0))
        lo_r = math.sqrt(max(3 * s * s - zs * zs, 0.0))
        if span > lo_r:
            # kinks: angular measure regime changes at t = sqrt3 rho and
            # t = sqrt(3/2) rho, i.e. rho = zs/sqrt2 and rho = sqrt2 zs
            brk = sorted({lo_r, span,
                          min(max(zs / math.sqrt(2), lo_r), span),
                          min(max(math.sqrt(2) * zs, lo_r), span)})
            val, _ = integrate.quad(sector_vert, lo_r, span, limit=400,
                                    points=brk, epsabs=1e-13, epsrel=1e-11)
            total += val
        return total

    cell = Cell(
        family="strut-boundary", dim=3, F=F, w=w, height=l,
        params=dict(F=F, w=w, l=l, s=s),
        field=fld,
        material_regions=[_full_box_region(lo, hi)], void_regions=[],
        costs=costs,
        interface_runner=run_interfaces,
        divergence_runner=run_divergence,
        frobenius_cap=math.sqrt(3.0),
        flux_fn=flux_fn,
        slice_area_fn=lambda z: w * w,
        slice_compliance_fn=None,
        bottom_pattern=shbox(-w / 2, -w / 2, w / 2, w / 2),
        top_pattern=shbox(-w / 2, -w / 2, w / 2, w / 2),
        notes={"incoming_pattern": shbox(-s, -s, s, s)},
    )
    return cell


def _full_box_region(lo, hi):
    from .geometry import box as _box
    return _box(lo, hi, name="material")


# ---------------------------------------------------------------------------
# planar (extruded 2D) cells, F > 1/16, (1-F) w <= l
# ---------------------------------------------------------------------------

def planar_angle(F, w, l):
    """tan(alpha) for the planar cell: root of s T^2 - l T + (1-F) w / 2 = 0
    inside (0, (1-F) w / l]; requires l^2 >= 2 s (1-F) w to exist."""
    s = F * w / 4.0
    disc = l * l - 2.0 * s * (1.0 - F) * w
    if disc <= 1e-14 * l * l:
        raise ParamDomain("planar cell too short: strut cannot reach the top")

    def f(T):
        return s * T * T - l * T + (1.0 - F) * w / 2.0

    lo, hi = 0.0, (1.0 - F) * w / l
    if f(hi) > 0:
        raise ParamDomain("planar strut angle bracket has no sign change")
    while hi - lo > 1e-15 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=256)
def build_planar_cell(F, w, l):
    """Two-dimensional strut cell (to be extruded along the first axis)."""
    F, w, l = float(F), float(w), float(l)
    if not (1.0 / 16.0 < F <= 1.0 - 1.0 / 64.0):
        raise ParamDomain(f"planar cell needs 1/16 < F <= 63/64, got {F}")
    if (1.0 - F) * w > l * (1 + 1e-12):
        raise ParamDomain("planar cell needs (1-F) w <= l")
    s = F * w / 4.0
    tan_a = planar_angle(F, w, l)
    alpha = math.atan(tan_a)
    a = s * tan_a

    P1, P2, P3 = (w / 2, 0), (w / 2, l), (w / 2 - s, l)
    P4, P5, P6 = (w / 2 - s, a), (s, l), (0, l)
    P7, P8, P9 = (0, l - a), (0, a), (0, 0)
    P10, P11 = ((1 - F) * w / 2, 0), (w / 2 - s, 0)
    tau = np.array([-math.sin(alpha), math.cos(alpha)])
    Ey = np.array([[0.0, 0.0], [0.0, 1.0]])
    Ex = np.array([[1.0, 0.0], [0.0, 0.0]])
    I2 = np.eye(2)
    defs = [
        ("Q1", [P1, P2, P3, P11], Ey),
        ("Q2", [P4, P5, P7, P10], np.outer(tau, tau)),
        ("Q3", [P4, P8, P9, P11], -Ex),
        ("Q4", [P5, P6, P7], I2),
        ("Q5", [P4, P10, P11], I2),
    ]
    right = [(ConvexPolygon2D(p, name=nm), S) for nm, p, S in defs]
    Dx = np.diag([-1.0, 1.0])
    pieces = list(right)
    pieces += [(ConvexPolygon2D(h.vertices @ Dx.T, name=h.name + "'"),
                Dx @ S @ Dx) for h, S in right]

    patches = [Constant2D(h, S, name=h.name) for h, S in pieces]
    lo = np.array([-w / 2, 0.0])
    hi = np.array([w / 2, l])
    fld = PiecewiseStressField2D(patches, lo, hi)

    rh = [h for h, _ in right]
    rS = [S for _, S in right]
    nr = len(rh)
    Wfro = np.array([[np.tensordot(rS[i], rS[j]) for j in range(nr)]
                     for i in range(nr)])
    Wver = np.array([[rS[i][1] @ rS[j][1] for j in range(nr)]
                     for i in range(nr)])
    comp = 2.0 * pairwise_quadratic_integral_2d(rh, Wfro)
    vert = 2.0 * pairwise_quadratic_integral_2d(rh, Wver)
    area = 2.0 * union_area(rh)
    per = free_boundary_length([h for h, _ in pieces],
                               exclude_lines=[(0, -w / 2), (0, w / 2),
                                              (1, 0.0), (1, l)], scale=w)
    costs = CellCosts(compliance=comp, vertical_energy=vert, volume=area,
                      perimeter_interior=per,
                      bottom_exposure=(1.0 - F) * w,
                      provenance={"compliance": "exact", "volume": "exact",
                                  "perimeter": "exact"})

    def run_interfaces(n):
        checks = []
        for h, _ in pieces:
            v = h.vertices
            for i in range(len(v)):
                aip, bip = v[i], v[(i + 1) % len(v)]
                mid = 0.5 * (aip + bip)
                on_wall = (abs(abs(mid[0]) - w / 2) < 1e-12 * w
                           or abs(mid[1]) < 1e-12 * w
                           or abs(mid[1] - l) < 1e-12 * w)
                if on_wall:
                    continue
                checks.append(InterfaceCheck(
                    f"{h.name}:e{i}",
                    edge_flux_residual_2d(fld, aip, bip, n=max(n, 5)),
                    1e-10))
        return checks

    def slice_segments(z):
        """Exact 1D material segments at height z from the polygon edges."""
        segs = []
        for h, S in pieces:
            pts = []
            v = h.vertices
            for i in range(len(v)):
                p, q = v[i], v[(i + 1) % len(v)]
                if (p[1] - z) * (q[1] - z) <= 0 and p[1] != q[1]:
                    t = (z - p[1]) / (q[1] - p[1])
                    pts.append(p[0] + t * (q[0] - p[0]))
            if len(pts) >= 2:
                segs.append(((min(pts), max(pts)), S))
        return segs

    def flux_fn(z):
        return sum(S[1, 1] * (b - a) for (a, b), S in slice_segments(z))

    def slice_area_fn(z):
        return IntervalSet([iv for iv, _ in slice_segments(z)]).length

    def slice_compliance_fn(z):
        segs = slice_segments(z)
        total = 0.0
        for i, ((a1, b1), Si) in enumerate(segs):
            total += np.tensordot(Si, Si) * (b1 - a1)
            for j in range(i + 1, len(segs)):
                (a2, b2), Sj = segs[j]
                ov = min(b1, b2) - max(a1, a2)
                if ov > 0:
                    total += 2.0 * float(np.tensordot(Si, Sj)) * ov
        return total

    cell = Cell(
        family="planar", dim=2, F=F, w=w, height=l,
        params=dict(F=F, w=w, l=l, s=s, a=a, alpha=alpha, tan_alpha=tan_a),
        field=fld,
        material_regions=[h for h, _ in pieces], void_regions=[],
        costs=costs,
        interface_runner=run_interfaces,
        divergence_runner=_constant_divergence_runner(patches),
        frobenius_cap=math.sqrt(2.0),
        flux_fn=flux_fn, slice_area_fn=slice_area_fn,
        slice_compliance_fn=slice_compliance_fn,
        bottom_pattern=IntervalSet([(-w / 2, w / 2)]),
        top_pattern=IntervalSet([(-s, s), (w / 2 - s, w / 2),
                                 (-w / 2, -(w / 2 - s))]),
    )
    return cell


@lru_cache(maxsize=256)
def build_planar_boundary_cell(F, w, qmc_m=18):
    """2D boundary cell: full material, height sqrt2 w/2 - 2s, discs and
    radial sectors at the side edges spread the edge strips onto the top."""
    F, w = float(F), float(w)
    if not (1.0 / 16.0 < F <= 1.0 - 1.0 / 64.0):
        raise ParamDomain(f"planar boundary cell needs 1/16 < F <= 63/64")
    s = F * w / 4.0
    l = math.sqrt(2.0) * w / 2.0 - 2.0 * s
    if l <= 0:
        raise ParamDomain("planar boundary cell height nonpositive")
    Z = np.array([w / 2, -2.0 * s])
    rect_lo = np.array([0.0, 0.0])
    rect_hi = np.array([w / 2, l])

    disk = Disk2D(Z, math.sqrt(8) * s, clip_rect=(rect_lo, rect_hi), name="Q6")
    sector = Sector2D(Z, math.sqrt(8) * s, math.sqrt(2) * w / 2,
                      (rect_lo, rect_hi), reach=math.sqrt(2) * w / 2,
                      name="Q7")
    out = Complement2D(rect_lo, rect_hi,
                       Disk2D(Z, math.sqrt(2) * w / 2), name="Q8")
    strip = Rect2D((0.0, 0.0), (w / 2, math.sqrt(8) * s - 2 * s), name="Q9")
    I2 = np.eye(2)
    Ex = np.array([[1.0, 0.0], [0.0, 0.0]])
    right_patches = [
        Constant2D(disk, I2, "Q6"),
        Radial2D(sector, Z, 1.0, math.sqrt(8) * s, 1.0, name="Q7"),
        Constant2D(out, F * I2, "Q8"),
        Constant2D(strip, -Ex, "Q9"),
    ]

    # mirrored left half: reflect regions and conjugate by diag(-1, 1)
    class _XRef:
        def __init__(self, region):
            self.region = region
            lo2, hi2 = region.sample_bbox()
            self.bbox = (np.array([-hi2[0], lo2[1]]),
                         np.array([-lo2[0], hi2[1]]))
            self.name = region.name + "'"
            self.scale = getattr(region, "scale", 1.0)

        def contains(self, points, tol=0.0):
            p = np.atleast_2d(points).copy()
            p[:, 0] *= -1.0
            return self.region.contains(p, tol=tol)

        def measure(self):
            return self.region.measure()

        def sample_bbox(self):
            return self.bbox

    class _XRefPatch:
        def __init__(self, patch):
            self.base = patch
            self.region = _XRef(patch.region)
            self.name = patch.name + "'"

        def stress_at(self, points):
            p = np.atleast_2d(points).copy()
            p[:, 0] *= -1.0
            S = self.base.stress_at(p)
            D = np.diag([-1.0, 1.0])
            return np.einsum("ij,njk,kl->nil", D, S, D)

        def divergence_at(self, points):
            p = np.atleast_2d(points).copy()
            p[:, 0] *= -1.0
            d = self.base.divergence_at(p)
            d = d.copy()
            d[:, 0] *= -1.0
            return d

    patches = list(right_patches) + [_XRefPatch(p) for p in right_patches]
    lo = np.array([-w / 2, 0.0])
    hi = np.array([w / 2, l])
    fld = PiecewiseStressField2D(patches, lo, hi)

    from scipy.stats import qmc as _qmc
    eng = _qmc.Sobol(d=2, scramble=False)
    pts = rect_lo + eng.random_base2(qmc_m) * (rect_hi - rect_lo)
    S = fld.stress_at(pts)
    halfarea = float(np.prod(rect_hi - rect_lo))
    comp = 2.0 * float(np.mean(np.einsum("nij,nij->n", S, S))) * halfarea
    vert = 2.0 * float(np.mean(S[:, 1, 0] ** 2 + S[:, 1, 1] ** 2)) * halfarea
    area = w * l
    costs = CellCosts(compliance=comp, vertical_energy=vert, volume=area,
                      perimeter_interior=0.0,
                      bottom_exposure=(1.0 - F) * w,
                      provenance={"compliance": f"qmc2^{qmc_m}",
                                  "volume": "exact", "perimeter": "exact"})

    def run_interfaces(n):
        checks = []
        m = max(4 * n, 16)
        # inner disc boundary within the rectangle
        th = np.linspace(math.pi / 2 + 0.03, math.pi - 0.03, m)
        r_in = math.sqrt(8) * s
        pts_arc = Z + r_in * np.column_stack([np.cos(th), np.sin(th)])
        keep = (pts_arc[:, 0] > 1e-3 * w) & (pts_arc[:, 1] > 1e-3 * w) & \
               (pts_arc[:, 0] < w / 2 - 1e-3 * w)
        pts_in = pts_arc[keep]
        # outer arc
        r_out = math.sqrt(2) * w / 2
        pts_arc2 = Z + r_out * np.column_stack([np.cos(th), np.sin(th)])
        keep2 = (pts_arc2[:, 0] > 1e-3 * w) & (pts_arc2[:, 1] > 1e-3 * w) & \
                (pts_arc2[:, 1] < l - 1e-3 * w)
        pts_out = pts_arc2[keep2]
        from .stresses import _one_sided_limits
        delta = 1e-7 * w
        for nm, ptsX, rad in (("disc-arc", pts_in, r_in),
                              ("outer-arc", pts_out, r_out)):
            if not len(ptsX):
                continue
            nrm = (ptsX - Z) / rad
            Sp, Sm, valid = _one_sided_limits(fld, ptsX, nrm, delta)
            jump = np.einsum("nij,nj->ni", Sp - Sm, nrm)
            norms = np.linalg.norm(jump, axis=1)
            norms = norms[valid] if np.any(valid) else norms
            checks.append(InterfaceCheck(
                nm, float(np.max(norms)), 1e-10))
        # strip top edge
        checks.append(InterfaceCheck(
            "strip-top",
            edge_flux_residual_2d(fld, (1e-3 * w, strip.hi[1]),
                                  (w / 2 - 1e-3 * w, strip.hi[1]), n=m),
            1e-10))
        # mirror seam x = 0
        checks.append(InterfaceCheck(
            "mirror-seam",
            edge_flux_residual_2d(fld, (0.0, 1e-3 * w), (0.0, l - 1e-3 * w),
                                  n=m),
            1e-10))
        return checks

    def run_divergence(n):
        checks = [InterfaceCheck(p.name, 0.0, 1e-12)
                  for p in patches if isinstance(p, Constant2D)]
        rng = np.random.default_rng(5)
        pts = rect_lo + rng.random((n, 2)) * (rect_hi - rect_lo)
        mask = sector.contains(pts)
        if np.any(mask):
            checks.append(InterfaceCheck(
                "Q7", float(np.max(np.linalg.norm(
                    right_patches[1].divergence_at(pts[mask]), axis=1))),
                1e-8))
        return checks

    def flux_fn(z):
        zz = z + 2 * s
        total = 0.0
        # disc slice (sigma_zz = 1), right half; doubled at the end
        rho2 = 8 * s * s - zz * zz
        if rho2 > 0:
            x_from = max(0.0, w / 2 - math.sqrt(rho2))
            total += (w / 2 - x_from)
        # outside the big disc: F
        R2 = 0.5 * w * w - zz * zz
        x_to = w / 2 - math.sqrt(R2) if R2 > 0 else w / 2
        total += F * max(0.0, min(x_to, w / 2))

        def sector_vert(x):
            t2 = (w / 2 - x) ** 2 + zz * zz
            t = math.sqrt(t2)
            if not (math.sqrt(8) * s < t < math.sqrt(2) * w / 2):
                return 0.0
            if (w / 2 - x) > t / math.sqrt(2):
                return 0.0
            return math.sqrt(8) * s * zz * zz / t ** 3

        def clipx(v):
            return min(max(v, 0.0), w / 2)

        brk = {0.0, w / 2,
               clipx(w / 2 - zz),  # side-ray boundary (w/2 - x) = zz
               clipx(w / 2 - math.sqrt(max(0.5 * w * w - zz * zz, 0.0))),
               clipx(w / 2 - math.sqrt(max(8 * s * s - zz * zz, 0.0)))}
        val, _ = integrate.quad(sector_vert, 0.0, w / 2, limit=400,
                                points=sorted(brk), epsabs=1e-14,
                                epsrel=1e-11)
        total += val
        return 2.0 * total

    cell = Cell(
        family="planar-boundary", dim=2, F=F, w=w, height=l,
        params=dict(F=F, w=w, l=l, s=s),
        field=fld,
        material_regions=[Rect2D(lo, hi, name="material")], void_regions=[],
        costs=costs,
        interface_runner=run_interfaces,
        divergence_runner=run_divergence,
        frobenius_cap=math.sqrt(2.0),
        flux_fn=flux_fn,
        slice_area_fn=lambda z: w,
        slice_compliance_fn=None,
        bottom_pattern=IntervalSet([(-w / 2, w / 2)]),
        top_pattern=IntervalSet([(-w / 2, w / 2)]),
        notes={"incoming_pattern": IntervalSet([(-w / 2, -w / 2 + 2 * s),
                                                (w / 2 - 2 * s, w / 2)])},
    )
    return cell


# ---------------------------------------------------------------------------
# cone cell (perforated block), 1 - F < 1/64
# ---------------------------------------------------------------------------

RBAR2 = Polynomial([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])   # squared radius profile
RBAR2_FLIP = RBAR2(Polynomial([1.0, -1.0]))             # profile of 1 - zeta
G3 = Polynomial([0.0, 0.0, 1.0, -2.0, 1.0])             # z^2 (1-z)^2
G3P = G3.deriv()


def _poly_int01(p):
    q = p.integ()
    return float(q(1.0) - q(0.0))


G3_SQ_INT = _poly_int01(G3 * G3)          # = 1/630
G3P_SQ_INT = _poly_int01(G3P * G3P)
QBAR = RBAR2.deriv()                       # (rbar^2)' = 2 rbar rbar'
QBAR4_INT = _poly_int01((QBAR / 2.0) ** 4)


class _ChalicePieces:
    """Shared radius data for the cone cell stress formulas."""

    def __init__(self, a, w, l):
        self.a, self.w, self.l = a, w, l

    def R(self, z):
        zeta = np.asarray(z, float) / self.l
        return self.a * np.sqrt(np.maximum(RBAR2(zeta), 0.0))

    def q(self, z):
        """q = R R' = a^2 (rbar^2)'(zeta) / (2 l)."""
        zeta = np.asarray(z, float) / self.l
        return self.a ** 2 * QBAR(zeta) / (2.0 * self.l)

    def p(self, z):
        """p = (R^2)'' / 2 = a^2 (rbar^2)''(zeta) / (2 l^2)."""
        zeta = np.asarray(z, float) / self.l
        return self.a ** 2 * RBAR2.deriv(2)(zeta) / (2.0 * self.l ** 2)


def _chalice_components(ch, r, z):
    """Cylindrical components (rr, phiphi, zz, rz) of the chalice field."""
    q = ch.q(z)
    p = ch.p(z)
    qr = q / r
    rr = qr ** 2
    beta = p - qr ** 2
    return rr, beta, np.ones_like(r), qr


def _cyl_frame(pts, center_xy):
    d = pts[:, :2] - np.asarray(center_xy, float)
    r = np.linalg.norm(d, axis=1)
    r = np.maximum(r, 1e-300)
    er = np.zeros((len(pts), 3))
    er[:, :2] = d / r[:, None]
    ephi = np.zeros((len(pts), 3))
    ephi[:, 0] = -er[:, 1]
    ephi[:, 1] = er[:, 0]
    return r, er, ephi


@lru_cache(maxsize=64)
def build_cone_cell(F, w, l, pde_n=256):
    """Full material block perforated by five cone-like voids; the stress is
    chalice shells inside cylinders around the cones plus vertical unit
    stress, radial relief and a shear corrector outside."""
    from .pde import get_shear_solution

    F, w, l = float(F), float(w), float(l)
    if not (1.0 - F < 1.0 / 64.0 and F < 1.0):
        raise ParamDomain(f"cone cell needs 1 - F < 1/64, got F={F}")
    a = w * math.sqrt(1.0 - F) / (2.0 * math.sqrt(math.pi))
    if 2.0 * a > w / 8.0 + 1e-15:
        raise ParamDomain("cones do not fit inside their cylinders")
    sol = get_shear_solution(pde_n)

    lo = np.array([-w / 2, -w / 2, 0.0])
    hi = np.array([w / 2, w / 2, l])
    centers = [(w / 4, w / 4), (-w / 4, w / 4), (w / 4, -w / 4),
               (-w / 4, -w / 4)]
    cones = [RevolutionSolid(c, 0.0, l, RBAR2 * a * a, name=f"K{i+1}")
             for i, c in enumerate(centers)]
    cone0 = RevolutionSolid((0.0, 0.0), 0.0, l, RBAR2_FLIP * (4 * a * a),
                            name="K0")
    cyls = [AxisCylinder((c[0], c[1], 0.0), 2, w / 16.0, (lo, hi),
                         name=f"C{i+1}") for i, c in enumerate(centers)]
    cyl0 = AxisCylinder((0.0, 0.0, 0.0), 2, w / 8.0, (lo, hi), name="C0")
    T = 3.0 * w / 32.0
    ch = _ChalicePieces(a, w, l)
    c_shear = 240.0 * (a / w) ** 2
    wl = w / l

    # -- pointwise evaluators -------------------------------------------
    def small_chalice_eval(center):
        def func(pts):
            p = np.atleast_2d(pts)
            r, er, ephi = _cyl_frame(p, center)
            rr, beta, zz, rz = _chalice_components(ch, r, p[:, 2])
            return tensors_from_cylindrical(rr, beta, zz, rz, er, ephi)
        return func

    def small_chalice_div(center):
        def div(pts):
            p = np.atleast_2d(pts)
            r, er, _ = _cyl_frame(p, center)
            z = p[:, 2]
            q = ch.q(z)
            pz = ch.p(z)
            _, beta, _, _ = _chalice_components(ch, r, z)
            div_r = (-q ** 2 / r ** 2) / r + pz / r - beta / r
            return div_r[:, None] * er
        return div

    def big_chalice_eval(pts):
        p = np.atleast_2d(pts)
        r, er, ephi = _cyl_frame(p, (0.0, 0.0))
        rr, beta, zz, rz = _chalice_components(ch, r / 2.0, ch.l - p[:, 2])
        return tensors_from_cylindrical(4 * rr, 4 * beta, zz, -2 * rz,
                                        er, ephi)

    def big_chalice_div(pts):
        p = np.atleast_2d(pts)
        r, er, _ = _cyl_frame(p, (0.0, 0.0))
        zp = ch.l - p[:, 2]
        q = ch.q(zp)
        pz = ch.p(zp)
        _, beta, _, _ = _chalice_components(ch, r / 2.0, zp)
        # sigma_rr = 16 q^2 / r^2, sigma_rz = -4 q / r, sigma_pp = 4 beta
        div_r = (-16 * q ** 2 / r ** 2) / r + 4 * pz / r - 4 * beta / r
        return div_r[:, None] * er

    def kappa(z):
        return -(9.0 / 5.0) * ch.q(z) ** 2

    def rad_tensor(pts):
        p = np.atleast_2d(pts)
        out = np.zeros((len(p), 3, 3))
        for cc in centers:
            r, er, ephi = _cyl_frame(p, cc)
            mask = (r >= w / 16.0) & (r <= T)
            if np.any(mask):
                k = kappa(p[mask, 2])
                rr = k * (1.0 / T ** 2 - 1.0 / r[mask] ** 2)
                pp = k * (1.0 / T ** 2 + 1.0 / r[mask] ** 2)
                out[mask] += tensors_from_cylindrical(
                    rr, pp, np.zeros_like(rr), np.zeros_like(rr),
                    er[mask], ephi[mask])
        r, er, ephi = _cyl_frame(p, (0.0, 0.0))
        mask = (r >= w / 8.0) & (r <= 2 * T)
        if np.any(mask):
            k = kappa(ch.l - p[mask, 2])
            rp = r[mask] / 2.0
            rr = 4 * k * (1.0 / T ** 2 - 1.0 / rp ** 2)
            pp = 4 * k * (1.0 / T ** 2 + 1.0 / rp ** 2)
            out[mask] += tensors_from_cylindrical(
                rr, pp, np.zeros_like(rr), np.zeros_like(rr),
                er[mask], ephi[mask])
        return out

    def rad_div(pts):
        """Analytic divergence of the radial relief field alone."""
        p = np.atleast_2d(pts)
        out = np.zeros((len(p), 3))
        for cc in centers:
            r, er, _ = _cyl_frame(p, cc)
            mask = (r >= w / 16.0) & (r <= T)
            if np.any(mask):
                k = kappa(p[mask, 2])
                ddr = k * (1.0 / T ** 2 + 1.0 / r[mask] ** 2)
                pp = k * (1.0 / T ** 2 + 1.0 / r[mask] ** 2)
                out[mask] += ((ddr - pp) / r[mask])[:, None] * er[mask]
        r, er, _ = _cyl_frame(p, (0.0, 0.0))
        mask = (r >= w / 8.0) & (r <= 2 * T)
        if np.any(mask):
            k = kappa(ch.l - p[mask, 2])
            # sigma_rr = 4k(1/T^2 - 4/r^2): d/dr(r srr) = 4k(1/T^2 + 4/r^2)
            ddr = 4 * k * (1.0 / T ** 2 + 4.0 / r[mask] ** 2)
            pp = 4 * k * (1.0 / T ** 2 + 4.0 / r[mask] ** 2)
            out[mask] += ((ddr - pp) / r[mask])[:, None] * er[mask]
        return out

    def shear_tensor(pts):
        p = np.atleast_2d(pts)
        xh = p[:, :2] / w
        zb = p[:, 2] / l
        sig = sol.sigma_at(xh)
        gu = sol.grad_u_at(xh)
        out = np.zeros((len(p), 3, 3))
        out[:, :2, :2] = (-c_shear * wl ** 2
                          * G3P(zb))[:, None, None] * sig
        sh = (c_shear * wl * G3(zb))[:, None] * gu
        out[:, 0, 2] = sh[:, 0]
        out[:, 2, 0] = sh[:, 0]
        out[:, 1, 2] = sh[:, 1]
        out[:, 2, 1] = sh[:, 1]
        return out

    def outside_eval(pts):
        p = np.atleast_2d(pts)
        out = np.zeros((len(p), 3, 3))
        out[:, 2, 2] = 1.0
        out += rad_tensor(p)
        out += shear_tensor(p)
        return out

    material = BoxMinus(lo, hi, [cone0] + cones, name="material")
    chal_regions = [RegionDifference(cyls[i], [cones[i]], name=f"C{i+1}-K")
                    for i in range(4)]
    chal0_region = RegionDifference(cyl0, [cone0], name="C0-K")
    outside_region = BoxMinus(lo, hi, [cyl0] + cyls, name="outside")

    patches = [CallablePatch(chal_regions[i], small_chalice_eval(centers[i]),
                             divergence=small_chalice_div(centers[i]),
                             name=f"chalice{i+1}") for i in range(4)]
    patches.append(CallablePatch(chal0_region, big_chalice_eval,
                                 divergence=big_chalice_div, name="chalice0"))
    patches.append(CallablePatch(outside_region, outside_eval,
                                 divergence=None, name="outside"))
    fld = PiecewiseStressField(patches, lo, hi)

    # -- exact cost terms -------------------------------------------------
    r_out = w / 16.0

    def chalice_z_integrand(weights):
        cL, cK, cM, cLp = weights

        def f(zeta):
            z = zeta * l
            q = float(ch.q(z))
            pz = float(ch.p(z))
            R = float(ch.R(z))
            if R <= 0.0:
                return 0.0
            Lg = math.log(r_out / R)
            Kg = 0.5 * (1.0 / R ** 2 - 1.0 / r_out ** 2)
            Mg = 0.5 * (r_out ** 2 - R ** 2)
            return (cL * q * q * Lg + cLp * pz * q * q * Lg
                    + cK * q ** 4 * Kg + cM * pz * pz * Mg)
        return f

    def z_quad(f):
        val, _ = integrate.quad(lambda t: f(t), 0.0, 1.0, limit=400,
                                epsabs=1e-16, epsrel=1e-11)
        return val * l

    # small cones: 2 q^2 (1 - p) L + 2 q^4 K + p^2 M per cone
    e_small = 4.0 * 2.0 * math.pi * z_quad(
        chalice_z_integrand((2.0, 2.0, 1.0, -2.0)))
    # big cone: (8 - 32 p) q^2 L + 32 q^4 K + 16 p^2 M
    e_big = 8.0 * math.pi * z_quad(
        chalice_z_integrand((8.0, 32.0, 16.0, -32.0)))
    # vertical-column energies (for the minorization comparison)
    ev_small = 4.0 * 2.0 * math.pi * z_quad(
        chalice_z_integrand((2.0, 0.0, 0.0, 0.0)))
    ev_big = 32.0 * math.pi * z_quad(
        chalice_z_integrand((1.0, 0.0, 0.0, 0.0)))

    C_r = ((T ** 2 - r_out ** 2) / T ** 4 + 1.0 / r_out ** 2 - 1.0 / T ** 2)
    int_kappa_sq = (81.0 / 25.0) * a ** 8 / (16.0 * l ** 3) * QBAR4_INT
    e_rad = 68.0 * 2.0 * math.pi * C_r * int_kappa_sq

    e_shear = (w * w * l * c_shear ** 2
               * (wl ** 4 * G3P_SQ_INT * sol.tensor.energy
                  + 2.0 * wl ** 2 * G3_SQ_INT * sol.scalar.energy))
    ev_shear = (w * w * l * c_shear ** 2
                * wl ** 2 * G3_SQ_INT * sol.scalar.energy)
    # the rad x shear cross term vanishes exactly: its z-part integrates
    # g3' g3^2 over (0, 1), an exact antiderivative g3^3/3 with zero ends
    vol = material.measure()
    comp = vol + e_small + e_big + e_rad + e_shear
    vert = vol + ev_small + ev_big + ev_shear
    per = cone0.lateral_area() + sum(c.lateral_area() for c in cones)
    costs = CellCosts(
        compliance=comp, vertical_energy=vert, volume=vol,
        perimeter_interior=per, bottom_exposure=0.0,
        provenance={"compliance": "closed-form+grid", "volume": "exact",
                    "perimeter": "quadrature",
                    "terms": {"chalice_small": e_small, "chalice_big": e_big,
                              "rad": e_rad, "shear": e_shear}})

    # -- certificate -------------------------------------------------------
    shear_wall_scale = c_shear * (wl ** 2 * 0.1 + wl / 16.0)
    pde_tol = 10.0 * sol.pointwise_bc_indicator * max(shear_wall_scale, 1e-300)

    def run_interfaces(n):
        checks = []
        m = max(6 * n, 24)
        th = np.linspace(0.0, 2 * math.pi, m, endpoint=False) + 0.03
        zz = np.linspace(0.06 * l, 0.94 * l, m)

        def cone_checker(cone, center, big):
            pts = []
            nrm = []
            for z in zz:
                R = float(cone.radius_at(z))
                if R <= 1e-9 * w:
                    continue
                slope = float(cone.r_rprime(z)) / R
                for t in th[:: max(1, m // 12)]:
                    pts.append((center[0] + R * math.cos(t),
                                center[1] + R * math.sin(t), z))
                    nrm.append((math.cos(t), math.sin(t), -slope))
            if not pts:
                return 0.0
            return curved_flux_residual(fld, np.array(pts), np.array(nrm),
                                        order=3)

        checks.append(InterfaceCheck(
            "cone0-wall", cone_checker(cone0, (0.0, 0.0), True), 1e-10))
        checks.append(InterfaceCheck(
            "cone1-wall", cone_checker(cones[0], centers[0], False), 1e-10))

        def cyl_checker(center, radius):
            pts = []
            nrm = []
            for z in zz:
                for t in th[:: max(1, m // 12)]:
                    pts.append((center[0] + radius * math.cos(t),
                                center[1] + radius * math.sin(t), z))
                    nrm.append((math.cos(t), math.sin(t), 0.0))
            return curved_flux_residual(fld, np.array(pts), np.array(nrm))

        checks.append(InterfaceCheck(
            "cyl1-wall", cyl_checker(centers[0], w / 16.0), pde_tol))
        checks.append(InterfaceCheck(
            "cyl0-wall", cyl_checker((0.0, 0.0), w / 8.0), pde_tol))
        checks.append(InterfaceCheck(
            "rad-outer-wall-1", cyl_checker(centers[1], T), pde_tol))
        checks.append(InterfaceCheck(
            "rad-outer-wall-0", cyl_checker((0.0, 0.0), 2 * T), pde_tol))
        return checks

    def run_divergence(n):
        rng = np.random.default_rng(17)
        checks = []
        for patch in patches[:5]:
            blo, bhi = patch.region.sample_bbox()
            pts = blo + rng.random((max(n, 8) * 40, 3)) * \
                (np.asarray(bhi) - np.asarray(blo))
            mask = patch.region.contains(pts)
            checks.append(InterfaceCheck(
                patch.name, divergence_residual(patch, pts[mask]), 1e-8))
        pts = lo + rng.random((max(n, 8) * 40, 3)) * (hi - lo)
        mask = outside_region.contains(pts)
        if np.any(mask):
            dv = rad_div(pts[mask])
            checks.append(InterfaceCheck(
                "rad", float(np.max(np.linalg.norm(dv, axis=1))), 1e-8))
        return checks

    def void_slice_area(z):
        zeta = z / l
        return math.pi * (4 * a * a * float(RBAR2(zeta))
                          + 4 * a * a * float(RBAR2(1.0 - zeta)))

    def slice_area_fn(z):
        return w * w - void_slice_area(z)

    def flux_fn(z):
        return slice_area_fn(z) * 1.0

    def slice_compliance_fn(z, n_grid=384):
        """Exact material area (unit vertical part) plus a midpoint-grid
        integral of the pointwise nonnegative excess |sigma|^2 - 1."""
        xs = -w / 2 + (np.arange(n_grid) + 0.5) * w / n_grid
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel(),
                               np.full(X.size, z)])
        mat = material.contains(pts)
        S = fld.stress_at(pts[mat])
        excess = np.einsum("nij,nij->n", S, S) - 1.0
        da = (w / n_grid) ** 2
        return slice_area_fn(z) + float(np.sum(np.maximum(excess, 0.0)) * da)

    cell = Cell(
        family="cone", dim=3, F=F, w=w, height=l,
        params=dict(F=F, w=w, l=l, a=a, T=T, pde_n=pde_n,
                    pde_tol=pde_tol,
                    pde_pointwise_indicator=sol.pointwise_bc_indicator),
        field=fld,
        material_regions=[material], void_regions=[cone0] + cones,
        costs=costs,
        interface_runner=run_interfaces,
        divergence_runner=run_divergence,
        frobenius_cap=None,
        flux_fn=flux_fn, slice_area_fn=slice_area_fn,
        slice_compliance_fn=slice_compliance_fn,
        bottom_pattern=None, top_pattern=None,
        notes={"mouth_radius_bottom": 2 * a, "mouth_radius_top": a,
               "shear_solution_n": pde_n},
    )
    return cell


# ---------------------------------------------------------------------------
# full material block
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def build_block_cell(F, ell, height=1.0):
    """Trivial cell: the whole domain filled with material at stress F e3@e3."""
    F, ell, height = float(F), float(ell), float(height)
    if F <= 0:
        raise ParamDomain("block needs F > 0")
    lo = np.array([-ell / 2, -ell / 2, 0.0])
    hi = np.array([ell / 2, ell / 2, height])
    region = _full_box_region(lo, hi)
    e3 = I3[2]
    patches = [ConstantPatch(region, F * outer(e3), "block")]
    fld = PiecewiseStressField(patches, lo, hi)
    vol = ell * ell * height
    costs = CellCosts(compliance=F * F * vol, vertical_energy=F * F * vol,
                      volume=vol, perimeter_interior=0.0, bottom_exposure=0.0,
                      provenance={"compliance": "exact", "volume": "exact",
                                  "perimeter": "exact"})

    def run_interfaces(n):
        zz = np.linspace(0.1, 0.9, 5) * height
        checks = []
        for z in zz:
            xs = np.linspace(-0.4, 0.4, n) * ell
            X, Y = np.meshgrid(xs, xs, indexing="ij")
            pts = np.column_stack([X.ravel(), Y.ravel(),
                                   np.full(X.size, z)])
            checks.append(InterfaceCheck(
                f"plane-z{z:.3g}",
                face_flux_residual(fld, None, (0, 0, 1), pts), 1e-12))
        return checks

    cell = Cell(
        family="block", dim=3, F=F, w=ell, height=height,
        params=dict(F=F, ell=ell, height=height),
        field=fld, material_regions=[region], void_regions=[],
        costs=costs,
        interface_runner=run_interfaces,
        divergence_runner=_constant_divergence_runner(patches),
        frobenius_cap=None,
        flux_fn=lambda z: F * ell * ell,
        slice_area_fn=lambda z: ell * ell,
        slice_compliance_fn=lambda z: F * F * ell * ell,
        bottom_pattern=shbox(-ell / 2, -ell / 2, ell / 2, ell / 2),
        top_pattern=shbox(-ell / 2, -ell / 2, ell / 2, ell / 2),
    )
    return cell
