"""Piecewise stress fields over decomposed regions plus the machinery that
certifies static admissibility: face-flux balance across every internal
interface, pointwise divergence of analytic patches, the support condition
(zero stress off the material), and the vertical-shear mirror map used to
build the lower half of every stack.

Evaluation is additive: the stress at a point is the sum over all patches
whose (closed) region contains it.  Patches may overlap; the constructions
rely on superposition in the overlap regions, and energy integrals resolve
the overlaps exactly through pairwise intersection volumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from shapely import contains_xy

from .errors import NonDifferentiable, NotLipschitz
from .geometry import plane_basis

I3 = np.eye(3)


def outer(v):
    v = np.asarray(v, float)
    return np.outer(v, v)


def g_mirror_tensor(S):
    """Vertical-shear sign flip: negate the 13/23 (and 31/32) entries."""
    S = np.asarray(S, float)
    M = S.copy()
    M[..., 0, 2] *= -1.0
    M[..., 2, 0] *= -1.0
    M[..., 1, 2] *= -1.0
    M[..., 2, 1] *= -1.0
    return M


def frobenius(S):
    return np.sqrt(np.einsum("...ij,...ij->...", S, S))


def tensors_from_cylindrical(rr, pp, zz, rz, er, ephi):
    """Assemble Cartesian symmetric tensors from cylindrical components
    (arrays over points): rr e_r@e_r + pp e_phi@e_phi + zz e_z@e_z
    + rz (e_r@e_z + e_z@e_r)."""
    n = len(rr)
    ez = np.zeros((n, 3))
    ez[:, 2] = 1.0
    S = (rr[:, None, None] * np.einsum("ni,nj->nij", er, er)
         + pp[:, None, None] * np.einsum("ni,nj->nij", ephi, ephi)
         + zz[:, None, None] * np.einsum("ni,nj->nij", ez, ez)
         + rz[:, None, None] * (np.einsum("ni,nj->nij", er, ez)
                                + np.einsum("ni,nj->nij", ez, er)))
    return S


# ---------------------------------------------------------------------------
# patches
# ---------------------------------------------------------------------------

class ConstantPatch:
    """Constant symmetric stress on a region; identically divergence-free."""

    def __init__(self, region, tensor, name=""):
        self.region = region
        self.tensor = np.asarray(tensor, float)
        assert np.allclose(self.tensor, self.tensor.T, atol=1e-14)
        self.name = name or getattr(region, "name", "patch")

    def stress_at(self, points):
        p = np.atleast_2d(points)
        return np.broadcast_to(self.tensor, (len(p), 3, 3)).copy()

    def divergence_at(self, points):
        return np.zeros((len(np.atleast_2d(points)), 3))


class RadialPatch:
    """Spherically radial stress c(t) rhat @ rhat with c(t) = c0 * (t0/t)^k,
    centred at an apex Z.  Used by the boundary cells to spread a point-like
    load onto a flat face.  Analytic divergence: (c' + 2 c / t) rhat."""

    def __init__(self, region, apex, c0, t0, k, name="radial"):
        self.region = region
        self.apex = np.asarray(apex, float)
        self.c0 = float(c0)
        self.t0 = float(t0)
        self.k = float(k)
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
        cprime = -self.k * c / t
        return (cprime + 2.0 * c / t)[:, None] * rhat


class CallablePatch:
    """Analytic or grid-backed stress given by a callable points -> (n,3,3).

    `divergence` may be a callable (analytic cylindrical assembly), the string
    "fd" for central differences, or None (divergence check unavailable)."""

    def __init__(self, region, func, divergence=None, name="callable",
                 fd_step=1e-6):
        self.region = region
        self.func = func
        self.divergence = divergence
        self.name = name
        self.fd_step = fd_step

    def stress_at(self, points):
        return self.func(np.atleast_2d(points))

    def divergence_at(self, points):
        p = np.atleast_2d(points)
        if callable(self.divergence):
            return self.divergence(p)
        if self.divergence == "fd":
            return finite_difference_divergence(self.func, p, self.fd_step)
        raise NonDifferentiable(f"patch {self.name} has no divergence rule")


def finite_difference_divergence(func, points, step):
    p = np.atleast_2d(points)
    div = np.zeros((len(p), 3))
    for j in range(3):
        dp = np.zeros(3)
        dp[j] = step
        Sp = func(p + dp)
        Sm = func(p - dp)
        div += (Sp[:, :, j] - Sm[:, :, j]) / (2.0 * step)
    return div


# ---------------------------------------------------------------------------
# reflected wrappers (mirror operator)
# ---------------------------------------------------------------------------

class _ZReflectedRegion:
    def __init__(self, region, zsum):
        self.region = region
        self.zsum = zsum  # reflection z -> zsum - z
        lo, hi = region.sample_bbox()
        self.bbox = (np.array([lo[0], lo[1], zsum - hi[2]]),
                     np.array([hi[0], hi[1], zsum - lo[2]]))
        self.name = f"zref({getattr(region, 'name', '?')})"
        self.scale = getattr(region, "scale", 1.0)

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(points).copy()
        p[:, 2] = self.zsum - p[:, 2]
        return self.region.contains(p, tol=tol)

    def measure(self):
        return self.region.measure()

    def sample_bbox(self):
        return self.bbox


class _ZReflectedPatch:
    def __init__(self, patch, zsum):
        self.base = patch
        self.zsum = zsum
        self.region = _ZReflectedRegion(patch.region, zsum)
        self.name = f"g[{patch.name}]"

    def stress_at(self, points):
        p = np.atleast_2d(points).copy()
        p[:, 2] = self.zsum - p[:, 2]
        return g_mirror_tensor(self.base.stress_at(p))

    def divergence_at(self, points):
        p = np.atleast_2d(points).copy()
        p[:, 2] = self.zsum - p[:, 2]
        d = self.base.divergence_at(p)
        out = d.copy()
        out[:, 2] *= -1.0  # shear sign flip and z-reflection cancel in rows 1,2
        return out


# ---------------------------------------------------------------------------
# piecewise field
# ---------------------------------------------------------------------------

class PiecewiseStressField:
    """Additive piecewise stress field on an ambient cell box."""

    def __init__(self, patches, box_lo, box_hi):
        self.patches = list(patches)
        self.box_lo = np.asarray(box_lo, float)
        self.box_hi = np.asarray(box_hi, float)

    @property
    def scale(self):
        return float(np.max(self.box_hi - self.box_lo))

    def stress_at(self, points):
        p = np.atleast_2d(np.asarray(points, float))
        out = np.zeros((len(p), 3, 3))
        for patch in self.patches:
            mask = patch.region.contains(p)
            if np.any(mask):
                out[mask] += patch.stress_at(p[mask])
        return out

    def traction(self, points, normal):
        S = self.stress_at(points)
        n = np.asarray(normal, float)
        if n.ndim == 1:
            return S @ n
        return np.einsum("nij,nj->ni", S, n)

    def trace_on_plane(self, z, n=48, side=+1, delta_rel=1e-7):
        """Traction sigma.e3 sampled on an n x n grid at height z, evaluated
        one-sidedly (side=+1 probes just above, -1 just below)."""
        delta = side * delta_rel * self.scale
        xs = np.linspace(self.box_lo[0], self.box_hi[0], n + 2)[1:-1]
        ys = np.linspace(self.box_lo[1], self.box_hi[1], n + 2)[1:-1]
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel(),
                               np.full(X.size, z + delta)])
        T = self.stress_at(pts)[:, :, 2]
        return X, Y, T.reshape(n, n, 3)

    def mirror_g(self):
        zsum = self.box_lo[2] + self.box_hi[2]
        return PiecewiseStressField([_ZReflectedPatch(p, zsum)
                                     for p in self.patches],
                                    self.box_lo, self.box_hi)


# ---------------------------------------------------------------------------
# admissibility checks
# ---------------------------------------------------------------------------

def _one_sided_limits(field, pts, nrm, delta, order=2):
    """Traction-relevant stress limits on both sides of an interface via
    one-sided probes at delta, 2*delta (and 3*delta for order 3),
    extrapolated to the interface.  The extrapolation removes the smooth
    variation of analytic patches across the probe gap so only genuine
    jumps remain.

    Returns (S_plus, S_minus, valid): points whose same-side samples differ
    by more than smooth fields allow sit inside the O(delta) sliver around a
    crossing interface (edges, oblique transition planes) and are flagged
    invalid; those slivers are measure zero and carry no flux."""
    if order >= 3:
        def side(sgn):
            S1 = field.stress_at(pts + sgn * delta * nrm)
            S2 = field.stress_at(pts + sgn * 2.0 * delta * nrm)
            S3 = field.stress_at(pts + sgn * 3.0 * delta * nrm)
            ok = frobenius(S1 - 2.0 * S2 + S3) \
                <= 0.25 * (1.0 + frobenius(S1))
            return 3.0 * S1 - 3.0 * S2 + S3, ok
    else:
        def side(sgn):
            S1 = field.stress_at(pts + sgn * delta * nrm)
            S2 = field.stress_at(pts + sgn * 2.0 * delta * nrm)
            ok = frobenius(S1 - S2) <= 0.25 * (1.0 + frobenius(S1))
            return 2.0 * S1 - S2, ok
    Sp, okp = side(+1.0)
    Sm, okm = side(-1.0)
    return Sp, Sm, okp & okm


def face_flux_residual(field, point, normal, window_points, delta=None):
    """Max over window points of |[sigma] . n| with one-sided probes at
    offsets delta, 2*delta along the normal (delta defaults to 1e-7 x field
    scale), extrapolated to the face from each side."""
    if delta is None:
        delta = 1e-7 * field.scale
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    pts = np.atleast_2d(window_points)
    if not len(pts):
        return 0.0
    nrm = np.broadcast_to(n, pts.shape)
    Sp, Sm, valid = _one_sided_limits(field, pts, nrm, delta)
    jump = np.einsum("nij,j->ni", Sp - Sm, n)
    norms = np.linalg.norm(jump, axis=1)
    norms = norms[valid] if np.any(valid) else norms
    return float(np.max(norms))


def curved_flux_residual(field, points, normals, delta=None, order=2):
    """Same as face_flux_residual for per-point normals (curved interfaces).
    order=3 uses quadratic extrapolation for strongly curved analytic
    fields (cone walls near the tip)."""
    if delta is None:
        delta = 1e-7 * field.scale
    pts = np.atleast_2d(points)
    if not len(pts):
        return 0.0
    nrm = np.atleast_2d(normals)
    nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    Sp, Sm, valid = _one_sided_limits(field, pts, nrm, delta, order=order)
    jump = np.einsum("nij,nj->ni", Sp - Sm, nrm)
    norms = np.linalg.norm(jump, axis=1)
    norms = norms[valid] if np.any(valid) else norms
    return float(np.max(norms))


def divergence_residual(patch, points):
    """Max pointwise |div sigma| of one patch at the given sample points."""
    d = patch.divergence_at(points)
    return float(np.max(np.linalg.norm(d, axis=1))) if len(d) else 0.0


_R2A = 0.7548776662466927  # plastic-number Kronecker sequence generators
_R2B = 0.5698402909980532


def polygon_window_points(face_poly, normal, offset, n=5, shrink=1e-3):
    """Sample points of a planar polygonal window (shapely polygon in the
    plane's (t1, t2) coordinates) mapped back to 3D.  A Kronecker sequence
    with irrational generators is used so probe points never line up exactly
    with interior interfaces crossing the window (those are measure zero and
    tie-break containment both ways)."""
    nrm, t1, t2 = plane_basis(normal)
    poly = face_poly
    diam = max(poly.bounds[2] - poly.bounds[0], poly.bounds[3] - poly.bounds[1])
    shrunk = poly.buffer(-shrink * diam)
    if shrunk.is_empty:
        shrunk = poly.buffer(-1e-6 * diam)
    if shrunk.is_empty:
        return np.zeros((0, 3))
    x0, y0, x1, y1 = shrunk.bounds
    k = np.arange(1, 8 * n * n + 1)
    us = x0 + (x1 - x0) * np.mod(0.5 + k * _R2A, 1.0)
    vs = y0 + (y1 - y0) * np.mod(0.5 + k * _R2B, 1.0)
    keep = contains_xy(shrunk, us, vs)
    uv = np.column_stack([us[keep], vs[keep]])[: n * n]
    if len(uv) == 0:
        rep = shrunk.representative_point()
        uv = np.array([[rep.x, rep.y]])
    return (offset * nrm[None, :] + uv[:, 0:1] * t1[None, :]
            + uv[:, 1:2] * t2[None, :])


@dataclass
class InterfaceCheck:
    name: str
    residual: float
    tol: float

    @property
    def passed(self):
        return self.residual < self.tol


@dataclass
class AdmissibilityReport:
    """Machine certificate of static admissibility for one cell."""
    cell: str
    interfaces: list = field(default_factory=list)
    divergences: list = field(default_factory=list)
    support_residual: float = 0.0
    support_tol: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def max_interface_residual(self):
        return max((c.residual for c in self.interfaces), default=0.0)

    @property
    def max_divergence_residual(self):
        return max((c.residual for c in self.divergences), default=0.0)

    @property
    def passed(self):
        ok = all(c.passed for c in self.interfaces)
        ok &= all(c.passed for c in self.divergences)
        ok &= self.support_residual <= self.support_tol
        return bool(ok)

    def to_dict(self):
        return {
            "cell": self.cell,
            "passed": self.passed,
            "max_interface_residual": self.max_interface_residual,
            "max_divergence_residual": self.max_divergence_residual,
            "support_residual": self.support_residual,
            "interfaces": [
                {"name": c.name, "residual": c.residual, "tol": c.tol,
                 "passed": c.passed} for c in self.interfaces],
            "divergences": [
                {"name": c.name, "residual": c.residual, "tol": c.tol,
                 "passed": c.passed} for c in self.divergences],
            "notes": self.notes,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def lipschitz_check(psi_grid, h, tol=1e-8):
    """Verify a gridded witness is 1-Lipschitz: max discrete gradient."""
    gx = np.diff(psi_grid, axis=0) / h
    gy = np.diff(psi_grid, axis=1) / h
    worst = max(float(np.max(np.abs(gx))) if gx.size else 0.0,
                float(np.max(np.abs(gy))) if gy.size else 0.0)
    if worst > 1.0 + tol:
        raise NotLipschitz(f"discrete gradient {worst} exceeds 1")
    return worst
