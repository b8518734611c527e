"""Wavefront OBJ export for the region catalogue.

ASCII records only: one ``o <name>`` per region, ``v x y z`` vertices and
``f i j k ...`` faces with 1-based indices, right-handed outward orientation.
"""

from __future__ import annotations

import math

from .errors import UnsupportedBoolean
from .geometry import AxisCylinder, Ball, BoxMinus, ConvexPolyhedron, RevolutionSolid

N_THETA_DEFAULT = 64
N_Z_DEFAULT = 64


def _polyhedron_mesh(region):
    verts = [tuple(v) for v in region.vertices]
    faces = [list(f.cycle) for f in region.faces]
    return verts, faces


def _revolution_mesh(region, n_theta, n_z):
    """Lateral surface plus end-cap fans; degenerate tip rings collapse."""
    verts = []
    rings = []
    cx, cy = region.center
    for k in range(n_z + 1):
        z = region.z0 + region.height * k / n_z
        r = float(region.radius_at(z))
        ring = []
        if r <= 1e-14 * max(region.scale, 1.0):
            verts.append((cx, cy, z))
            ring = [len(verts) - 1] * n_theta
        else:
            for j in range(n_theta):
                th = 2.0 * math.pi * j / n_theta
                verts.append((cx + r * math.cos(th), cy + r * math.sin(th), z))
                ring.append(len(verts) - 1)
        rings.append(ring)
    faces = []
    for k in range(n_z):
        lo, hi = rings[k], rings[k + 1]
        for j in range(n_theta):
            a, b = lo[j], lo[(j + 1) % n_theta]
            c, d = hi[(j + 1) % n_theta], hi[j]
            quad = [a, b, c, d]
            quad = [q for i, q in enumerate(quad) if q != quad[i - 1]]
            if len(quad) >= 3:
                faces.append(quad)
    for ring, out in ((rings[0], False), (rings[-1], True)):
        if ring[0] == ring[1]:
            continue
        cap = list(ring) if out else list(reversed(ring))
        faces.append(cap)
    return verts, faces


def _ball_mesh(region, n_theta, n_z):
    verts = []
    c, r = region.center, region.radius
    for k in range(n_z + 1):
        phi = math.pi * k / n_z
        z = c[2] + r * math.cos(phi)
        rho = r * math.sin(phi)
        if k in (0, n_z):
            verts.append((c[0], c[1], z))
        else:
            for j in range(n_theta):
                th = 2.0 * math.pi * j / n_theta
                verts.append((c[0] + rho * math.cos(th), c[1] + rho * math.sin(th), z))
    faces = []
    def ring(k):
        if k == 0:
            return [0] * n_theta
        if k == n_z:
            return [len(verts) - 1] * n_theta
        base = 1 + (k - 1) * n_theta
        return list(range(base, base + n_theta))
    for k in range(n_z):
        lo, hi = ring(k + 1), ring(k)
        for j in range(n_theta):
            quad = [lo[j], lo[(j + 1) % n_theta], hi[(j + 1) % n_theta], hi[j]]
            quad = [q for i, q in enumerate(quad) if q != quad[i - 1]]
            if len(quad) >= 3:
                faces.append(quad)
    return verts, faces


def region_mesh(region, n_theta=N_THETA_DEFAULT, n_z=N_Z_DEFAULT):
    if isinstance(region, ConvexPolyhedron):
        return _polyhedron_mesh(region)
    if isinstance(region, RevolutionSolid):
        return _revolution_mesh(region, n_theta, n_z)
    if isinstance(region, Ball) and region.clip_box is None:
        return _ball_mesh(region, n_theta, n_z)
    if isinstance(region, AxisCylinder) and region.axis == 2:
        lo, hi = region.clip_box
        from numpy.polynomial import Polynomial
        solid = RevolutionSolid(region.center[:2], lo[2], hi[2] - lo[2],
                                Polynomial([region.radius ** 2]))
        return _revolution_mesh(solid, n_theta, n_z)
    if isinstance(region, BoxMinus):
        from .geometry import box as _box
        verts, faces = _polyhedron_mesh(_box(region.lo, region.hi))
        for v in region.voids:
            sv, sf = region_mesh(v, n_theta, n_z)
            off = len(verts)
            verts.extend(sv)
            faces.extend([[off + i for i in reversed(f)] for f in sf])
        return verts, faces
    raise UnsupportedBoolean(f"no mesh rule for {type(region).__name__}")


def export_obj(regions, path, names=None, n_theta=N_THETA_DEFAULT,
               n_z=N_Z_DEFAULT):
    """Write regions to a Wavefront OBJ file; returns the path."""
    lines = ["# microstruct geometry export"]
    offset = 0
    for i, region in enumerate(regions):
        name = None
        if names is not None:
            name = names[i]
        if not name:
            name = getattr(region, "name", "") or f"region_{i}"
        verts, faces = region_mesh(region, n_theta=n_theta, n_z=n_z)
        lines.append(f"o {name}")
        for v in verts:
            lines.append("v {:.17g} {:.17g} {:.17g}".format(*v))
        for f in faces:
            lines.append("f " + " ".join(str(offset + j + 1) for j in f))
        offset += len(verts)
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text)
    return path
