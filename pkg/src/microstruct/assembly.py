"""Stacking cell layers into a full construction on (0, ell)^2 x (0, 1).

The upper half (z in (1/2, 1)) is a stack of layers whose cell width halves
from layer to layer, so each cell connects seamlessly to four half-width
cells above it (two in the planar family).  The lower half is the mirror
image with the vertical-shear sign map applied to the stress.  Plans fix the
layer widths/heights per family rule; the first layer is stretched so the
half heights sum exactly to 1/2.

The cone-family stack is formally infinite; it is truncated at a minimum
layer height and closed with a thin full-material slab whose seam traction
mismatch is reported, not hidden.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .cells import (build_block_cell, build_cone_cell, build_planar_boundary_cell,
                    build_planar_cell, build_strut_boundary_cell,
                    build_strut_cell)
from .errors import DomainTooNarrow, ParamDomain, RegimeViolation, StackingMismatch
from .stresses import g_mirror_tensor

F_MIN = 1e-6


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------

@dataclass
class Layer:
    index: int
    family: str
    width: float
    height: float
    count: int           # cells per layer: (ell/w)^2 in 3D, ell/w planar rows

    def to_dict(self):
        return {"index": self.index, "family": self.family,
                "width": self.width, "height": self.height,
                "count": self.count}


@dataclass
class LayerPlan:
    regime: str
    F: float
    eps: float
    ell: float
    layers: list
    slab_height: float = 0.0
    pde_n: int = 256
    notes: dict = dc_field(default_factory=dict)

    @property
    def half_height(self):
        return sum(l.height for l in self.layers) + self.slab_height

    def to_dict(self):
        return {"regime": self.regime, "F": self.F, "eps": self.eps,
                "ell": self.ell, "slab_height": self.slab_height,
                "layers": [l.to_dict() for l in self.layers],
                "notes": self.notes}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _divisor_width_below(ell, target):
    """Largest w = ell / k (k integer) strictly below target."""
    if target >= ell:
        return ell, 1
    k = int(math.floor(ell / target)) + 1
    return ell / k, k


def plan_small_force(F, eps, ell=1.0):
    """Strut-family plan: widths halve from the coarsest width just below
    F^(-1/6) eps^(1/3) / 8, heights follow max(w, F^(1/4) w^(3/2) eps^(-1/2)),
    the last layer is the spreading boundary layer, and the first layer is
    stretched so the half heights sum to 1/2 exactly."""
    if not (F_MIN <= F <= 0.5):
        raise ParamDomain(f"small-force plan needs F in [{F_MIN}, 1/2]")
    if not (0.0 < eps < 0.25):
        raise ParamDomain("small-force plan needs 0 < eps < 1/4")
    scale_w = F ** (-1.0 / 6.0) * eps ** (1.0 / 3.0)
    if ell < scale_w:
        raise DomainTooNarrow(
            f"ell = {ell} below the coarsest width scale {scale_w}")
    w1, k = _divisor_width_below(ell, scale_w / 8.0)

    def l_rule(w):
        return max(w, F ** 0.25 * w ** 1.5 * eps ** -0.5)

    w_boundary_cut = eps  # first width at or below eps becomes the boundary
    layers = []
    w = w1
    i = 1
    while w > w_boundary_cut:
        layers.append(Layer(i, "strut", w, l_rule(w), k * k))
        w, k, i = w / 2.0, 2 * k, i + 1
    layers.append(Layer(i, "strut-boundary", w, math.sqrt(3) * w / 2.0,
                        k * k))
    n = i
    N = max([l.index for l in layers
             if l.family == "strut" and l.width >= eps / math.sqrt(F)],
            default=0)
    total = sum(l.height for l in layers)
    deficit = 0.5 - total
    if deficit < 0:
        raise DomainTooNarrow(
            f"layer heights already sum to {total} > 1/2; parameters are "
            "outside the regime the plan rule covers")
    layers[0].height += deficit
    return LayerPlan("small", F, eps, ell, layers,
                     notes={"w1": w1, "N": N, "n": n,
                            "l1_topup": deficit,
                            "w1_target": scale_w / 8.0})


# The plain width rule 'largest width below (1-F)^(-1/3) eps^(1/3)' makes the
# layer heights overshoot the half-domain (the height identity only fixes the
# scaling up to a constant), so the target is divided by 4 to leave a
# positive first-layer top-up.
PLANAR_W1_SAFETY = 0.25


def plan_intermediate(F, eps, ell=1.0):
    """Planar-family plan (extruded 2D cells): heights follow
    (1-F)^(1/2) w^(3/2) eps^(-1/2); layering stops once (1-F) w >= l or the
    cell geometry becomes infeasible, then the 2D boundary layer closes."""
    if not (1.0 / 16.0 < F <= 1.0 - 1.0 / 64.0):
        raise ParamDomain("intermediate plan needs 1/16 < F <= 63/64")
    if not (0.0 < eps < 0.25):
        raise ParamDomain("intermediate plan needs 0 < eps < 1/4")
    scale_w = (1.0 - F) ** (-1.0 / 3.0) * eps ** (1.0 / 3.0)
    if ell < scale_w:
        raise DomainTooNarrow(
            f"ell = {ell} below the coarsest width scale {scale_w}")
    w1, k = _divisor_width_below(ell, PLANAR_W1_SAFETY * scale_w)

    def l_rule(w):
        return (1.0 - F) ** 0.5 * w ** 1.5 * eps ** -0.5

    layers = []
    w, i = w1, 1
    while True:
        l = l_rule(w)
        s = F * w / 4.0
        feasible = ((1.0 - F) * w < l
                    and l * l > 2.0 * s * (1.0 - F) * w * (1 + 1e-9))
        if not feasible:
            break
        layers.append(Layer(i, "planar", w, l, k))
        w, k, i = w / 2.0, 2 * k, i + 1
    s = F * w / 4.0
    layers.append(Layer(i, "planar-boundary", w,
                        math.sqrt(2) * w / 2.0 - 2.0 * s, k))
    total = sum(l.height for l in layers)
    deficit = 0.5 - total
    if deficit < 0:
        raise DomainTooNarrow(
            f"layer heights sum to {total} > 1/2 despite the safety factor")
    layers[0].height += deficit
    return LayerPlan("intermediate", F, eps, ell, layers,
                     notes={"w1": w1, "n": i, "l1_topup": deficit,
                            "w1_target": PLANAR_W1_SAFETY * scale_w})


def cone_height_rules(F, eps):
    logf = abs(math.log(1.0 - F))

    def l1(w):
        return (1.0 - F) ** 0.75 * logf ** 0.5 * w ** 1.5 * eps ** -0.5

    def l2(w):
        return (1.0 - F) ** 0.375 * w ** 1.25 * eps ** -0.25

    return lambda w: max(l1(w), l2(w)), l1, l2


def plan_large_force(F, eps, ell=1.0, truncation=1e-4, pde_n=256):
    """Cone-family plan: the stack is formally infinite; layers below the
    truncation height are replaced by a full-material closing slab of that
    height, and the first layer absorbs the remaining height."""
    if not (0.0 < 1.0 - F < 1.0 / 64.0):
        raise ParamDomain("large-force plan needs 1 - F < 1/64")
    logf = abs(math.log(1.0 - F))
    if eps ** (2.0 / 3.0) > (1.0 - F) * logf ** (-1.0 / 3.0):
        raise RegimeViolation(
            "eps^(2/3) exceeds (1-F) |log(1-F)|^(-1/3): outside the cone "
            "regime (the full block is optimal there)")
    target = (1.0 - F) ** -0.5 * logf ** (-1.0 / 3.0) * eps ** (1.0 / 3.0)
    if ell < target:
        raise DomainTooNarrow(f"ell = {ell} below the width scale {target}")
    l_opt, _, _ = cone_height_rules(F, eps)

    def stack(k):
        w = ell / k
        layers = []
        i, cnt = 1, k
        while l_opt(w) >= truncation and i < 60:
            layers.append(Layer(i, "cone", w, l_opt(w), cnt * cnt))
            w, cnt, i = w / 2.0, 2 * cnt, i + 1
        return layers

    k = max(1, int(round(ell / target)))
    while True:
        layers = stack(k)
        total = sum(l.height for l in layers) + truncation
        if layers and total <= 0.5:
            break
        k += 1
        if k > 10_000:
            raise DomainTooNarrow("no feasible coarsest width found")
    deficit = 0.5 - (sum(l.height for l in layers) + truncation)
    layers[0].height += deficit
    return LayerPlan("large", F, eps, ell, layers, slab_height=truncation,
                     pde_n=pde_n,
                     notes={"w1": ell / k, "w1_target": target,
                            "l1_topup": deficit, "n_layers": len(layers)})


def plan_block(F, ell=1.0):
    return LayerPlan("block", F, 0.0, ell,
                     [Layer(1, "block", ell, 0.5, 1)])


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _build_layer_cell(plan, layer):
    if layer.family == "strut":
        return build_strut_cell(plan.F, layer.width, layer.height)
    if layer.family == "strut-boundary":
        return build_strut_boundary_cell(plan.F, layer.width)
    if layer.family == "planar":
        return build_planar_cell(plan.F, layer.width, layer.height)
    if layer.family == "planar-boundary":
        return build_planar_boundary_cell(plan.F, layer.width)
    if layer.family == "cone":
        return build_cone_cell(plan.F, layer.width, layer.height,
                               pde_n=plan.pde_n)
    if layer.family == "block":
        return build_block_cell(plan.F, plan.ell, height=layer.height)
    raise ParamDomain(f"unknown layer family {layer.family}")


class Construction:
    """A certified stack of cell layers with its global stress field."""

    def __init__(self, plan: LayerPlan):
        self.plan = plan
        self.cells = [_build_layer_cell(plan, l) for l in plan.layers]
        for layer, cell in zip(plan.layers, self.cells):
            if abs(cell.height - layer.height) > 1e-12 * max(1.0, layer.height):
                raise ParamDomain(
                    f"layer {layer.index} height {layer.height} does not "
                    f"match the {layer.family} family rule {cell.height}")
        self.z_tops = np.cumsum([l.height for l in plan.layers])
        self.slab_z0 = 0.5 + (self.z_tops[-1] if len(self.z_tops) else 0.0)

    # -- geometry / field ---------------------------------------------------

    @property
    def F(self):
        return self.plan.F

    @property
    def ell(self):
        return self.plan.ell

    def _locate(self, zz):
        """Layer index for a half-coordinate zz in (0, 1/2)."""
        i = bisect.bisect_left(self.z_tops, zz)
        return min(i, len(self.cells) - 1)

    def _cell_frame(self, x, y, zz, layer_idx):
        layer = self.plan.layers[layer_idx]
        w = layer.width
        z0 = self.z_tops[layer_idx] - layer.height
        lx = np.mod(x, w) - w / 2.0
        ly = np.mod(y, w) - w / 2.0
        return lx, ly, zz - z0

    def stress_at(self, points):
        p = np.atleast_2d(np.asarray(points, float))
        out = np.zeros((len(p), 3, 3))
        upper = p[:, 2] >= 0.5
        zz = np.where(upper, p[:, 2] - 0.5, 0.5 - p[:, 2])
        in_slab = zz > self.z_tops[-1]
        layer_of = np.array([self._locate(z) for z in zz])
        for idx in np.unique(layer_of):
            mask = (layer_of == idx) & ~in_slab
            if not np.any(mask):
                continue
            lx, ly, lz = self._cell_frame(p[mask, 0], p[mask, 1], zz[mask], idx)
            S = self.cells[idx].stress_at(np.column_stack([lx, ly, lz]))
            low = ~upper[mask]
            if np.any(low):
                S[low] = g_mirror_tensor(S[low])
            out[mask] = S
        if np.any(in_slab):
            out[in_slab, 2, 2] = self.F
        return out

    def material_at(self, points):
        p = np.atleast_2d(np.asarray(points, float))
        out = np.zeros(len(p), dtype=bool)
        upper = p[:, 2] >= 0.5
        zz = np.where(upper, p[:, 2] - 0.5, 0.5 - p[:, 2])
        in_slab = zz > self.z_tops[-1]
        layer_of = np.array([self._locate(z) for z in zz])
        for idx in np.unique(layer_of):
            mask = (layer_of == idx) & ~in_slab
            if not np.any(mask):
                continue
            lx, ly, lz = self._cell_frame(p[mask, 0], p[mask, 1], zz[mask], idx)
            out[mask] = self.cells[idx].contains_material(
                np.column_stack([lx, ly, lz]))
        out[in_slab] = True
        return out

    # -- slice quantities ----------------------------------------------------

    def _slice_layer(self, t):
        zz = abs(t - 0.5)
        if zz > self.z_tops[-1]:
            return None, None  # slab
        idx = self._locate(zz)
        z0 = self.z_tops[idx] - self.plan.layers[idx].height
        return idx, zz - z0

    def slice_area(self, t):
        idx, lz = self._slice_layer(t)
        if idx is None:
            return self.ell ** 2
        layer = self.plan.layers[idx]
        cell = self.cells[idx]
        if cell.dim == 3:
            return layer.count * cell.slice_area_fn(lz)
        return layer.count * self.ell * cell.slice_area_fn(lz)

    def slice_flux(self, t):
        idx, lz = self._slice_layer(t)
        if idx is None:
            return self.F * self.ell ** 2
        layer = self.plan.layers[idx]
        cell = self.cells[idx]
        if cell.dim == 3:
            return layer.count * cell.flux_fn(lz)
        return layer.count * self.ell * cell.flux_fn(lz)

    def mean_vertical_traction(self, t):
        return self.slice_flux(t) / self.ell ** 2

    def slice_compliance(self, t, fallback_grid=192):
        idx, lz = self._slice_layer(t)
        if idx is None:
            return self.F ** 2 * self.ell ** 2
        layer = self.plan.layers[idx]
        cell = self.cells[idx]
        if cell.slice_compliance_fn is not None:
            per_cell = cell.slice_compliance_fn(lz)
        else:
            w = layer.width
            if cell.dim == 3:
                xs = -w / 2 + (np.arange(fallback_grid) + 0.5) * w / fallback_grid
                X, Y = np.meshgrid(xs, xs, indexing="ij")
                pts = np.column_stack([X.ravel(), Y.ravel(),
                                       np.full(X.size, lz)])
                S = cell.stress_at(pts)
                per_cell = float(np.mean(np.einsum("nij,nij->n", S, S))) * w * w
            else:
                xs = -w / 2 + (np.arange(fallback_grid ** 2) + 0.5) \
                    * w / fallback_grid ** 2
                pts = np.column_stack([np.zeros_like(xs), xs,
                                       np.full_like(xs, lz)])
                S = cell.stress_at(pts)
                per_cell = float(np.mean(np.einsum("nij,nij->n", S, S))) * w
        if cell.dim == 3:
            return layer.count * per_cell
        return layer.count * self.ell * per_cell

    def sigma33_grid(self, t, per_cell_res=64):
        """sigma_33 rasterized on one cell tile at height t, plus the tiling
        count per side; the global field is this tile repeated periodically."""
        idx, lz = self._slice_layer(t)
        if idx is None:
            tile = np.full((per_cell_res, per_cell_res), self.F)
            return tile, 1, self.ell
        layer = self.plan.layers[idx]
        cell = self.cells[idx]
        w = layer.width
        xs = -w / 2 + (np.arange(per_cell_res) + 0.5) * w / per_cell_res
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, lz)])
        S = cell.stress_at(pts)
        tiles_per_side = int(round(self.ell / w))
        return S[:, 2, 2].reshape(per_cell_res, per_cell_res), \
            tiles_per_side, w

    # -- certification --------------------------------------------------------

    def interface_report(self, n_grid=16, per_layer_cert=True, cert_n=4):
        """Traction continuity at every layer interface, the midplane seam,
        and the domain top face; per-layer cell certificates optionally."""
        report = {"interfaces": [], "cells": [], "passed": True}
        delta_base = 1e-7

        def probe(z, tol, name, window_w):
            k = np.arange(1, n_grid * n_grid + 1)
            xs = np.mod(0.5 + k * 0.7548776662466927, 1.0) * window_w
            ys = np.mod(0.5 + k * 0.5698402909980532, 1.0) * window_w
            pts = np.column_stack([xs, ys, np.full(len(k), z)])
            delta = delta_base * min(1.0, window_w)
            Sp = self.stress_at(pts + [0, 0, delta])
            Sm = self.stress_at(pts - [0, 0, delta])
            jump = (Sp - Sm)[:, :, 2]
            res = float(np.max(np.linalg.norm(jump, axis=1)))
            entry = {"name": name, "z": z, "residual": res, "tol": tol,
                     "passed": res < tol}
            report["interfaces"].append(entry)
            return entry

        pde_tol = None
        for cell in self.cells:
            if cell.family == "cone":
                pde_tol = cell.params["pde_tol"]
        base_tol = 1e-10 if pde_tol is None else pde_tol

        probe(0.5, base_tol, "midplane", self.plan.layers[0].width)
        for i in range(len(self.cells) - 1):
            z = 0.5 + self.z_tops[i]
            probe(z, base_tol, f"layer{i + 1}/{i + 2}",
                  self.plan.layers[i].width)
        # top boundary traction
        wtop = self.plan.layers[-1].width
        k = np.arange(1, n_grid * n_grid + 1)
        xs = np.mod(0.5 + k * 0.7548776662466927, 1.0) * wtop
        ys = np.mod(0.5 + k * 0.5698402909980532, 1.0) * wtop
        pts = np.column_stack([xs, ys,
                               np.full(len(k), 1.0 - delta_base * wtop)])
        T = self.stress_at(pts)[:, :, 2]
        res = float(np.max(np.linalg.norm(T - [0, 0, self.F], axis=1)))
        slab_seam = None
        if self.plan.slab_height > 0:
            # the closing slab makes the top exact but its seam with the last
            # perforated layer carries the truncation mismatch: reported
            z = 1.0 - self.plan.slab_height
            wk = self.plan.layers[-1].width
            xs2 = np.mod(0.5 + k * 0.7548776662466927, 1.0) * wk
            ys2 = np.mod(0.5 + k * 0.5698402909980532, 1.0) * wk
            pts2 = np.column_stack([xs2, ys2, np.full(len(k), z)])
            d = delta_base * min(self.plan.slab_height, wk)
            Sp = self.stress_at(pts2 + [0, 0, d])
            Sm = self.stress_at(pts2 - [0, 0, d])
            jump = (Sp - Sm)[:, :, 2]
            slab_seam = {
                "name": "slab-seam (waived: stack truncation diagnostic)",
                "z": z, "residual": float(np.max(np.linalg.norm(jump, axis=1))),
                "mean_abs": float(np.mean(np.linalg.norm(jump, axis=1))),
                "waived": True}
            report["slab_seam"] = slab_seam
        report["interfaces"].append(
            {"name": "top-boundary", "z": 1.0, "residual": res,
             "tol": base_tol, "passed": res < base_tol})

        if per_layer_cert:
            for layer, cell in zip(self.plan.layers, self.cells):
                rep = cell.certify(n=cert_n)
                report["cells"].append(
                    {"layer": layer.index, "family": layer.family,
                     "passed": rep.passed,
                     "max_interface_residual": rep.max_interface_residual,
                     "max_divergence_residual": rep.max_divergence_residual})
        report["passed"] = (all(e["passed"] for e in report["interfaces"])
                            and all(c["passed"] for c in report["cells"]))
        return report


def assemble(plan: LayerPlan, check_interfaces=True) -> Construction:
    con = Construction(plan)
    if check_interfaces:
        rep = con.interface_report(n_grid=8, per_layer_cert=False)
        bad = [e for e in rep["interfaces"] if not e["passed"]]
        if bad:
            raise StackingMismatch(
                f"trace mismatch at {bad[0]['name']}: "
                f"residual {bad[0]['residual']:.3e} > {bad[0]['tol']:.1e}")
    return con
