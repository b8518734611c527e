"""Command-line front end: build single constructions, certify them, sweep
(F, eps) grids into CSV/JSON reports, and fit log-log scaling exponents.

Exit codes: 0 success, 2 parameter-domain errors, 3 certification failure,
64 usage errors (empty grids, bad flags).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import bounds as B
from .assembly import (assemble, plan_block, plan_intermediate,
                       plan_large_force, plan_small_force)
from .cost import construction_cost, superconductor_excess
from .errors import (DomainTooNarrow, MicrostructError, OutOfTheorem,
                     ParamDomain, RegimeViolation, StackingMismatch,
                     TooFewPoints)

SCHEMA = 1

CSV_COLUMNS = ["schema", "regime", "F", "eps", "ell", "delta_j", "f_value",
               "ratio", "label", "certificate", "status",
               "compliance", "volume", "perimeter_relative",
               "perimeter_full", "j0_star", "g_excess",
               "lb_boundary_faces", "lb_exterior", "lb_interior",
               "lb_slice", "lb_wasserstein"]


def make_plan(regime, F, eps, ell, truncate=1e-4, pde_n=256):
    if regime == "auto":
        label = B.scaling_f(eps, F).label
        regime = {"extremely-small": "small", "small": "small",
                  "large": "large", "extremely-large": "block"}[label]
    if regime == "small":
        return plan_small_force(F, eps, ell)
    if regime == "intermediate":
        return plan_intermediate(F, eps, ell)
    if regime == "large":
        return plan_large_force(F, eps, ell, truncation=truncate, pde_n=pde_n)
    if regime == "block":
        return plan_block(F, ell)
    raise ParamDomain(f"unknown regime {regime}")


def build_report(regime, F, eps, ell, perimeter="relative", truncate=1e-4,
                 pde_n=256, certify=True, wasserstein=True,
                 allow_out_of_theorem=False):
    warnings = []
    if not allow_out_of_theorem:
        try:
            B.scaling_f(eps if eps > 0 else 1e-9, F)
        except OutOfTheorem as exc:
            raise
    try:
        regime_spec = B.scaling_f(eps, F) if eps > 0 else None
    except OutOfTheorem:
        regime_spec = None
    if regime_spec is not None:
        cond = ell ** 3 >= min(
            1.0, eps / max(min(math.sqrt(F),
                               (1 - F) ** 1.5 * abs(math.log(max(1 - F, 1e-300)))
                               if F < 1 else math.inf), 1e-300))
        if not cond:
            warnings.append("domain-width condition of the scaling law "
                            "not met; bounds remain valid, constants may not")
    plan = make_plan(regime, F, eps if eps > 0 else 1e-9, ell,
                     truncate=truncate, pde_n=pde_n)
    con = assemble(plan)
    cost_rel = construction_cost(con, eps, "relative")
    cost_full = construction_cost(con, eps, "full")
    cost = cost_rel if perimeter == "relative" else cost_full
    cert = con.interface_report(per_layer_cert=certify) if certify else None
    lb = B.lower_bound_report(con, cost_rel.excess, cost_full.excess,
                              wasserstein=wasserstein)
    f_val = regime_spec.value if regime_spec else float("nan")
    report = {
        "schema": SCHEMA,
        "params": {"regime": plan.regime, "F": F, "eps": eps, "ell": ell,
                   "perimeter": perimeter},
        "plan": plan.to_dict(),
        "cost": cost.to_dict(),
        "cost_full_perimeter": cost_full.to_dict(),
        "f_value": f_val if regime_spec else None,
        "f_tilde": B.scaling_f_tilde(eps, F, ell) if regime_spec else None,
        "label": regime_spec.label if regime_spec else "out-of-theorem",
        "ratio": cost.excess / f_val if regime_spec and f_val > 0 else None,
        "g_excess": superconductor_excess(con, eps),
        "certificate": cert,
        "lower_bounds": lb.to_dict(),
        "warnings": warnings,
    }
    return report, con


def _sweep_point(args):
    regime, F, eps, ell, perimeter, truncate, pde_n, wasserstein = args
    row = {"schema": SCHEMA, "F": F, "eps": eps, "ell": ell}
    try:
        rep, _ = build_report(regime, F, eps, ell, perimeter=perimeter,
                              truncate=truncate, pde_n=pde_n,
                              certify=True, wasserstein=wasserstein)
        cert_ok = rep["certificate"]["passed"] if rep["certificate"] else True
        lbs = {e["name"]: e["value"] for e in rep["lower_bounds"]["entries"]}
        row.update({
            "regime": rep["params"]["regime"],
            "delta_j": rep["cost"]["excess"],
            "f_value": rep["f_value"],
            "ratio": rep["ratio"],
            "label": rep["label"],
            "certificate": "pass" if cert_ok else "fail",
            "status": "ok",
            "compliance": rep["cost"]["compliance"],
            "volume": rep["cost"]["volume"],
            "perimeter_relative": rep["cost"]["perimeter_relative"],
            "perimeter_full": rep["cost"]["perimeter_full"],
            "j0_star": rep["cost"]["j0_star"],
            "g_excess": rep["g_excess"],
            "lb_boundary_faces": lbs.get("boundary-faces"),
            "lb_exterior": lbs.get("exterior-polynomial"),
            "lb_interior": lbs.get("interior-perimeter"),
            "lb_slice": lbs.get("slice-excess"),
            "lb_wasserstein": lbs.get("wasserstein-cone"),
        })
    except MicrostructError as exc:
        row.update({"regime": regime, "status": f"error: {exc}",
                    "certificate": "n/a", "label": "n/a"})
    return row


def run_sweep(config):
    F_grid = config["F_grid"]
    eps_grid = config["eps_grid"]
    if not F_grid or not eps_grid:
        raise ValueError("empty grid")
    jobs = int(config.get("jobs", 1))
    points = [(config.get("regime", "auto"), F, eps, config.get("ell", 1.0),
               config.get("perimeter", "relative"),
               config.get("truncate", 1e-4), config.get("pde_n", 256),
               config.get("wasserstein", False))
              for F in F_grid for eps in eps_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, points))
    else:
        rows = [_sweep_point(p) for p in points]
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore",
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k))
                         for k in CSV_COLUMNS})
    return buf.getvalue()


def fit_loglog(xs, ys):
    """Least-squares slope/intercept of log10 y against log10 x."""
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    keep = (xs > 0) & (ys > 0)
    xs, ys = xs[keep], ys[keep]
    if len(xs) < 3:
        raise TooFewPoints(f"need >= 3 positive points, got {len(xs)}")
    lx, ly = np.log10(xs), np.log10(ys)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(coef[0]), "intercept": float(coef[1]),
            "r_squared": r2, "residuals": (ly - pred).tolist()}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common_flags(p):
    p.add_argument("--F", type=float, required=True)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--ell", type=float, default=1.0)
    p.add_argument("--regime", default="auto",
                   choices=["auto", "small", "intermediate", "large", "block"])
    p.add_argument("--perimeter", default="relative",
                   choices=["relative", "full"])
    p.add_argument("--pde-h", type=float, default=1.0 / 256.0,
                   help="grid spacing of the cross-section solves")
    p.add_argument("--truncate", type=float, default=1e-4,
                   help="minimum layer height of the cone stack")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-out-of-theorem", action="store_true")


def main(argv=None):
    ap = argparse.ArgumentParser(prog="microstruct")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_build = sub.add_parser("build", help="build and report one construction")
    _common_flags(p_build)
    p_build.add_argument("--export-obj", default=None)
    p_build.add_argument("--out", default=None)

    p_cert = sub.add_parser("certify", help="admissibility certificates only")
    _common_flags(p_cert)
    p_cert.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="(F, eps) grid sweep")
    p_sweep.add_argument("--config", default=None,
                         help="JSON config mirroring the sweep options")
    p_sweep.add_argument("--F-grid", default=None,
                         help="comma-separated F values")
    p_sweep.add_argument("--eps-grid", default=None,
                         help="comma-separated eps values")
    p_sweep.add_argument("--ell", type=float, default=1.0)
    p_sweep.add_argument("--regime", default="auto")
    p_sweep.add_argument("--perimeter", default="relative",
                         choices=["relative", "full"])
    p_sweep.add_argument("--pde-h", type=float, default=1.0 / 256.0)
    p_sweep.add_argument("--truncate", type=float, default=1e-4)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--format", default="csv", choices=["csv", "json"])

    p_fit = sub.add_parser("fit", help="log-log exponent fit on sweep output")
    p_fit.add_argument("--table", required=True, help="CSV from sweep")
    p_fit.add_argument("--x", default="eps")
    p_fit.add_argument("--y", default="delta_j")
    p_fit.add_argument("--filter", default=None, help="column=value filter")
    p_fit.add_argument("--out", default=None)

    args = ap.parse_args(argv)

    try:
        if args.cmd in ("build", "certify"):
            pde_n = max(2, int(round(1.0 / args.pde_h)))
            report, con = build_report(
                args.regime, args.F, args.eps, args.ell,
                perimeter=args.perimeter, truncate=args.truncate,
                pde_n=pde_n, certify=True,
                allow_out_of_theorem=args.allow_out_of_theorem)
            if args.cmd == "build" and args.export_obj:
                _export_construction_obj(con, args.export_obj)
                report["obj_path"] = args.export_obj
            text = json.dumps(report, indent=2, default=_json_default)
            _emit(text, args.out)
            if report["certificate"] and not report["certificate"]["passed"]:
                return 3
            return 0

        if args.cmd == "sweep":
            cfg = {}
            if args.config:
                with open(args.config, encoding="utf-8") as fh:
                    cfg = json.load(fh)
            if args.F_grid:
                cfg["F_grid"] = [float(v) for v in args.F_grid.split(",")]
            if args.eps_grid:
                cfg["eps_grid"] = [float(v) for v in args.eps_grid.split(",")]
            cfg.setdefault("ell", args.ell)
            cfg.setdefault("regime", args.regime)
            cfg.setdefault("perimeter", args.perimeter)
            cfg.setdefault("pde_n", max(2, int(round(1.0 / args.pde_h))))
            cfg.setdefault("truncate", args.truncate)
            cfg.setdefault("jobs", args.jobs)
            if not cfg.get("F_grid") or not cfg.get("eps_grid"):
                print("error: empty sweep grid", file=sys.stderr)
                return 64
            rows = run_sweep(cfg)
            if args.format == "csv":
                _emit(rows_to_csv(rows), args.out)
            else:
                _emit(json.dumps(rows, indent=2, default=_json_default),
                      args.out)
            return 0 if any(r["status"] == "ok" for r in rows) else 2

        if args.cmd == "fit":
            with open(args.table, encoding="utf-8") as fh:
                rows = list(csv.DictReader(fh))
            if args.filter:
                key, _, val = args.filter.partition("=")
                rows = [r for r in rows if r.get(key) == val]
            xs = [float(r[args.x]) for r in rows if r.get(args.x)]
            ys = [float(r[args.y]) for r in rows if r.get(args.y)]
            res = fit_loglog(xs, ys)
            _emit(json.dumps(res, indent=2), args.out)
            return 0

    except (ParamDomain, DomainTooNarrow, RegimeViolation, OutOfTheorem) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StackingMismatch as exc:
        print(f"certification error: {exc}", file=sys.stderr)
        return 3
    except TooFewPoints as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 64
    return 64


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _export_construction_obj(con, path):
    """One representative cell per layer, placed at its layer height."""
    from .objmesh import export_obj
    regions = []
    names = []
    for layer, cell in zip(con.plan.layers, con.cells):
        z0 = 0.5 + con.z_tops[layer.index - 1] - layer.height
        for j, region in enumerate(cell.material_regions):
            if cell.dim != 3:
                continue
            regions.append(_shifted_region(region, z0))
            names.append(f"layer{layer.index}_{layer.family}_{j}")
        for j, region in enumerate(cell.void_regions):
            regions.append(_shifted_region(region, z0))
            names.append(f"layer{layer.index}_void_{j}")
    if not regions:  # planar families: export extruded footprints as boxes
        from .geometry import box
        for layer, cell in zip(con.plan.layers, con.cells):
            z0 = 0.5 + con.z_tops[layer.index - 1] - layer.height
            regions.append(box((0, -layer.width / 2, z0),
                               (con.ell, layer.width / 2, z0 + layer.height)))
            names.append(f"layer{layer.index}_{layer.family}")
    export_obj(regions, path, names=names)
    return path


def _shifted_region(region, dz):
    from .geometry import (AxisCylinder, Ball, BoxMinus, ConvexPolyhedron,
                           RevolutionSolid)
    shift = np.array([0.0, 0.0, dz])
    if isinstance(region, ConvexPolyhedron):
        return region.transformed(shift=shift)
    if isinstance(region, RevolutionSolid):
        return RevolutionSolid(region.center, region.z0 + dz, region.height,
                               region.r2, name=region.name)
    if isinstance(region, Ball):
        return Ball(region.center + shift, region.radius,
                    clip_box=None if region.clip_box is None else
                    (region.clip_box[0] + shift, region.clip_box[1] + shift),
                    name=region.name)
    if isinstance(region, BoxMinus):
        return BoxMinus(region.lo + shift, region.hi + shift,
                        [_shifted_region(v, dz) for v in region.voids],
                        name=region.name)
    if isinstance(region, AxisCylinder):
        return AxisCylinder(region.center + shift, region.axis, region.radius,
                            (region.clip_box[0] + shift,
                             region.clip_box[1] + shift), name=region.name)
    return region


if __name__ == "__main__":
    raise SystemExit(main())
