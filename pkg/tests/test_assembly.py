import math

import numpy as np
import pytest

from microstruct import assembly as A
from microstruct.errors import (DomainTooNarrow, ParamDomain, RegimeViolation,
                                StackingMismatch)


def test_plan_small_force_example():
    plan = A.plan_small_force(0.25, 1e-5, 1.0)
    target = 0.25 ** (-1 / 6) * 1e-5 ** (1 / 3) / 8
    assert target == pytest.approx(3.3930e-3, rel=1e-3)
    # largest width below the target with ell an integer multiple
    assert plan.notes["w1"] == pytest.approx(1.0 / 295.0)
    assert plan.notes["w1"] < target
    assert 1.0 / (plan.notes["w1"] * 2) == pytest.approx(295 / 2)
    assert plan.half_height == pytest.approx(0.5, abs=1e-15)


def test_plan_small_force_layer_structure():
    F, eps = 0.25, 1e-5
    plan = A.plan_small_force(F, eps, 1.0)
    widths = [l.width for l in plan.layers]
    heights = [l.height for l in plan.layers]
    for a, b in zip(widths[:-1], widths[1:]):
        assert a == pytest.approx(2 * b)
    assert all(h1 >= h2 for h1, h2 in zip(heights, heights[1:]))
    assert plan.layers[-1].family == "strut-boundary"
    assert plan.layers[-1].width <= eps
    # counts double per layer and tile the base exactly
    for l in plan.layers:
        assert l.count == pytest.approx((1.0 / l.width) ** 2)
        assert abs(1.0 / l.width - round(1.0 / l.width)) < 1e-9
    # n - N stays within the dyadic window (integer rounding adds at most 2)
    n, N = plan.notes["n"], plan.notes["N"]
    assert n - N <= abs(math.log2(math.sqrt(F))) + 2


def test_plan_small_force_errors():
    with pytest.raises(DomainTooNarrow):
        A.plan_small_force(0.25, 1e-5, 0.01)
    with pytest.raises(ParamDomain):
        A.plan_small_force(0.7, 1e-5, 1.0)
    with pytest.raises(ParamDomain):
        A.plan_small_force(0.25, 0.3, 1.0)


def test_plan_small_force_reused_for_extremely_small():
    # F below sqrt(eps): the same planner applies unchanged
    plan = A.plan_small_force(1e-3, 1e-4, 1.0)
    assert plan.regime == "small"
    assert plan.half_height == pytest.approx(0.5, abs=1e-15)


def test_plan_intermediate():
    F, eps = 0.5, 1e-5
    plan = A.plan_intermediate(F, eps, 1.0)
    scale = (1 - F) ** (-1 / 3) * eps ** (1 / 3)
    assert plan.notes["w1"] < scale
    assert plan.notes["w1"] > 0.05 * scale  # same scaling, safety factor 1/4
    assert plan.half_height == pytest.approx(0.5, abs=1e-15)
    assert plan.layers[-1].family == "planar-boundary"
    # stop rule: last planar layer still satisfies (1-F) w < l
    planar = [l for l in plan.layers if l.family == "planar"]
    for l in planar:
        assert (1 - F) * l.width < l.height
    wn = plan.layers[-1].width
    assert wn <= 4 * (1 - F) * eps  # w_n ~ (1-F) eps
    for l in plan.layers:
        assert abs(1.0 / l.width - round(1.0 / l.width)) < 1e-6


def test_plan_large_force():
    F, eps = 1 - 1 / 128, 1e-6
    # regime check: eps^(2/3) = 1e-4 below (1-F) |log(1-F)|^(-1/3) ~ 4.65e-3
    gate = (1 - F) * abs(math.log(1 - F)) ** (-1 / 3)
    assert eps ** (2 / 3) == pytest.approx(1e-4)
    assert gate == pytest.approx(4.65e-3, rel=0.01)
    plan = A.plan_large_force(F, eps, 1.0, pde_n=128)
    assert plan.slab_height > 0
    assert plan.half_height == pytest.approx(0.5, abs=1e-15)
    l_opt, _, _ = A.cone_height_rules(F, eps)
    w = plan.notes["w1"]
    for _ in range(6):
        ratio = l_opt(w / 2) / l_opt(w)
        assert 2 ** -1.5 - 1e-12 <= ratio <= 2 ** -1.25 + 1e-12
        w /= 2


def test_plan_large_force_errors():
    with pytest.raises(ParamDomain):
        A.plan_large_force(0.9, 1e-6, 1.0)
    with pytest.raises(RegimeViolation):
        A.plan_large_force(1 - 1 / 128, 0.2, 1.0)
    with pytest.raises(DomainTooNarrow):
        A.plan_large_force(1 - 1 / 128, 1e-6, 0.01)


def test_assemble_midplane_mirror(small_force_construction):
    con = small_force_construction
    rng = np.random.default_rng(13)
    pts = np.column_stack([rng.random(200), rng.random(200),
                           rng.uniform(0.51, 0.99, 200)])
    upper = con.stress_at(pts)
    mirror = pts.copy()
    mirror[:, 2] = 1.0 - mirror[:, 2]
    lower = con.stress_at(mirror)
    assert np.allclose(upper[:, 2, 2], lower[:, 2, 2], atol=1e-14)
    assert np.allclose(upper[:, 0, 2], -lower[:, 0, 2], atol=1e-14)
    assert np.allclose(upper[:, 1, 2], -lower[:, 1, 2], atol=1e-14)


def test_assemble_interfaces_and_traction(small_force_construction):
    rep = small_force_construction.interface_report(
        n_grid=10, per_layer_cert=False)
    assert all(e["passed"] for e in rep["interfaces"])
    for t in (0.12, 0.5, 0.83):
        assert small_force_construction.mean_vertical_traction(t) == \
            pytest.approx(0.25, abs=1e-6)


def test_single_layer_boundary_only_plan():
    w1 = 1.0 / math.sqrt(3.0)   # height sqrt(3) w / 2 equals exactly 1/2
    ell = 3.0 * w1
    plan = A.LayerPlan("small", 0.25, 1e-4, ell,
                       [A.Layer(1, "strut-boundary", w1, math.sqrt(3) * w1 / 2,
                                9)])
    assert plan.half_height == pytest.approx(0.5)
    con = A.assemble(plan)
    rep = con.interface_report(n_grid=8, per_layer_cert=True)
    assert rep["passed"]


def test_stacking_mismatch_detected():
    # a width that does not halve breaks the four-children alignment
    plan = A.LayerPlan("small", 0.25, 1e-4, 1.0,
                       [A.Layer(1, "strut", 1.0 / 4.0, 0.3, 16),
                        A.Layer(2, "strut", 1.0 / 12.0, 0.2, 144)])
    with pytest.raises(StackingMismatch):
        A.assemble(plan)


def test_plan_serialization(small_force_construction):
    d = small_force_construction.plan.to_dict()
    assert d["regime"] == "small"
    assert len(d["layers"]) == len(small_force_construction.cells)
    assert isinstance(small_force_construction.plan.to_json(), str)


def test_large_force_construction_slab_report(large_force_construction):
    rep = large_force_construction.interface_report(
        n_grid=8, per_layer_cert=False)
    assert all(e["passed"] for e in rep["interfaces"])
    assert rep["slab_seam"]["waived"]
    # the seam mismatch is the truncation diagnostic: about 1 - F on material
    assert rep["slab_seam"]["residual"] == pytest.approx(1 / 128, rel=0.2)


def test_intermediate_construction_certifies(intermediate_construction):
    rep = intermediate_construction.interface_report(
        n_grid=8, per_layer_cert=False)
    assert all(e["passed"] for e in rep["interfaces"])
    for t in (0.2, 0.5, 0.9):
        assert intermediate_construction.mean_vertical_traction(t) == \
            pytest.approx(0.5, abs=1e-6)
