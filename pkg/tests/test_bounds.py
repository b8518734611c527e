import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microstruct import bounds as B
from microstruct.cost import construction_cost
from microstruct.errors import OutOfTheorem


def test_scaling_f_small_case():
    spec = B.scaling_f(0.01, 0.25)
    assert spec.label == B.SMALL
    assert spec.value == pytest.approx(0.0025 ** (2 / 3), rel=1e-12)
    assert spec.value == pytest.approx(1.8420e-2, rel=1e-4)


def test_scaling_f_extremely_small_case():
    spec = B.scaling_f(1e-6, 1e-4)
    assert spec.label == B.EXTREMELY_SMALL
    assert spec.value == 1e-6


def test_scaling_f_unit_load():
    spec = B.scaling_f(0.01, 1.0)
    assert spec.label == B.EXTREMELY_LARGE
    assert spec.value == 0.0


def test_scaling_f_large_case():
    F = 1 - 1 / 128
    spec = B.scaling_f(1e-6, F)
    assert spec.label == B.LARGE
    expect = (1 - F) * abs(math.log(1 - F)) ** (1 / 3) * 1e-4
    assert spec.value == pytest.approx(expect, rel=1e-12)


def test_scaling_f_out_of_theorem():
    with pytest.raises(OutOfTheorem):
        B.scaling_f(0.01, 1.5)
    with pytest.raises(OutOfTheorem):
        B.scaling_f(0.3, 0.5)


def test_regime_partition_exhaustive_exclusive():
    labels = set()
    for F in np.linspace(0.001, 1.0, 120):
        for eps in np.logspace(-8, math.log10(0.2499), 40):
            spec = B.scaling_f(eps, float(F))
            assert spec.label in (B.EXTREMELY_SMALL, B.SMALL, B.LARGE,
                                  B.EXTREMELY_LARGE)
            labels.add(spec.label)
    assert len(labels) == 4


def test_f_tilde_cases():
    # wide domain: the side-wall term is dominated by eps
    F, eps = 0.49, 1e-4
    assert B.scaling_f_tilde(eps, F, ell=2.0) == pytest.approx(
        max(eps, B.scaling_f(eps, F).value))
    # narrow domain near full load: the side-wall term dominates
    v = B.scaling_f_tilde(1e-4, 0.99, 0.05)
    assert v == pytest.approx(math.sqrt(0.99) * 1e-4 / 0.05, rel=1e-12)
    assert v == pytest.approx(1.99e-3, rel=1e-2)
    # vanishing load: plain eps survives
    assert B.scaling_f_tilde(1e-4, 1e-7, 1.0) == pytest.approx(1e-4)


def test_superconductor_f_values():
    assert B.superconductor_f(1e-3, 1.0) == 0.0
    v = B.superconductor_f(1e-6, 0.3, 1.0)
    assert v == pytest.approx(0.3 ** (2 / 3) * 1e-4, rel=1e-12)
    assert v == pytest.approx(4.481e-5, rel=1e-3)
    # regime boundary b_a = (eps/L)^(2/7): adjacent cases agree to a factor
    eps, L = 1e-7, 1.0
    ba = (eps / L) ** (2 / 7)
    case1 = ba * eps ** (4 / 7) * L ** (3 / 7)
    case2 = ba ** (2 / 3) * eps ** (2 / 3) * L ** (1 / 3)
    assert 0.25 <= case1 / case2 <= 4.0


def test_polynomial_gap_point_values():
    assert float(B.polynomial_estimate_gap(1.0, 2.0)) == pytest.approx(
        2.0 - 0.5 * 2 ** (2 / 3), rel=1e-12)
    assert float(B.polynomial_estimate_gap(1.0, 2.0)) == pytest.approx(
        1.206, abs=1e-3)
    # near the proof's minimizer y = a^(-1/3) for small a
    for a in (1e-4, 1e-2):
        assert float(B.polynomial_estimate_gap(a ** (-1 / 3), a)) >= 0.0


def test_polynomial_gap_property_large_sample():
    rng = np.random.default_rng(0)
    y = 10.0 ** rng.uniform(-6, 6, 10 ** 5)
    a = 10.0 ** rng.uniform(-6, 6, 10 ** 5)
    assert float(np.min(B.polynomial_estimate_gap(y, a))) >= -1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_polynomial_gap_hypothesis(y, a):
    assert float(B.polynomial_estimate_gap(y, a)) >= -1e-12


def test_exterior_bound_forms():
    out = B.exterior_perimeter_bound(0.25, 1e-4, 1.0)
    assert out["in_condition"]
    assert out["simplified"] == pytest.approx(
        max(1e-4, 0.5 * 1e-4))
    # vanishing load: the flat-face term survives
    tiny = B.exterior_perimeter_bound(1e-9, 1e-4, 1.0)
    assert tiny["value"] == pytest.approx(1e-4)


def test_boundary_faces_and_interior_bounds():
    assert B.boundary_faces_bound(1e-4, 2.0) == pytest.approx(8e-4)
    assert B.interior_perimeter_bound(0.2, 0.01, 1.0) == pytest.approx(0.01)
    assert B.interior_perimeter_bound(0.3, 0.01, 1.0) is None
    assert B.interior_perimeter_bound(0.2, 0.2, 1.0) is None


def test_slice_jensen_block_equality(block_construction):
    con = block_construction
    bound = B.slice_jensen_bound(con, 0.3)
    assert bound == pytest.approx(con.slice_compliance(0.3), rel=1e-12)


def test_slice_jensen_substitution():
    class Fake:
        F, ell = 0.5, 1.0

        def slice_area(self, t):
            return 2 * self.F * self.ell ** 2
    assert B.slice_jensen_bound(Fake(), 0.5) == pytest.approx(
        Fake.F * Fake.ell ** 2 / 2)


def test_wasserstein_trivial_witnesses(small_force_construction):
    con = small_force_construction
    # psi = const: mass conservation makes the integral vanish
    tile, tiles, w = con.sigma33_grid(0.52, per_cell_res=64)
    h = w / 64
    integral = tiles ** 2 * float(np.sum(tile - con.F)) * h * h
    assert abs(integral) < 1e-4  # = (flux - F ell^2) up to raster error
    assert con.slice_flux(0.52) == pytest.approx(con.F, abs=1e-6)


def test_wasserstein_cone_witness(small_force_construction):
    con = small_force_construction
    wb = B.wasserstein_dual_bound(con, 0.52)
    c = construction_cost(con, con.plan.eps, "relative")
    assert 0.0 <= wb["value"] <= c.excess + 1e-8
    assert wb["lipschitz_max"] <= 1.0 + 0.1


def test_large_force_closed_form():
    out = B.large_force_closed_form_check(2.0, 1.0)
    assert out["J_block"] == pytest.approx(5.0)
    assert out["match"]
    # continuity at the unit load: both convexification branches agree
    edge = B.large_force_closed_form_check(1.0, 1.0)
    assert edge["g_star_star_at_mean"] == pytest.approx(2.0)
    rng = np.random.default_rng(1)
    for s in rng.uniform(0, 1, 20):
        out = B.large_force_closed_form_check(s, 1.0)
        assert out["g_star_star_at_mean"] == pytest.approx(2 * s, rel=1e-12)


def test_lower_bound_report_pass(small_force_construction):
    con = small_force_construction
    eps = con.plan.eps
    rel = construction_cost(con, eps, "relative").excess
    full = construction_cost(con, eps, "full").excess
    rep = B.lower_bound_report(con, rel, full)
    assert rep.passed
    names = {e["name"] for e in rep.entries}
    assert {"boundary-faces", "exterior-polynomial", "slice-excess",
            "wasserstein-cone"} <= names
