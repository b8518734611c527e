import math

import numpy as np
import pytest

from microstruct import cells as C
from microstruct.cost import mc_cell_energy
from microstruct.errors import ParamDomain


# ---------------------------------------------------------------------------
# strut cell
# ---------------------------------------------------------------------------

def test_strut_params_derivation(strut_cell_default):
    p = strut_cell_default.params
    F, w, l = 0.25, 0.1, 0.2
    assert p["s"] == pytest.approx(w * math.sqrt(F) / 2)  # 0.025
    # the solved angle closes the strut prism exactly
    T, s = p["tan_alpha"], p["s"]
    resid = math.sqrt(2) * s * T * T - l * T + math.sqrt(2) * (w / 4 - s / 2)
    assert abs(resid) < 1e-13
    lo = (math.sqrt(2) - 1) * w / (4 * l)
    hi = w / (math.sqrt(2) * l)
    assert lo <= T <= hi
    assert p["a"] == pytest.approx(math.sqrt(2) * s * T)


def test_strut_hull_volume_table(strut_cell_default):
    hulls, der = C._strut_quarter(0.25, 0.1, 0.2)
    s, a = der["s"], der["a"]
    vols = {h.name: h.volume for h, _ in hulls}
    assert vols["O1"] == pytest.approx(s * s * a / 2, rel=1e-10)
    assert vols["O2"] == pytest.approx(s * s * a / 12, rel=1e-10)
    assert vols["O3"] == pytest.approx(s * s * a / 12, rel=1e-10)
    assert vols["O4"] == pytest.approx(s * s * a / 4, rel=1e-10)
    assert vols["O5"] == pytest.approx(s * s * a / 4, rel=1e-10)
    assert vols["O7"] == pytest.approx(s * s * a / 2, rel=1e-10)
    assert vols["O9"] == pytest.approx(
        s * a / 2 * (0.1 / 4 + s / 2), rel=1e-10)
    # strut length from solved geometry never exceeds l / cos(alpha)
    alpha = der["alpha"]
    P1 = np.array([s, s, 0.0])
    Fpt = np.array([0.1 / 4 + s / 2, 0.1 / 4 + s / 2, 0.2 - a])
    assert np.linalg.norm(Fpt - P1) <= 0.2 / math.cos(alpha) + 1e-12


def test_strut_cell_cost_bounds(strut_cell_default):
    cell = strut_cell_default
    F, w, l = 0.25, 0.1, 0.2
    s = cell.params["s"]
    c = cell.costs
    assert c.volume <= 4 * s * s * l + 41 / 3 * s * s * w * w / l
    assert c.compliance <= 4 * s * s * l + 23 * s * s * w * w / l
    assert c.perimeter_interior <= 125 / 2 * l * s


def test_strut_cell_certificate(strut_cell_default):
    rep = strut_cell_default.certify(n=5)
    assert rep.passed
    assert rep.max_interface_residual < 1e-10
    assert rep.max_divergence_residual < 1e-8


def test_strut_cell_inequality_sampled():
    rng = np.random.default_rng(8)
    for _ in range(8):
        F = rng.uniform(0.02, 0.5)
        w = rng.uniform(0.05, 0.5)
        l = w * rng.uniform(1.0, 4.0)
        eps = 10.0 ** rng.uniform(-6, -2)
        cell = C.build_strut_cell(F, w, l)
        bound = 32 * (F * w ** 4 / l + eps * math.sqrt(F) * w * l)
        assert cell.delta_j(eps) <= bound


def test_strut_param_domain():
    with pytest.raises(ParamDomain):
        C.build_strut_cell(0.6, 0.1, 0.2)   # F > 1/2
    with pytest.raises(ParamDomain):
        C.build_strut_cell(0.25, 0.3, 0.2)  # w > l
    with pytest.raises(ParamDomain):
        C.build_strut_cell(1e-9, 0.1, 0.2)  # collapsed struts


def test_strut_mirror_symmetry(strut_cell_default):
    """The cell geometry maps to itself under x -> -x and y -> -y."""
    cell = strut_cell_default
    rng = np.random.default_rng(9)
    lo = np.asarray(cell.field.box_lo)
    hi = np.asarray(cell.field.box_hi)
    pts = lo + rng.random((4000, 3)) * (hi - lo)
    m0 = cell.contains_material(pts)
    for D in (np.diag([-1.0, 1, 1]), np.diag([1, -1.0, 1])):
        assert np.array_equal(m0, cell.contains_material(pts @ D))


def test_strut_cell_energy_vs_monte_carlo(strut_cell_default):
    mc = mc_cell_energy(strut_cell_default, n=10 ** 6, seed=5)
    c = strut_cell_default.costs
    assert abs(mc["compliance"] - c.compliance) < 3 * mc["compliance_se"]
    assert abs(mc["volume"] - c.volume) < 3 * mc["volume_se"]


# ---------------------------------------------------------------------------
# strut boundary cell
# ---------------------------------------------------------------------------

def test_boundary_top_trace_uniform(strut_boundary_default):
    cell = strut_boundary_default
    F = 0.25
    _, _, T = cell.field.trace_on_plane(cell.height, n=32, side=-1)
    assert np.abs(T - [0, 0, F]).max() < 1e-10


def test_boundary_radial_divergence(strut_boundary_default):
    rep = strut_boundary_default.certify(n=4)
    assert rep.passed
    div = {c.name: c.residual for c in rep.divergences}
    assert div["O15"] < 1e-8


def test_boundary_delta_j_bound():
    rng = np.random.default_rng(10)
    for _ in range(4):
        F = rng.uniform(0.02, 0.5)
        w = rng.uniform(0.05, 0.4)
        eps = 10.0 ** rng.uniform(-6, -2)
        cell = C.build_strut_boundary_cell(F, w, qmc_m=16)
        assert cell.delta_j(eps) <= 2 * math.sqrt(3) * w ** 3 + eps * w * w
        assert cell.perimeter_cell() <= w * w
        assert cell.costs.compliance <= 3 * cell.costs.volume + 1e-12


def test_boundary_energy_vs_monte_carlo(strut_boundary_default):
    mc = mc_cell_energy(strut_boundary_default, n=10 ** 6, seed=6)
    c = strut_boundary_default.costs
    assert abs(mc["compliance"] - c.compliance) < 3 * mc["compliance_se"]


# ---------------------------------------------------------------------------
# planar cells
# ---------------------------------------------------------------------------

def test_planar_angle_and_bounds():
    F, w, l = 0.5, 0.1, 0.15
    cell = C.build_planar_cell(F, w, l)
    p = cell.params
    assert p["s"] == pytest.approx(F * w / 4)
    assert p["tan_alpha"] <= (1 - F) * w / l + 1e-12
    resid = p["s"] * p["tan_alpha"] ** 2 - l * p["tan_alpha"] \
        + (1 - F) * w / 2
    assert abs(resid) < 1e-12
    for eps in (1e-5, 1e-3):
        assert cell.delta_j(eps) <= 12 * ((1 - F) * w ** 3 / l + eps * l)


def test_planar_minimizing_height_bound():
    rng = np.random.default_rng(11)
    for _ in range(6):
        F = rng.uniform(0.08, 0.9)
        w = rng.uniform(0.02, 0.3)
        eps = 10.0 ** rng.uniform(-7, -3)
        l = (1 - F) ** 0.5 * w ** 1.5 * eps ** -0.5
        if (1 - F) * w > l:
            continue
        cell = C.build_planar_cell(F, w, l)
        assert cell.delta_j(eps) <= \
            24 * (1 - F) ** 0.5 * w ** 1.5 * eps ** 0.5 + 1e-15


def test_planar_certificate():
    rep = C.build_planar_cell(0.5, 0.1, 0.15).certify(n=6)
    assert rep.passed and rep.max_interface_residual < 1e-10


def test_planar_infeasible_geometry_raises():
    # large F with minimal height: the strut cannot reach the top corner
    with pytest.raises(ParamDomain):
        C.build_planar_cell(0.9, 0.1, (1 - 0.9) * 0.1)


def test_planar_boundary_cell():
    F, w = 0.5, 0.1
    cell = C.build_planar_boundary_cell(F, w)
    s = F * w / 4
    assert cell.height == pytest.approx(math.sqrt(2) * w / 2 - 2 * s)
    assert cell.costs.bottom_exposure == pytest.approx((1 - F) * w)
    rep = cell.certify(n=6)
    assert rep.passed
    div = {c.name: c.residual for c in rep.divergences}
    assert div["Q7"] < 1e-8
    for eps in (1e-5, 1e-3):
        assert cell.delta_j(eps) <= \
            3 * w * w / math.sqrt(2) + eps * (1 - F) * w


def test_planar_flux_conservation():
    cell = C.build_planar_cell(0.3, 0.08, 0.2)
    for zf in (0.15, 0.5, 0.85):
        assert cell.flux_fn(zf * cell.height) == pytest.approx(
            0.3 * 0.08, abs=1e-9)


# ---------------------------------------------------------------------------
# cone cell
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def cone_cell():
    return C.build_cone_cell(1 - 1 / 128, 0.1, 0.2, pde_n=128)


def test_radius_profile_values():
    assert float(C.RBAR2(0.5)) == pytest.approx(0.5)       # rbar(1/2)^2 = 1/2
    d = C.RBAR2.deriv()
    assert float(d(0.0)) == 0.0 and float(d(1.0)) == 0.0   # r'(0) = r'(l) = 0


def test_g2_identity(cone_cell):
    """Wall shear 16 q(z) / w equals 240 a^2/(l w) g3(z/l) on a grid."""
    a, w, l = cone_cell.params["a"], cone_cell.w, cone_cell.height
    ch = C._ChalicePieces(a, w, l)
    z = np.linspace(0, 1, 257) * l
    g2 = 16.0 * ch.q(z) / w
    ref = 240.0 * a * a / (l * w) * C.G3(z / l)
    assert np.max(np.abs(g2 - ref)) < 1e-12 * max(np.max(np.abs(ref)), 1e-30)


def test_cone_slice_fraction(cone_cell):
    F, w = cone_cell.F, cone_cell.w
    for z in np.linspace(0.01, 0.99, 21) * cone_cell.height:
        assert abs(cone_cell.slice_area_fn(z) / w ** 2 - F) < 1e-8


def test_cone_shear_equilibrium(cone_cell):
    """Small-cone wall shear force balances the central cone at every z."""
    a, w, l = cone_cell.params["a"], cone_cell.w, cone_cell.height
    ch = C._ChalicePieces(a, w, l)
    for z in np.linspace(0.05, 0.95, 9) * l:
        g2 = 16.0 * ch.q(z) / w
        small = 4.0 * (2 * math.pi * w / 16) * g2
        big = (2 * math.pi * w / 8) * (2 * g2)
        assert small == pytest.approx(big, rel=1e-12)


def test_cone_certificate_and_divergence(cone_cell):
    rep = cone_cell.certify(n=4)
    assert rep.passed
    for chk in rep.divergences:
        assert chk.residual < 1e-8
    names = {c.name: c for c in rep.interfaces}
    assert names["cone0-wall"].residual < 1e-10
    assert names["cone1-wall"].residual < 1e-10


def test_cone_shear_33_identically_zero(cone_cell):
    rng = np.random.default_rng(12)
    w, l = cone_cell.w, cone_cell.height
    pts = np.column_stack([rng.uniform(-w / 2, w / 2, 4000),
                           rng.uniform(-w / 2, w / 2, 4000),
                           rng.uniform(0, l, 4000)])
    S = cone_cell.stress_at(pts)
    mat = cone_cell.contains_material(pts)
    # sigma_33 on material is the unit vertical stress everywhere: the shear
    # corrector and radial relief contribute nothing to the 33 entry
    assert np.max(np.abs(S[mat, 2, 2] - 1.0)) < 1e-14


def test_cone_energy_vs_monte_carlo(cone_cell):
    mc = mc_cell_energy(cone_cell, n=10 ** 6, seed=7)
    c = cone_cell.costs
    assert abs(mc["compliance"] - c.compliance) < 3 * mc["compliance_se"]
    assert abs(mc["volume"] - c.volume) < 3 * mc["volume_se"]


def test_cone_param_domain():
    with pytest.raises(ParamDomain):
        C.build_cone_cell(0.9, 0.1, 0.2)  # 1 - F too large


# ---------------------------------------------------------------------------
# block cell
# ---------------------------------------------------------------------------

def test_block_cell_excess():
    for F, expect in ((1.0, 0.0), (0.9, 0.01)):
        cell = C.build_block_cell(F, 1.0, height=1.0)
        assert cell.delta_j(0.01) == pytest.approx(expect, abs=1e-14)
    cell = C.build_block_cell(0.5, 2.0, height=1.0)
    assert cell.delta_j(0.3) == pytest.approx((1 - 0.5) ** 2 * 4.0, rel=1e-14)


def test_cone_perimeter_constant_reported(cone_cell):
    """Lateral cone area scales like a * l; the fitted constant is modest."""
    a, l = cone_cell.params["a"], cone_cell.height
    Cfit = cone_cell.costs.perimeter_interior / (a * l)
    assert 1.0 < Cfit < 60.0
