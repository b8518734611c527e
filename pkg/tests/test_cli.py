import json
import subprocess
import sys

import numpy as np
import pytest

from microstruct.cli import (build_report, fit_loglog, main, make_plan,
                             rows_to_csv, run_sweep)
from microstruct.errors import TooFewPoints


def run_cli(args):
    proc = subprocess.run([sys.executable, "-m", "microstruct.cli"] + args,
                          capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


def test_build_block_unit_load(tmp_path):
    out = tmp_path / "report.json"
    code = main(["build", "--regime", "block", "--F", "1.0",
                 "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["cost"]["excess"] == pytest.approx(0.0, abs=1e-12)
    assert rep["schema"] == 1


def test_build_small_with_obj(tmp_path):
    out = tmp_path / "report.json"
    obj = tmp_path / "geom.obj"
    code = main(["build", "--regime", "small", "--F", "0.25",
                 "--eps", "1e-4", "--export-obj", str(obj),
                 "--out", str(out)])
    assert code == 0
    text = obj.read_text()
    assert text.startswith("#")
    assert "o layer1_strut_0" in text
    rep = json.loads(out.read_text())
    assert rep["certificate"]["passed"]
    assert rep["lower_bounds"]["passed"]


def test_param_domain_exit_code():
    code, _, err = run_cli(["build", "--regime", "small", "--F", "0.8"])
    assert code == 2
    assert "error" in err


def test_empty_grid_usage_error(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"F_grid": [], "eps_grid": [1e-4]}))
    code, _, err = run_cli(["sweep", "--config", str(cfg)])
    assert code == 64


def test_sweep_rows_and_monotonicity(tmp_path):
    rows = run_sweep({"F_grid": [0.25],
                      "eps_grid": [1e-4, 3e-5, 1e-5],
                      "regime": "small", "ell": 1.0})
    assert len(rows) == 3
    assert all(r["status"] == "ok" for r in rows)
    assert all(r["certificate"] == "pass" for r in rows)
    djs = [r["delta_j"] for r in rows]
    assert djs[0] > djs[1] > djs[2]  # monotone in eps
    # every certified row satisfies its lower-bound estimators: perimeter
    # bounds against the full-perimeter excess, the rest against delta_j
    for r in rows:
        if r["certificate"] != "pass":
            continue
        dj_full = (r["compliance"] + r["volume"]
                   + r["eps"] * r["perimeter_full"] - r["j0_star"])
        assert r["lb_boundary_faces"] <= dj_full + 1e-8
        assert r["lb_exterior"] <= dj_full + 1e-8
        if r.get("lb_interior") is not None:
            assert r["lb_interior"] <= r["delta_j"] + 1e-8
        assert r["lb_slice"] <= r["delta_j"] + 1e-8
    csv_text = rows_to_csv(rows)
    assert csv_text.splitlines()[0].startswith("schema,regime,F,eps")


def test_sweep_auto_labels():
    rows = run_sweep({"F_grid": [1e-4, 0.25], "eps_grid": [1e-6],
                      "regime": "auto", "ell": 1.0})
    labels = {round(r["F"], 6): r["label"] for r in rows}
    assert labels[1e-4] == "extremely-small"
    assert labels[0.25] == "small"


def test_sweep_deterministic():
    cfg = {"F_grid": [0.25], "eps_grid": [1e-4, 1e-5], "regime": "small"}
    a = rows_to_csv(run_sweep(cfg))
    b = rows_to_csv(run_sweep(cfg))
    assert a == b


def test_fit_slope_two_thirds():
    eps = [1e-4, 3e-5, 1e-5, 3e-6]
    rows = run_sweep({"F_grid": [0.25], "eps_grid": eps, "regime": "small"})
    fit = fit_loglog([r["eps"] for r in rows], [r["delta_j"] for r in rows])
    assert abs(fit["slope"] - 2.0 / 3.0) < 0.08
    assert fit["r_squared"] > 0.999


def test_fit_block_slope_two():
    # excess (1-F)^2: slope 2 against (1 - F)
    one_minus_F = np.array([0.05, 0.1, 0.2, 0.4])
    djs = one_minus_F ** 2
    fit = fit_loglog(one_minus_F, djs)
    assert fit["slope"] == pytest.approx(2.0, abs=1e-12)


def test_fit_constant_slope_zero():
    fit = fit_loglog([1.0, 2.0, 4.0, 8.0], [3.0, 3.0, 3.0, 3.0])
    assert fit["slope"] == pytest.approx(0.0, abs=1e-12)


def test_fit_too_few_points():
    with pytest.raises(TooFewPoints):
        fit_loglog([1.0, 2.0], [1.0, 2.0])


def test_fit_subcommand_roundtrip(tmp_path):
    rows = run_sweep({"F_grid": [0.25], "eps_grid": [1e-4, 3e-5, 1e-5],
                      "regime": "small"})
    table = tmp_path / "rows.csv"
    table.write_text(rows_to_csv(rows))
    out = tmp_path / "fit.json"
    code = main(["fit", "--table", str(table), "--x", "eps",
                 "--y", "delta_j", "--out", str(out)])
    assert code == 0
    fit = json.loads(out.read_text())
    assert abs(fit["slope"] - 2 / 3) < 0.08


def test_make_plan_auto_routing():
    assert make_plan("auto", 0.25, 1e-5, 1.0).regime == "small"
    assert make_plan("auto", 1.0 - 1.0 / 256.0, 1e-7, 1.0,
                     pde_n=128).regime == "large"
    assert make_plan("auto", 0.999999, 1e-2, 1.0).regime == "block"


def test_certify_subcommand(tmp_path):
    out = tmp_path / "cert.json"
    code = main(["certify", "--regime", "intermediate", "--F", "0.5",
                 "--eps", "1e-4", "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["certificate"]["passed"]


def test_allow_out_of_theorem_flag(tmp_path):
    out = tmp_path / "over.json"
    code = main(["build", "--regime", "block", "--F", "1.2", "--eps", "0.01",
                 "--allow-out-of-theorem", "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["label"] == "out-of-theorem"
    # overload block: excess (1-F)^2 still reported from the cost identity
    assert rep["cost"]["excess"] == pytest.approx((1 - 1.2) ** 2, abs=1e-12)


def test_large_regime_report_has_truncated_table():
    rep, _ = build_report("large", 1 - 1 / 128, 1e-6, 1.0, pde_n=128,
                          certify=False, wasserstein=False)
    assert rep["plan"]["slab_height"] > 0
    assert len(rep["plan"]["layers"]) >= 4
    assert rep["label"] == "large"
