import json

import numpy as np
import pytest

from bifurnet import oracle
from bifurnet.datagen import Branch, SolutionSample, locate_constant_pitchfork, samples_from_arrays, trace_branch
from bifurnet.problems import constant_state, ex1_turning, ex3_cubic, ex4_bvp, ex5_schnakenberg

# frozen reference values; regenerate with oracle.write_fixture only when the discretization changes
EX4_FOLDS = [3.559082940763767, 8.199019716708309, 11.518159274047152, 15.354138480922401]
EX5_DSTAR_B23_ETA50 = 44.40214437993035


def test_quadratic_curve_examples():
    assert oracle.quadratic_curve(0.0) == 0.0
    assert oracle.quadratic_curve(2.0) == 1.0
    assert oracle.quadratic_curve(-1.0) == 0.25
    b = np.linspace(-3, 3, 41)
    assert np.allclose(b**2 - 4 * oracle.quadratic_curve(b), 0.0)


def test_cubic_curve_examples():
    assert oracle.cubic_curve(0.0) == (0.0, 0.0)
    c, d = oracle.cubic_curve(3.0)
    assert (c, d) == pytest.approx((3.0, 1.0))
    # x^3 + 3x^2 + 3x + 1 = (x + 1)^3: value and two derivatives vanish at -1
    x = -1.0
    assert x**3 + 3 * x**2 + c * x + d == pytest.approx(0.0)
    assert 3 * x**2 + 6 * x + c == pytest.approx(0.0)
    assert 6 * x + 6 == 0.0


def test_cubic_discriminant_examples():
    assert oracle.cubic_discriminant(0, 0, 0) == 0.0
    assert oracle.cubic_discriminant(0, -3, 2) == pytest.approx(0.0, abs=1e-15)
    assert oracle.cubic_discriminant(0, 0, 1) == pytest.approx(0.25)
    # three distinct roots: (x-1)(x-2)(x-3)
    assert oracle.cubic_discriminant(-6, 11, -6) < 0


def test_cubic_discriminant_vanishes_on_curve(rng):
    b = rng.uniform(-3, 3, 100)
    assert np.max(np.abs(oracle.cubic_discriminant(b, *oracle.cubic_curve(b)))) < 1e-12


def test_sigma_min_scan_on_exact_ex1_path():
    p = np.linspace(2.0, 0.0, 201)
    br = Branch(samples_from_arrays(p, np.sqrt(p)))
    scan = oracle.sigma_min_scan(ex1_turning(), br)
    assert np.max(np.abs(scan.sigma_min - 2 * np.sqrt(p))) <= 1e-10
    assert len(scan.folds) == 1
    assert abs(scan.folds[0].p) < 1e-3


def test_sigma_min_scan_interior_minimum():
    # the path u = t through the fold of x^2 - p: p = t^2 turns back at t = 0
    t = np.linspace(-1, 1, 41)
    br = Branch(samples_from_arrays(t**2, t))
    scan = oracle.sigma_min_scan(ex1_turning(), br)
    assert len(scan.folds) == 1
    f = scan.folds[0]
    assert f.method == "vertex" and abs(f.p) < 1e-12
    assert f.bracket[0] <= f.p <= f.bracket[1]


def test_sigma_min_scan_trivial_ex4_branch_has_no_fold():
    p = np.linspace(0.0, 40.0, 81)
    br = Branch(samples_from_arrays(p, np.zeros((81, 5))))
    scan = oracle.sigma_min_scan(ex4_bvp(), br)
    assert scan.folds == []
    assert np.ptp(scan.sigma_min) == 0.0


def test_sigma_min_scan_empty():
    with pytest.raises(ValueError):
        oracle.sigma_min_scan(ex1_turning(), Branch([]))


def test_fixture_contents():
    doc = oracle.load_fixture()
    assert doc["meta"]["oracle_version"] == oracle.ORACLE_VERSION
    assert {"date", "args"} <= set(doc["meta"])
    assert oracle.ex4_fold_values(doc) == pytest.approx(EX4_FOLDS, abs=1e-9)
    for f in doc["ex4_folds"]:
        lo, hi = f["bracket"]
        assert lo <= f["p"] <= hi and hi - lo <= 1e-6
    node = next(g for g in doc["ex5_dstar"] if g["b"] == pytest.approx(2 / 3) and g["eta"] == 50.0)
    assert node["d_star"] == pytest.approx(EX5_DSTAR_B23_ETA50, abs=1e-6)
    assert len(doc["ex5_dstar"]) == 9


def test_fixture_dstar_matches_recomputation():
    for g in oracle.load_fixture()["ex5_dstar"]:
        assert oracle.schnakenberg_dstar(g["a"], g["b"], g["eta"]) == pytest.approx(g["d_star"], rel=1e-12)


def test_fixture_file_roundtrip(tmp_path):
    doc = oracle.load_fixture()
    path = tmp_path / "fx.json"
    oracle.write_fixture(path, doc)
    assert oracle.load_fixture(path) == json.loads(json.dumps(doc))


@pytest.mark.parametrize("b", oracle.EX5_FIXTURE_BS)
@pytest.mark.parametrize("eta", oracle.EX5_FIXTURE_ETAS)
def test_dstar_is_a_root(b, eta):
    a = 1 / 3
    d = oracle.schnakenberg_dstar(a, b, eta)
    mu = oracle.laplacian_modes()
    dets = np.abs(oracle.mode_determinant(a, b, eta, d, mu))
    scale = np.abs(eta * oracle.reaction_jacobian(a, b)).max() * mu.max() * d
    assert dets.min() <= 1e-9 * max(1.0, scale)
    # it is also the singular point of the full discrete Jacobian at the homogeneous state
    spec = ex5_schnakenberg(b=b, eta=eta)
    assert locate_constant_pitchfork(spec) == pytest.approx(d, abs=1e-9)


def test_dstar_none_without_turing_instability():
    # with b < a the activator self-inhibits (f_u < 0) and no mode destabilizes
    assert oracle.schnakenberg_dstar(1 / 3, 0.1, 50.0) is None
    with pytest.raises(ValueError):
        oracle.schnakenberg_dstar(-1.0, 0.5, 50.0)


def test_dstar_agrees_with_continuation_scan():
    a, b, eta = 1 / 3, 2 / 3, 50.0
    d_star = oracle.schnakenberg_dstar(a, b, eta)
    spec = ex5_schnakenberg(b=b, eta=eta, d_box=(1.0, 100.0))
    us, vs = constant_state(a, b)
    u0 = np.concatenate([np.full(11, us), np.full(11, vs)])
    br = trace_branch(spec, SolutionSample([20.0], u0), step=0.1, count=400, direction=1, fold_tol=1e-12)
    assert np.max(np.abs(br.u - u0)) < 1e-10
    scan = oracle.sigma_min_scan(spec, br)
    near = [f.p for f in scan.folds if abs(f.p - d_star) < 1.0]
    assert len(near) == 1
    assert near[0] == pytest.approx(d_star, abs=1e-3)


def test_curve_error_examples():
    grid = np.linspace(0, 1.5, 31)
    exact = oracle.OracleCurve(grid, grid**2 / 3)
    assert oracle.curve_error(exact, exact) == 0.0
    assert oracle.curve_error((grid, exact.values + 0.01), exact) == pytest.approx(0.015)
    with pytest.raises(ValueError):
        oracle.curve_error((grid[:-1], exact.values[:-1]), exact)


def test_curve_error_restricts_to_interval():
    grid = np.linspace(0, 2, 41)
    err = oracle.curve_error((grid, np.ones(41)), (grid, np.zeros(41)))
    assert err == pytest.approx(1.5)


def test_oracle_curve_validation():
    with pytest.raises(ValueError):
        oracle.OracleCurve([0, 1], [0.0, np.nan])
    with pytest.raises(ValueError):
        oracle.OracleCurve([0, 1], [0.0])
    with pytest.raises(ValueError):
        oracle.OracleCurve([0], [0.0], source="table")


def test_cubic_curve_points_have_triple_root():
    spec = ex3_cubic()
    for b in (0.3, 1.0, 1.5):
        c, d = oracle.cubic_curve(b)
        x = -b / 3
        assert abs(spec.residual([x], [b, c, d])[0]) < 1e-14
        assert abs(spec.jac_u([x], [b, c, d])[0, 0]) < 1e-14
