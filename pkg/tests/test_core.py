"""Grids, scenario configuration, profiles, norms, and operator plumbing."""

import numpy as np
import pytest

import kato_evolve as ke


def test_age_grid_basics():
    g = ke.AgeGrid(1.0, 100)
    assert g.step == pytest.approx(0.01)
    assert g.nodes.shape == (101,)
    assert g.index_of(0.25, "span") == 25
    assert g.index_of(0.0, "span") == 0


def test_age_grid_rejects_misaligned_values():
    g = ke.AgeGrid(1.0, 100)
    with pytest.raises(ke.GridAlignmentError):
        g.index_of(0.007, "span")
    with pytest.raises(ke.GridAlignmentError):
        g.index_of(-0.01, "span")


def test_time_grid_basics():
    tg = ke.TimeGrid(10.0, 1000)
    assert tg.horizon == 10.0
    assert tg.n_time == 1000
    assert tg.step == pytest.approx(0.01)


def test_preset_names_build():
    for name in ke.PRESET_NAMES:
        sc = ke.preset_scenario(name)
        assert sc.label == name
        assert sc.dim >= 1


def test_preset_override():
    sc = ke.preset_scenario("SCAL0", n_time=500)
    assert sc.time_grid.n_time == 500
    assert sc.age_grid.n_age == 100


def test_build_scenario_rejects_unknown_keys():
    with pytest.raises(ke.ConfigError):
        ke.build_scenario({"preset": "SCAL0", "bogus": 1})


def test_build_scenario_missing_field():
    with pytest.raises(ke.ConfigError, match="missing scenario field"):
        ke.build_scenario({"dim": 1})


def test_build_scenario_bad_operator_kind():
    cfg = {
        "dim": 1,
        "a_max": 1.0,
        "n_age": 10,
        "T": 1.0,
        "n_time": 10,
        "operator": {"kind": "nope"},
        "birth": {"kind": "zero"},
    }
    with pytest.raises(ke.ConfigError, match="operator.kind"):
        ke.build_scenario(cfg)


def test_build_scenario_rejects_stray_operator_fields():
    cfg = {
        "dim": 1,
        "a_max": 1.0,
        "n_age": 10,
        "T": 1.0,
        "n_time": 10,
        "operator": {"kind": "zero", "rate": 3},
        "birth": {"kind": "zero"},
    }
    with pytest.raises(ke.ConfigError, match="unknown operator field"):
        ke.build_scenario(cfg)


def test_unknown_preset():
    with pytest.raises(ke.ConfigError):
        ke.preset_scenario("NOPE")


def test_profiles_shapes_and_names(scal0):
    for name in ke.PROFILE_NAMES:
        phi = ke.make_profile(scal0, name)
        assert phi.values.shape == (101, 1)
    with pytest.raises(ke.ConfigError):
        ke.make_profile(scal0, "unknown")


def test_profile_values(scal0):
    ones = ke.make_profile(scal0, "ones")
    assert np.all(ones.values == 1.0)
    lin = ke.make_profile(scal0, "linear")
    assert np.allclose(lin.values[:, 0], scal0.age_grid.nodes)
    tilt = ke.make_profile(scal0, "tilted")
    expected = 1.0 + 0.005 * np.sin(np.pi * scal0.age_grid.nodes)
    assert np.allclose(tilt.values[:, 0], expected)


def test_smooth_random_is_seeded(diff1):
    a = ke.make_profile(diff1, "smooth_random", seed=3)
    b = ke.make_profile(diff1, "smooth_random", seed=3)
    c = ke.make_profile(diff1, "smooth_random", seed=4)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_state_norm_closed_forms(scal0, qdiff):
    # trapezoid of 1 over [0, 1] is exactly 1; of a it is exactly 1/2
    ones = ke.make_profile(scal0, "ones")
    assert ke.state_norm(scal0, ones) == pytest.approx(1.0, abs=1e-14)
    lin = ke.make_profile(scal0, "linear")
    assert ke.state_norm(scal0, lin) == pytest.approx(0.5, abs=1e-14)
    oq = ke.make_profile(qdiff, "ones")
    assert ke.state_norm(qdiff, oq) == pytest.approx(4.0, abs=1e-12)


def test_lp_age_norm_on_constant(qdiff):
    oq = ke.make_profile(qdiff, "ones")
    assert ke.lp_age_norm(qdiff, oq, 1.0) == pytest.approx(4.0, abs=1e-12)
    assert ke.lp_age_norm(qdiff, oq, 2.0) == pytest.approx(4.0, abs=1e-12)


def test_spatial_and_matrix_norms():
    assert ke.spatial_norm(np.array([3.0, 4.0]), "two") == pytest.approx(5.0)
    assert ke.matrix_norm(np.eye(3), "two") == pytest.approx(1.0)
    assert ke.matrix_norm(np.eye(3), "one") == pytest.approx(1.0)


def test_neumann_laplacian_structure():
    L = ke.neumann_laplacian(4)
    assert np.allclose(L, L.T)
    assert np.allclose(L.sum(axis=1), 0.0)
    assert np.array_equal(ke.neumann_laplacian(1), np.zeros((1, 1)))


def test_laplacian_kills_constants():
    L = ke.neumann_laplacian(8)
    assert np.allclose(L @ np.ones(8), 0.0)


def test_age_derivatives_on_linear(scal0):
    lin = ke.make_profile(scal0, "linear")
    up = ke.upwind_derivative(lin)
    cen = ke.centered_derivative(lin)
    assert np.allclose(up.values, 1.0, atol=1e-12)
    assert np.allclose(cen.values, 1.0, atol=1e-12)


def test_birth_balance_enforcement(scal0):
    phi = ke.make_profile(scal0, "age_bump")
    ok, _ = ke.check_birth_balance(scal0, phi)
    assert not ok
    fixed = ke.enforce_birth_balance(scal0, phi)
    ok, res = ke.check_birth_balance(scal0, fixed)
    assert ok
    assert res <= scal0.tolerances.membership
    again = ke.enforce_birth_balance(scal0, fixed)
    assert np.allclose(again.values, fixed.values, atol=1e-12)


def test_graph_norm_dominates_state_norm(scal0, diff1):
    for sc in (scal0, diff1):
        phi = ke.make_profile(sc, "tilted")
        assert ke.graph_state_norm(sc, phi) >= ke.state_norm(sc, phi)


def test_graph_norm_of_ones(scal0):
    ones = ke.make_profile(scal0, "ones")
    assert ke.graph_state_norm(scal0, ones) == pytest.approx(2.0, abs=1e-12)


def test_with_values_keeps_grid(scal0):
    phi = ke.make_profile(scal0, "ones")
    psi = phi.with_values(2.0 * phi.values)
    assert psi.grid == phi.grid
    assert np.all(psi.values == 2.0)


def test_refine_scenario(scal0):
    fine = ke.refine_scenario(scal0, 2)
    assert fine.age_grid.n_age == 200
    assert fine.time_grid.n_time == 2000
    assert fine.time_grid.horizon == scal0.time_grid.horizon
    assert fine.label == scal0.label
    with pytest.raises(ke.ValidationError):
        ke.refine_scenario(scal0, 0)


def test_operator_time_independent_flag(scal0, diff1):
    assert scal0.operator.time_independent
    assert not diff1.operator.time_independent


def test_tolerances_defaults(scal0):
    t = scal0.tolerances
    assert t.volterra == 1e-8
    assert t.semigroup == 1e-6
    assert t.membership == 1e-8
