"""Direct characteristics stepper and its agreement with the main pipeline."""

import math

import numpy as np
import pytest

import kato_evolve as ke


def decay_scenario(n_age=200):
    return ke.build_scenario(
        {
            "dim": 1,
            "a_max": 2.0,
            "n_age": n_age,
            "T": 1.0,
            "n_time": n_age // 2,
            "operator": {"kind": "scalar_mortality", "mu": 1.0},
            "birth": {"kind": "zero"},
            "norm": "one",
        }
    )


def test_trajectory_shape(scal0):
    phi = ke.make_profile(scal0, "ones")
    traj = ke.solve_direct(scal0, phi, 0.1)
    assert len(traj.times) == 11
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(0.1)
    assert traj.step == scal0.age_grid.step
    assert traj.final is traj.states[-1]
    assert traj.states[0] is phi


def test_pure_transport_with_empty_boundary_is_exact():
    # zero operator and zero birth: the march is an exact shift feeding
    # zeros in at age zero, so the discrete solution equals phi(a - t)
    # cut off below the front, with no error at all
    sc = ke.build_scenario(
        {
            "dim": 1,
            "a_max": 1.0,
            "n_age": 50,
            "T": 1.0,
            "n_time": 50,
            "operator": {"kind": "zero"},
            "birth": {"kind": "zero"},
            "norm": "one",
        }
    )
    phi = ke.make_profile(sc, "linear")
    k = 20
    traj = ke.solve_direct(sc, phi, k * sc.age_grid.step)
    got = traj.final.values
    assert np.all(got[:k] == 0.0)
    assert np.array_equal(got[k:], phi.values[: len(got) - k])


def test_mortality_decay_near_closed_form():
    # behind the front the profile is e^{-t}; the implicit step gives
    # (1 + h)^{-k}, a first order gap that halves with the grid
    errs = []
    for n_age in (200, 400):
        sc = decay_scenario(n_age)
        phi = ke.make_profile(sc, "ones")
        traj = ke.solve_direct(sc, phi, 1.0)
        k = sc.age_grid.index_of(1.0, "front")
        exact = np.zeros_like(phi.values)
        exact[k:] = math.exp(-1.0)
        diff = traj.final.with_values(traj.final.values - exact)
        errs.append(ke.state_norm(sc, diff))
    assert errs[0] <= 2e-3
    assert 1.7 <= errs[0] / errs[1] <= 2.3


def test_solve_direct_validation(scal0):
    phi = ke.make_profile(scal0, "ones")
    with pytest.raises(ke.ValidationError):
        ke.solve_direct(scal0, phi, -0.1)
    with pytest.raises(ke.ValidationError):
        ke.solve_direct(scal0, phi, scal0.time_grid.horizon + 1.0)
    with pytest.raises(ke.GridAlignmentError):
        ke.solve_direct(scal0, phi, 0.005)


def test_time_independent_solver_is_cached(scal0):
    phi = ke.make_profile(scal0, "ones")
    ke.solve_direct(scal0, phi, 0.05)
    assert ("oracle_inv", 0.0) in scal0.caches


def test_compare_discrepancy_shrinks_first_order(scal0):
    phi = ke.make_profile(scal0, "age_bump")
    rows = ke.compare(scal0, phi, 1.0, refinements=3)
    assert len(rows) == 3
    assert math.isnan(rows[0].order)
    for prev, row in zip(rows, rows[1:]):
        assert row.delta == pytest.approx(prev.delta / 2)
        assert row.discrepancy < prev.discrepancy
        assert row.order >= 0.8


def test_compare_validation(scal0):
    phi = ke.make_profile(scal0, "ones")
    with pytest.raises(ke.ValidationError):
        ke.compare(scal0, phi, 1.0, refinements=1)
