"""Direct characteristics stepper used to cross-validate the evolution pipeline.

This solver never touches the renewal construction or the approximant
products.  It marches the transport equation on the aligned grid with a
first-order split: exact shift along characteristics, one implicit step of
the reaction/diffusion field nodewise, then the boundary node is refilled
from the birth quadrature of the profile as it stands (so the boundary
enters with a one-step lag, the main first-order error source).  Agreement
with the evolution pipeline under joint refinement is the strongest
end-to-end evidence the package produces.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    StateVector,
    ValidationError,
    birth_quadrature,
    refine_scenario,
    state_norm,
)
from .evolution import apply_evolution

@dataclass(frozen=True)
class OracleTrajectory:
    """States of the direct solver at multiples of the age step."""

    times: tuple
    states: tuple
    step: float

    @property
    def final(self):
        return self.states[-1]


def _node_solvers(scenario, t_new):
    """Stack of (I - step * A(t_new, a_i))^-1 over the age nodes."""
    g = scenario.age_grid
    step = g.step
    key = ("oracle_inv", t_new) if scenario.operator.time_independent else None
    if key is not None and key in scenario.caches:
        return scenario.caches[key]
    eye = np.eye(scenario.dim)
    mats = np.stack(
        [eye - step * scenario.operator(t_new, a) for a in g.nodes]
    )
    inv = np.linalg.inv(mats)
    if key is not None:
        scenario.caches[key] = inv
    return inv


def solve_direct(scenario, phi, t_end):
    """March the population equation directly up to t_end.

    One step per age step: shift every node up one slot (the boundary slot
    keeps its previous value), apply the implicit operator step at every
    node, then overwrite the boundary node with the birth quadrature of the
    profile.  Returns the states at all step multiples, starting from phi.
    """
    g = scenario.age_grid
    horizon = scenario.time_grid.horizon
    if not (np.isfinite(t_end) and 0 <= t_end <= horizon * (1 + 1e-12)):
        raise ValidationError(f"t_end must lie in [0, horizon], got {t_end!r}")
    n_steps = g.index_of(t_end, "end time")
    step = g.step
    time_independent = scenario.operator.time_independent
    solver = _node_solvers(scenario, 0.0) if time_independent else None
    values = np.array(phi.values, dtype=float)
    times = [0.0]
    states = [phi]
    for k in range(1, n_steps + 1):
        t_new = k * step
        shifted = np.empty_like(values)
        shifted[1:] = values[:-1]
        shifted[0] = values[0]
        inv = solver if time_independent else _node_solvers(scenario, t_new)
        values = np.einsum("nij,nj->ni", inv, shifted)
        values[0] = birth_quadrature(scenario, values)
        times.append(t_new)
        states.append(StateVector(g, values.copy()))
    return OracleTrajectory(tuple(times), tuple(states), step)


@dataclass(frozen=True)
class CompareRow:
    """One refinement level of the oracle/evolution comparison."""

    delta: float
    discrepancy: float
    order: float


def _resample(scenario, phi):
    """Linear resampling of a profile onto a scenario's (finer) age grid."""
    g = scenario.age_grid
    if phi.grid.n_age == g.n_age:
        return StateVector(g, phi.values)
    values = np.column_stack(
        [np.interp(g.nodes, phi.grid.nodes, phi.values[:, j]) for j in range(phi.values.shape[1])]
    )
    return StateVector(g, values)


def compare(scenario, phi, t_end, refinements, tol=1e-6):
    """Discrepancy table between the direct solver and the evolution system.

    Runs both pipelines on the scenario and on dyadically refined copies,
    resampling the profile each time, and reports (age step, state-norm
    discrepancy at t_end, observed order between consecutive levels).  The
    evolution tolerance is tightened with the grid so the table reflects
    the direct solver's first-order error.
    """
    if refinements < 2:
        raise ValidationError("refinements must be at least 2")
    rows = []
    prev = None
    for r in range(refinements):
        scen = scenario if r == 0 else refine_scenario(scenario, 2**r)
        fine_phi = _resample(scen, phi)
        direct = solve_direct(scen, fine_phi, t_end).final
        evolved = apply_evolution(scen, t_end, 0.0, fine_phi, tol=tol * 0.5**r).value
        gap = state_norm(
            scen, direct.with_values(direct.values - evolved.values)
        )
        if prev is not None and prev > 0 and gap > 0:
            order = math.log2(prev / gap)
        else:
            order = float("nan")
        rows.append(CompareRow(scen.age_grid.step, gap, order))
        prev = gap
    return rows
