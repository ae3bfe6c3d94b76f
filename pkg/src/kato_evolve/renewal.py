"""Discrete renewal (birth trajectory) solver.

For a frozen time t and initial profile phi, the newborn flux B(s) solves a
Volterra equation: the birth integral of the evolved profile, where ages
below s carry propagated newborn values U_t(a, 0) B(s - a) and ages above s
carry transported initial data U_t(a, a - s) phi(a - s).

Discretization: one composite trapezoid quadrature over the full age
interval, applied to the two-branch integrand, with the diagonal node a = s
assigned to the newborn branch.  Writing the equation this way (rather than
as two separate trapezoid sums meeting at the diagonal) makes the discrete
birth trajectory EXACTLY the birth integral of the discrete evolved profile,
so the consistency residual is limited only by the per-step linear solve.
The unknown B(s_k) enters through the a = 0 quadrature endpoint where
U_t(0, 0) is the identity, leaving a d x d solve per step with matrix
I - (h/2) b(0).

The march is first order at the branch seam for incompatible data and second
order for balanced profiles; both refine under grid halving.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .core import (
    StateVector,
    ValidationError,
    apply_generator,
    birth_quadrature,
    spatial_norm,
)
from .propagator import chain_matrices, step_matrix

__all__ = [
    "BirthTrajectory",
    "solve_birth",
    "birth_identity_residual",
    "birth_derivative_residual",
    "transported_rows",
    "branch_values",
]


@dataclass(frozen=True)
class BirthTrajectory:
    """Newborn flux values B(k * step) for k = 0 .. K, shape (K+1, d)."""

    frozen_time: float
    step: float
    values: np.ndarray

    @property
    def n_steps(self):
        return self.values.shape[0] - 1

    def at_index(self, k):
        return self.values[k]


def _boundary_solver(scenario):
    """LU factorization of I - (h/2) b(0), cached on the scenario."""
    key = "boundary_lu"
    cached = scenario.caches.get(key)
    if cached is not None:
        return cached
    h = scenario.age_grid.step
    b0 = scenario.birth_matrices()[0]
    mat = np.eye(scenario.dim) - 0.5 * h * b0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            lu = lu_factor(mat)
        except np.linalg.LinAlgError as exc:
            raise ValidationError(
                "boundary system is singular: step * b(0) / 2 has eigenvalue 1; "
                "refine the age grid or rescale the birth kernel"
            ) from exc
    tiny = np.finfo(float).eps * max(1.0, float(np.max(np.abs(mat))))
    if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) < tiny:
        raise ValidationError(
            "boundary system is singular: step * b(0) / 2 has eigenvalue 1; "
            "refine the age grid or rescale the birth kernel"
        )
    scenario.caches[key] = lu
    return lu


def transported_rows(scenario, t, phi_values, level):
    """Rows U_t(a_{j+level}, a_j) phi(a_j) for j = 0 .. n_age - level.

    The recurrence applies one-cell step maps in ascending level order; the
    renewal march below uses the identical update, so recomputed rows agree
    bitwise with the march's internal values.
    """
    n = scenario.age_grid.n_age
    if level > n:
        raise ValidationError("transport level exceeds the age grid")
    rows = np.array(phi_values, dtype=float)
    for k in range(1, level + 1):
        for j in range(n - k + 1):
            rows[j] = step_matrix(scenario, t, j + k - 1) @ rows[j]
    return rows[: n - level + 1]


def _march(scenario, t, phi_values, n_steps, warm=None):
    """Run the renewal march for ``n_steps`` steps, optionally extending.

    ``warm`` may hold a previous value array with at least n_age steps; past
    that point the transported-initial-data branch is empty and the march
    continues from newborn history alone.
    """
    g = scenario.age_grid
    n, h = g.n_age, g.step
    w = g.weights
    bmats = scenario.birth_matrices()
    chain = chain_matrices(scenario, t)
    lu = _boundary_solver(scenario)
    d = scenario.dim

    if warm is not None and warm.shape[0] - 1 >= n:
        start = warm.shape[0]
        B = np.empty((n_steps + 1, d))
        B[:start] = warm
    else:
        start = 1
        B = np.empty((n_steps + 1, d))
        B[0] = birth_quadrature(scenario, phi_values)
    if n_steps + 1 <= start:
        return B[: n_steps + 1]

    moving = np.array(phi_values, dtype=float)  # row j: transported phi(a_j)
    branch = np.empty((n + 1, d))
    for k in range(start if start > n else 1, n_steps + 1):
        if k <= n:
            for j in range(n - k + 1):
                moving[j] = step_matrix(scenario, t, j + k - 1) @ moving[j]
        if k < start:
            continue
        branch[0] = 0.0  # slot of the implicit unknown
        top = min(k, n)
        for i in range(1, top + 1):
            branch[i] = chain[i] @ B[k - i]
        for i in range(k + 1, n + 1):
            branch[i] = moving[i - k]
        rhs = birth_quadrature(scenario, branch)
        B[k] = lu_solve(lu, rhs)
    return B


def solve_birth(scenario, t, phi, s_max):
    """Newborn flux trajectory for initial profile phi at frozen time t.

    Trajectories are cached per (frozen time, profile) and extended in place
    when a longer horizon is requested later.  ``s_max`` must be node
    aligned and below the scenario's configured trajectory cap.
    """
    g = scenario.age_grid
    if s_max < 0:
        raise ValidationError("s_max must be nonnegative")
    if s_max > scenario.s_max * (1 + 1e-12):
        raise ValidationError(
            f"s_max = {s_max!r} exceeds the configured cap {scenario.s_max!r} "
            "(raise s_max_factor in the scenario)"
        )
    n_steps = g.index_of(s_max, "trajectory horizon")
    key = ("birth", t, phi.values.tobytes())
    cached = scenario.caches.get(key)
    if cached is not None and cached.n_steps >= n_steps:
        if cached.n_steps == n_steps:
            return cached
        return BirthTrajectory(t, g.step, cached.values[: n_steps + 1])
    warm = cached.values if cached is not None else None
    values = _march(scenario, t, phi.values, n_steps, warm=warm)
    values.flags.writeable = False
    traj = BirthTrajectory(t, g.step, values)
    scenario.caches[key] = traj
    return traj


def branch_values(scenario, t, phi, s):
    """Node values of the evolved profile after elapsed span s (aligned).

    Ages at or below s carry propagated newborn values, ages above s carry
    transported initial data; s = 0 returns the profile unchanged.
    """
    g = scenario.age_grid
    m = g.index_of(s, "elapsed span")
    if m == 0:
        return np.array(phi.values, dtype=float)
    traj = solve_birth(scenario, t, phi, s)
    chain = chain_matrices(scenario, t)
    n = g.n_age
    out = np.empty((n + 1, scenario.dim))
    top = min(m, n)
    for i in range(top + 1):
        out[i] = chain[i] @ traj.values[m - i]
    if m < n:
        moving = transported_rows(scenario, t, phi.values, m)
        for i in range(m + 1, n + 1):
            out[i] = moving[i - m]
    return out


def birth_identity_residual(scenario, t, phi, s):
    """Gap between B(s) and the birth integral of the evolved profile.

    Both sides are assembled from the same cached discrete objects through
    the same quadrature helper, so the residual measures only the per-step
    boundary solve.
    """
    g = scenario.age_grid
    m = g.index_of(s, "elapsed span")
    traj = solve_birth(scenario, t, phi, s)
    values = branch_values(scenario, t, phi, s)
    integral = birth_quadrature(scenario, values)
    return spatial_norm(traj.values[m] - integral, scenario.norm)


def birth_derivative_residual(scenario, t, phi, s, dstep=None):
    """Residual of the derivative identity for the birth trajectory.

    The s-derivative of the newborn flux of phi equals the newborn flux of
    the generator applied to phi.  The left side uses a centered difference
    with span ``dstep`` (default one grid step); the identity requires a
    balanced profile and the residual decays first order in the grid.
    """
    g = scenario.age_grid
    h = g.step
    if dstep is None:
        dstep = h
    k = g.index_of(dstep, "derivative step")
    if k < 1:
        raise ValidationError("derivative step must be at least one grid step")
    m = g.index_of(s, "elapsed span")
    if m - k < 0:
        raise ValidationError("derivative stencil leaves the trajectory")
    traj = solve_birth(scenario, t, phi, s + k * h)
    lhs = (traj.values[m + k] - traj.values[m - k]) / (2 * k * h)
    gen_traj = solve_birth(scenario, t, apply_generator(scenario, t, phi), s)
    return spatial_norm(lhs - gen_traj.values[m], scenario.norm)
