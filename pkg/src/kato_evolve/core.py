"""Core types and discrete norms for age-structured population states.

A state is a profile over an age interval [0, a_max], sampled on a uniform
node grid, with values in R^d.  The continuous object behind it is an
L1-in-age function with values in a d-dimensional spatial space; every norm
here is a composite-trapezoid discretization of the corresponding integral
norm.  Scenarios bundle the grids with the age/time dependent generator
matrix field A(t, a), the birth (renewal) kernel b(a), a reference operator
used for graph norms, and tolerance settings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ConfigError",
    "ValidationError",
    "GridAlignmentError",
    "ConvergenceError",
    "AgeGrid",
    "TimeGrid",
    "StateVector",
    "OperatorField",
    "BirthKernel",
    "Tolerances",
    "StabilityConstants",
    "Scenario",
    "spatial_norm",
    "matrix_norm",
    "graph_pair_norm",
    "state_norm",
    "graph_state_norm",
    "regularity_norm",
    "lp_age_norm",
    "upwind_derivative",
    "centered_derivative",
    "birth_quadrature",
    "check_birth_balance",
    "neumann_laplacian",
    "build_scenario",
    "preset_scenario",
    "refine_scenario",
    "make_profile",
    "PRESET_NAMES",
    "PROFILE_NAMES",
]


class ConfigError(ValueError):
    """Malformed scenario configuration (unknown or unparseable field)."""


class ValidationError(ValueError):
    """Structurally valid configuration with inconsistent values."""


class GridAlignmentError(ValueError):
    """An age, duration, or time does not sit on the required grid."""


class ConvergenceError(RuntimeError):
    """An iterative construction failed to reach its tolerance.

    Carries the observed gap history in ``history`` for diagnostics.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = tuple(history) if history is not None else ()


def _align_index(value, step, count, what):
    """Map ``value`` to its node index on a uniform grid, or raise."""
    if not np.isfinite(value):
        raise GridAlignmentError(f"{what} must be finite, got {value!r}")
    k = int(round(value / step))
    if abs(value - k * step) > 1e-9 * max(1.0, abs(value)):
        raise GridAlignmentError(
            f"{what} = {value!r} is not aligned to the grid step {step!r}; "
            f"nearest node is {k * step!r}"
        )
    if k < 0 or k > count:
        raise GridAlignmentError(
            f"{what} = {value!r} lies outside the grid [0, {count * step!r}]"
        )
    return k


@dataclass(frozen=True)
class AgeGrid:
    """Uniform node grid on [0, a_max] with n_age cells (n_age + 1 nodes)."""

    a_max: float
    n_age: int

    def __post_init__(self):
        if not (np.isfinite(self.a_max) and self.a_max > 0):
            raise ValidationError("a_max must be finite and positive")
        if self.n_age < 1:
            raise ValidationError("n_age must be at least 1")

    @property
    def step(self):
        return self.a_max / self.n_age

    @property
    def nodes(self):
        nodes = np.linspace(0.0, self.a_max, self.n_age + 1)
        nodes.flags.writeable = False
        return nodes

    @property
    def weights(self):
        """Composite trapezoid weights (end nodes carry 1/2)."""
        w = np.ones(self.n_age + 1)
        w[0] = w[-1] = 0.5
        w.flags.writeable = False
        return w

    def index_of(self, value, what="age offset"):
        return _align_index(value, self.step, 10**9, what)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform node grid on [0, horizon] with n_time cells."""

    horizon: float
    n_time: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValidationError("horizon must be finite and positive")
        if self.n_time < 1:
            raise ValidationError("n_time must be at least 1")

    @property
    def step(self):
        return self.horizon / self.n_time

    @property
    def nodes(self):
        nodes = np.linspace(0.0, self.horizon, self.n_time + 1)
        nodes.flags.writeable = False
        return nodes


def _freeze(values):
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class StateVector:
    """Age profile sampled on grid nodes; ``values`` has shape (n_age+1, d).

    Arrays are frozen on construction.  All operations treat states as
    immutable and return new instances.
    """

    grid: AgeGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape[0] != self.grid.n_age + 1:
            raise ValidationError(
                f"state has {arr.shape[0]} rows, grid has {self.grid.n_age + 1} nodes"
            )
        if not arr.flags.writeable:
            object.__setattr__(self, "values", arr)
        else:
            object.__setattr__(self, "values", _freeze(arr))

    @property
    def dim(self):
        return self.values.shape[1]

    def with_values(self, values):
        return StateVector(self.grid, values)


@dataclass(frozen=True)
class OperatorField:
    """Age/time dependent generator matrix field A(t, a), d x d per node.

    ``evaluate(t, a)`` must be deterministic.  ``lipschitz_t`` is an optional
    declared Lipschitz constant of t -> A(t, .) in the operator norm;
    0.0 marks a field with no time dependence, which several solvers use to
    skip refreshing cached step matrices.
    """

    dim: int
    evaluate: object
    lipschitz_t: float | None = None
    holder_age: tuple | None = None
    label: str = "operator"

    def __call__(self, t, a):
        mat = np.asarray(self.evaluate(t, a), dtype=float)
        if mat.shape != (self.dim, self.dim):
            raise ValidationError(
                f"operator field returned shape {mat.shape}, expected {(self.dim, self.dim)}"
            )
        return mat

    @property
    def time_independent(self):
        return self.lipschitz_t == 0.0


@dataclass(frozen=True)
class BirthKernel:
    """Birth kernel a -> b(a), an entrywise nonnegative d x d matrix."""

    dim: int
    evaluate: object
    label: str = "birth"

    def __call__(self, a):
        mat = np.asarray(self.evaluate(a), dtype=float)
        if mat.shape != (self.dim, self.dim):
            raise ValidationError(
                f"birth kernel returned shape {mat.shape}, expected {(self.dim, self.dim)}"
            )
        return mat


@dataclass(frozen=True)
class Tolerances:
    volterra: float = 1e-8
    cocycle: float = 1e-6
    membership: float = 1e-8
    semigroup: float = 1e-6
    composition: float = 1e-8

    def __post_init__(self):
        for name in ("volterra", "cocycle", "membership", "semigroup", "composition"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"tolerance {name} must be positive")


@dataclass(frozen=True)
class StabilityConstants:
    """Bound constants for the propagator and its products.

    ``m_frozen``/``omega_frozen`` bound a single frozen-time propagator:
    norm(U(a, s)) <= m_frozen * exp(omega_frozen * (a - s)).  ``m0``/``omega0``
    and ``m1``/``omega1`` bound arbitrary finite products of propagators taken
    at nondecreasing times, in the base spatial norm and in the graph norm
    against the reference operator.  ``source`` records whether the values
    were estimated from samples or declared by the user.
    """

    m_frozen: float
    omega_frozen: float
    m0: float
    omega0: float
    m1: float
    omega1: float
    source: str = "estimated"

    def __post_init__(self):
        for name in ("m_frozen", "m0", "m1"):
            if getattr(self, name) < 1.0:
                raise ValidationError(f"{name} must be >= 1")
        if self.source not in ("estimated", "declared"):
            raise ValidationError("source must be 'estimated' or 'declared'")


_NORM_TAGS = ("one", "two", "max")


def spatial_norm(v, tag):
    """Vector norm on R^d selected by tag: 'one', 'two', or 'max'."""
    v = np.asarray(v, dtype=float)
    if tag == "one":
        return float(np.sum(np.abs(v)))
    if tag == "two":
        return float(np.linalg.norm(v))
    if tag == "max":
        return float(np.max(np.abs(v))) if v.size else 0.0
    raise ValidationError(f"unknown spatial norm tag {tag!r}")


def matrix_norm(mat, tag):
    """Induced matrix norm matching :func:`spatial_norm`."""
    mat = np.asarray(mat, dtype=float)
    if tag == "one":
        return float(np.max(np.sum(np.abs(mat), axis=0)))
    if tag == "two":
        return float(np.linalg.norm(mat, 2))
    if tag == "max":
        return float(np.max(np.sum(np.abs(mat), axis=1)))
    raise ValidationError(f"unknown spatial norm tag {tag!r}")


def graph_pair_norm(v, ref, tag):
    """Graph norm |v| + |ref v| of a spatial vector against a reference matrix."""
    return spatial_norm(v, tag) + spatial_norm(ref @ v, tag)


@dataclass(frozen=True)
class Scenario:
    """Immutable bundle of grids, operators, and tolerances.

    ``caches`` holds memoized step matrices, propagator chains, and birth
    trajectories; it is an internal detail and does not participate in
    equality.  All public operations on a scenario are pure functions of the
    visible fields.
    """

    age_grid: AgeGrid
    time_grid: TimeGrid
    dim: int
    operator: OperatorField
    birth: BirthKernel
    reference_operator: np.ndarray
    norm: str = "two"
    integrator_order: int = 2
    tolerances: Tolerances = field(default_factory=Tolerances)
    s_max_factor: float = 10.0
    constants: StabilityConstants | None = None
    label: str = "custom"
    config: tuple = ()
    caches: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.norm not in _NORM_TAGS:
            raise ValidationError(f"spatial norm must be one of {_NORM_TAGS}")
        if self.integrator_order not in (1, 2):
            raise ValidationError("integrator_order must be 1 or 2")
        if self.dim < 1:
            raise ValidationError("dim must be at least 1")
        ref = np.asarray(self.reference_operator, dtype=float)
        if ref.shape != (self.dim, self.dim):
            raise ValidationError(
                f"reference operator has shape {ref.shape}, expected {(self.dim, self.dim)}"
            )
        object.__setattr__(self, "reference_operator", _freeze(ref))
        if self.s_max_factor <= 0:
            raise ValidationError("s_max_factor must be positive")
        # Time steps must land on age nodes so transport stays node-aligned.
        self.age_grid.index_of(self.time_grid.step, "time grid step")
        bmats = self.birth_matrices()
        if np.any(bmats < 0):
            raise ValidationError("birth kernel must be entrywise nonnegative on the grid")

    # -- sampled kernels ---------------------------------------------------

    def birth_matrices(self):
        """b(a_i) for every age node, shape (n_age+1, d, d); cached."""
        key = "birth_matrices"
        if key not in self.caches:
            mats = np.stack([self.birth(a) for a in self.age_grid.nodes])
            mats.flags.writeable = False
            self.caches[key] = mats
        return self.caches[key]

    def birth_norm(self, ell):
        """Max over age nodes of the induced norm of b(a), base or graph."""
        key = ("birth_norm", ell)
        if key not in self.caches:
            mats = self.birth_matrices()
            if ell == 0:
                val = max(matrix_norm(m, self.norm) for m in mats)
            elif ell == 1:
                ref = self.reference_operator
                val = max(_graph_operator_norm(m, ref, ref, self.norm) for m in mats)
            else:
                raise ValidationError("ell must be 0 or 1")
            self.caches[key] = float(val)
        return self.caches[key]

    @property
    def s_max(self):
        return self.s_max_factor * self.age_grid.a_max

    def zero_state(self):
        return StateVector(self.age_grid, np.zeros((self.age_grid.n_age + 1, self.dim)))


def _graph_operator_norm(mat, ref_out, ref_in, tag, extra=()):
    """Sampled induced norm between graph-normed spaces.

    Estimates sup (|Cv| + |ref_out C v|) / (|v| + |ref_in v|) over a
    deterministic candidate set: basis vectors, the constant vector, top
    singular directions, and ref_in eigenvectors when symmetric.  Pass
    ``ref_out=None`` for a plain target norm.  This is a sampled quantity;
    for the matrix families shipped here the candidates contain the extremal
    directions.
    """
    d = mat.shape[0]
    cands = [np.ones(d)]
    cands.extend(np.eye(d))
    try:
        _, _, vt = np.linalg.svd(mat)
        cands.extend(vt[: min(4, d)])
    except np.linalg.LinAlgError:
        pass
    if ref_in is not None and np.allclose(ref_in, ref_in.T):
        try:
            _, vecs = np.linalg.eigh(ref_in)
            cands.extend(vecs.T[: min(4, d)])
            cands.extend(vecs.T[-min(4, d):])
        except np.linalg.LinAlgError:
            pass
    cands.extend(extra)
    best = 0.0
    for v in cands:
        v = np.asarray(v, dtype=float)
        denom = spatial_norm(v, tag)
        if ref_in is not None:
            denom += spatial_norm(ref_in @ v, tag)
        if denom <= 0:
            continue
        num = spatial_norm(mat @ v, tag)
        if ref_out is not None:
            num += spatial_norm(ref_out @ (mat @ v), tag)
        best = max(best, num / denom)
    return best


def graph_to_base_norm(scenario, mat, extra=()):
    """Sampled operator norm from the graph-normed space to the base space."""
    return _graph_operator_norm(
        mat, None, scenario.reference_operator, scenario.norm, extra=extra
    )


def graph_to_graph_norm(scenario, mat, extra=()):
    ref = scenario.reference_operator
    return _graph_operator_norm(mat, ref, ref, scenario.norm, extra=extra)


# -- discrete norms --------------------------------------------------------


def state_norm(scenario, phi):
    """L1-in-age norm: trapezoid quadrature of the nodewise spatial norm."""
    g = phi.grid
    per_node = np.array([spatial_norm(v, scenario.norm) for v in phi.values])
    return float(g.step * np.dot(g.weights, per_node))


def graph_state_norm(scenario, phi):
    """Graph norm of a state: base norm plus base norm of the reference image."""
    ref = scenario.reference_operator
    lifted = phi.with_values(phi.values @ ref.T)
    return state_norm(scenario, phi) + state_norm(scenario, lifted)


def upwind_derivative(phi):
    """Backward difference in age (forward at the first node)."""
    vals = phi.values
    h = phi.grid.step
    out = np.empty_like(vals)
    out[1:] = (vals[1:] - vals[:-1]) / h
    out[0] = (vals[1] - vals[0]) / h
    return phi.with_values(out)


def centered_derivative(phi):
    """Central difference in age, one-sided at both end nodes."""
    vals = phi.values
    h = phi.grid.step
    out = np.empty_like(vals)
    out[1:-1] = (vals[2:] - vals[:-2]) / (2 * h)
    out[0] = (vals[1] - vals[0]) / h
    out[-1] = (vals[-1] - vals[-2]) / h
    return phi.with_values(out)


def regularity_norm(scenario, phi):
    """Graph norm plus the base norm of the age derivative.

    The derivative term uses central differences; the admissibility and
    generator computations elsewhere deliberately use upwind differences,
    this norm is the only central-difference consumer.
    """
    return graph_state_norm(scenario, phi) + state_norm(scenario, centered_derivative(phi))


def lp_age_norm(scenario, phi, p, ell=0):
    """Discrete L_p-in-age norm of the nodewise base or graph norm."""
    if p < 1:
        raise ValidationError("p must be >= 1")
    g = phi.grid
    ref = scenario.reference_operator
    per_node = np.empty(g.n_age + 1)
    for i, v in enumerate(phi.values):
        per_node[i] = (
            spatial_norm(v, scenario.norm)
            if ell == 0
            else graph_pair_norm(v, ref, scenario.norm)
        )
    return float((g.step * np.dot(g.weights, per_node**p)) ** (1.0 / p))


# -- birth balance ---------------------------------------------------------


def birth_quadrature(scenario, values):
    """Trapezoid quadrature of a -> b(a) values(a) over the age interval.

    This helper is the single code path for every birth integral in the
    package; the renewal solver and its consistency checks rely on summation
    order being identical on both sides.
    """
    g = scenario.age_grid
    w = g.weights
    bmats = scenario.birth_matrices()
    acc = np.zeros(scenario.dim)
    for i in range(g.n_age + 1):
        acc += w[i] * (bmats[i] @ values[i])
    return g.step * acc


def check_birth_balance(scenario, phi, tol=None):
    """Whether phi(0) matches the birth integral of phi, and the residual."""
    if tol is None:
        tol = scenario.tolerances.membership
    residual = spatial_norm(
        phi.values[0] - birth_quadrature(scenario, phi.values), scenario.norm
    )
    return residual <= tol, float(residual)


def apply_generator(scenario, t, phi, require_balance=False):
    """Transport-plus-reaction generator at frozen time t.

    Nodewise value: -(d/da) phi + A(t, a) phi, with the age derivative taken
    by upwind (backward) differences, forward at the first node.  The
    derivative identities this feeds assume phi satisfies the birth balance;
    pass ``require_balance=True`` to enforce that precondition.
    """
    if require_balance:
        ok, residual = check_birth_balance(scenario, phi)
        if not ok:
            raise ValidationError(
                f"profile violates the birth balance (residual {residual:.3e}); "
                "apply enforce_birth_balance first"
            )
    deriv = upwind_derivative(phi)
    out = np.empty_like(phi.values)
    for i, a in enumerate(phi.grid.nodes):
        out[i] = scenario.operator(t, a) @ phi.values[i] - deriv.values[i]
    return phi.with_values(out)


# -- operator families -----------------------------------------------------


def neumann_laplacian(d):
    """Second-difference matrix with zero-flux ends on d nodes of [0, 1].

    Symmetric, nonpositive row sums (all zero), annihilates constants.
    """
    if d == 1:
        return np.zeros((1, 1))
    hx = 1.0 / (d - 1)
    lap = np.zeros((d, d))
    for i in range(d):
        if i > 0:
            lap[i, i - 1] = 1.0
            lap[i, i] -= 1.0
        if i < d - 1:
            lap[i, i + 1] = 1.0
            lap[i, i] -= 1.0
    return lap / hx**2


def _zero_operator(d):
    zero = np.zeros((d, d))
    return OperatorField(d, lambda t, a: zero, lipschitz_t=0.0, label="zero")


def _mortality_operator(d, mu):
    mat = -float(mu) * np.eye(d)
    return OperatorField(d, lambda t, a: mat, lipschitz_t=0.0, label=f"mortality(mu={mu})")


def _modulated_laplacian_operator(d, a_max, kappa0, time_amplitude, age_slope):
    """kappa(t, a) * Laplacian with kappa = kappa0 (1 + amp sin 2 pi t)(1 + slope a / a_max)."""
    lap = neumann_laplacian(d)
    k0 = float(kappa0)
    amp = float(time_amplitude)
    slope = float(age_slope)

    def evaluate(t, a):
        kappa = k0 * (1.0 + amp * math.sin(2.0 * math.pi * t)) * (1.0 + slope * a / a_max)
        return kappa * lap

    lip = k0 * abs(amp) * 2.0 * math.pi * (1.0 + abs(slope)) * float(np.linalg.norm(lap, 2))
    return OperatorField(
        d,
        evaluate,
        lipschitz_t=0.0 if amp == 0.0 else lip,
        label=f"modulated_laplacian(kappa0={kappa0})",
    )


def _constant_birth(d, beta):
    mat = float(beta) * np.eye(d)
    if beta < 0:
        raise ValidationError("birth rate beta must be nonnegative")
    return BirthKernel(d, lambda a: mat, label=f"constant(beta={beta})")


def _hat_birth(d, beta, a_max):
    """Tent-shaped fertility peaking mid-interval, scalar multiple of identity."""
    eye = np.eye(d)
    peak = a_max / 2.0

    def evaluate(a):
        height = max(0.0, 1.0 - abs(a - peak) / peak)
        return float(beta) * height * eye

    return BirthKernel(d, evaluate, label=f"hat(beta={beta})")


_OPERATOR_KINDS = ("zero", "scalar_mortality", "modulated_laplacian")
_BIRTH_KINDS = ("zero", "constant", "hat")


def _build_operator(d, a_max, spec):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "zero":
        extra = spec
        op = _zero_operator(d)
    elif kind == "scalar_mortality":
        mu = spec.pop("mu", 1.0)
        extra = spec
        op = _mortality_operator(d, mu)
    elif kind == "modulated_laplacian":
        kappa0 = spec.pop("kappa0", 0.1)
        amp = spec.pop("time_amplitude", 0.0)
        slope = spec.pop("age_slope", 0.0)
        extra = spec
        op = _modulated_laplacian_operator(d, a_max, kappa0, amp, slope)
    else:
        raise ConfigError(
            f"operator.kind must be one of {_OPERATOR_KINDS}, got {kind!r}"
        )
    if extra:
        raise ConfigError(f"unknown operator field(s): {sorted(extra)}")
    return op


def _build_birth(d, a_max, spec):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "zero":
        extra = spec
        kernel = _constant_birth(d, 0.0)
    elif kind == "constant":
        beta = spec.pop("beta", 1.0)
        extra = spec
        kernel = _constant_birth(d, beta)
    elif kind == "hat":
        beta = spec.pop("beta", 1.0)
        extra = spec
        kernel = _hat_birth(d, beta, a_max)
    else:
        raise ConfigError(f"birth.kind must be one of {_BIRTH_KINDS}, got {kind!r}")
    if extra:
        raise ConfigError(f"unknown birth field(s): {sorted(extra)}")
    return kernel


_SCENARIO_KEYS = {
    "dim",
    "a_max",
    "n_age",
    "T",
    "n_time",
    "operator",
    "birth",
    "norm",
    "integrator_order",
    "tolerances",
    "s_max_factor",
    "reference_operator",
    "label",
}


def build_scenario(config):
    """Build a scenario from a plain dict (the JSON configuration shape).

    Either ``{"preset": name, ...overrides}`` or a full custom description
    with the keys dim, a_max, n_age, T, n_time, operator, birth and optional
    norm, integrator_order, tolerances, s_max_factor, reference_operator,
    label.  Unknown keys are rejected.
    """
    if not isinstance(config, dict):
        raise ConfigError("scenario configuration must be a mapping")
    config = dict(config)
    preset = config.pop("preset", None)
    if preset is not None:
        base = _preset_config(preset)
        base.update(config)
        config = base

    unknown = set(config) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario field(s): {sorted(unknown)}")
    for key in ("dim", "a_max", "n_age", "T", "n_time", "operator", "birth"):
        if key not in config:
            raise ConfigError(f"missing scenario field: {key}")

    try:
        d = int(config["dim"])
        a_max = float(config["a_max"])
        n_age = int(config["n_age"])
        horizon = float(config["T"])
        n_time = int(config["n_time"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"numeric scenario field failed to parse: {exc}") from exc
    if not math.isfinite(a_max):
        raise ConfigError("a_max must be finite (infinite maximal age is unsupported)")

    age_grid = AgeGrid(a_max, n_age)
    time_grid = TimeGrid(horizon, n_time)
    operator = _build_operator(d, a_max, config["operator"])
    birth = _build_birth(d, a_max, config["birth"])

    ref_spec = config.get("reference_operator", "identity")
    if isinstance(ref_spec, str):
        if ref_spec == "identity":
            ref = np.eye(d)
        elif ref_spec == "laplacian":
            ref = neumann_laplacian(d)
        elif ref_spec == "zero":
            ref = np.zeros((d, d))
        else:
            raise ConfigError(f"unknown reference_operator {ref_spec!r}")
    else:
        ref = np.asarray(ref_spec, dtype=float)

    tol_spec = dict(config.get("tolerances", {}))
    unknown_tol = set(tol_spec) - {
        "volterra",
        "cocycle",
        "membership",
        "semigroup",
        "composition",
    }
    if unknown_tol:
        raise ConfigError(f"unknown tolerance field(s): {sorted(unknown_tol)}")
    tolerances = Tolerances(**tol_spec)

    frozen_config = tuple(sorted(_flatten(config).items()))
    return Scenario(
        age_grid=age_grid,
        time_grid=time_grid,
        dim=d,
        operator=operator,
        birth=birth,
        reference_operator=ref,
        norm=config.get("norm", "two"),
        integrator_order=int(config.get("integrator_order", 2)),
        tolerances=tolerances,
        s_max_factor=float(config.get("s_max_factor", 10.0)),
        label=str(config.get("label", preset or "custom")),
        config=frozen_config,
    )


def _flatten(obj, prefix=""):
    flat = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            flat.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, (list, tuple, np.ndarray)):
        flat[prefix.rstrip(".")] = repr(np.asarray(obj).tolist())
    else:
        flat[prefix.rstrip(".")] = repr(obj)
    return flat


# -- presets ---------------------------------------------------------------


def _preset_config(name):
    """Plain-dict configuration for each named preset.

    SCAL0: scalar, no aging mechanism beyond transport, constant birth rate 2
           on unit maximal age.  The renewal root of 2(1 - e^-r)/r = 1 makes
           it the growth benchmark.
    DIFF1: 32 spatial nodes, diffusion with time and age modulated
           conductivity, identity-proportional birth.
    MORT1: scalar constant mortality balanced so the exponential age profile
           is stationary.
    QDIFF: the linear base for the norm-coupled diffusion fixed point
           problems (time-independent conductivity).
    """
    if name == "SCAL0":
        return {
            "label": "SCAL0",
            "dim": 1,
            "a_max": 1.0,
            "n_age": 100,
            "T": 10.0,
            "n_time": 1000,
            "operator": {"kind": "zero"},
            "birth": {"kind": "constant", "beta": 2.0},
            "norm": "one",
            "reference_operator": "identity",
            "integrator_order": 2,
        }
    if name == "DIFF1":
        return {
            "label": "DIFF1",
            "dim": 32,
            "a_max": 1.0,
            "n_age": 64,
            "T": 1.0,
            "n_time": 64,
            "operator": {
                "kind": "modulated_laplacian",
                "kappa0": 0.1,
                "time_amplitude": 0.5,
                "age_slope": 1.0,
            },
            "birth": {"kind": "constant", "beta": 0.5},
            "norm": "two",
            "reference_operator": "laplacian",
            "integrator_order": 2,
        }
    if name == "MORT1":
        return {
            "label": "MORT1",
            "dim": 1,
            "a_max": 1.0,
            "n_age": 100,
            "T": 2.0,
            "n_time": 200,
            "operator": {"kind": "scalar_mortality", "mu": 1.0},
            # beta / (1 - e^-1): newborn flux balances mortality decay
            "birth": {"kind": "constant", "beta": 1.0 / (1.0 - math.exp(-1.0))},
            "norm": "one",
            "reference_operator": "identity",
            "integrator_order": 2,
        }
    if name == "QDIFF":
        return {
            "label": "QDIFF",
            "dim": 16,
            "a_max": 1.0,
            "n_age": 32,
            "T": 0.5,
            "n_time": 16,
            "operator": {
                "kind": "modulated_laplacian",
                "kappa0": 0.1,
                "time_amplitude": 0.0,
                "age_slope": 1.0,
            },
            "birth": {"kind": "constant", "beta": 0.2},
            "norm": "two",
            "reference_operator": "laplacian",
            "integrator_order": 2,
        }
    raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESET_NAMES)}")


PRESET_NAMES = ("SCAL0", "DIFF1", "MORT1", "QDIFF")


def preset_scenario(name, **overrides):
    config = {"preset": name}
    config.update(overrides)
    return build_scenario(config)


def refine_scenario(scenario, factor):
    """Same physics on an age/time grid refined by an integer factor."""
    if factor < 1 or int(factor) != factor:
        raise ValidationError("refinement factor must be a positive integer")
    factor = int(factor)
    return replace(
        scenario,
        age_grid=AgeGrid(scenario.age_grid.a_max, scenario.age_grid.n_age * factor),
        time_grid=TimeGrid(scenario.time_grid.horizon, scenario.time_grid.n_time * factor),
        caches={},
    )


# -- profiles ---------------------------------------------------------------

PROFILE_NAMES = ("ones", "linear", "age_bump", "smooth_random", "tilted")


def make_profile(scenario, name="ones", seed=0, spatial_modes=3, age_modes=3):
    """Initial age profiles used by the command line tools and tests.

    'ones' and 'linear' are spatially constant.  'age_bump' is a smooth
    positive bump in age, spatially constant.  'smooth_random' mixes a few
    low cosine modes in age and space with seeded coefficients; smooth
    profiles keep discretization-based checks inside their asymptotic
    regime.  'tilted' is ones plus a faint smooth tilt in age and space,
    the gentlest profile that still exercises spatially coupled operators.
    """
    g = scenario.age_grid
    d = scenario.dim
    ages = g.nodes
    if name == "ones":
        values = np.ones((g.n_age + 1, d))
    elif name == "linear":
        values = np.repeat(ages[:, None], d, axis=1)
    elif name == "age_bump":
        shape = 1.0 + np.cos(2.0 * np.pi * (ages / g.a_max - 0.5))
        values = np.repeat(shape[:, None], d, axis=1)
    elif name == "smooth_random":
        rng = np.random.default_rng(seed)
        x = np.linspace(0.0, 1.0, d)
        values = np.zeros((g.n_age + 1, d))
        for ka in range(age_modes):
            age_part = np.cos(np.pi * ka * ages / g.a_max)
            for kx in range(spatial_modes):
                coeff = rng.normal() / (1.0 + ka + kx) ** 2
                values += coeff * np.outer(age_part, np.cos(np.pi * kx * x))
    elif name == "tilted":
        x = np.linspace(0.0, 1.0, d)
        tilt = np.outer(np.sin(np.pi * ages / g.a_max), np.cos(np.pi * x))
        values = 1.0 + 0.005 * tilt
    else:
        raise ConfigError(f"unknown profile {name!r}; available: {PROFILE_NAMES}")
    return StateVector(g, values)
