"""
Closed-loop simulation, cost evaluation and the centralized oracle.

Everything here works on the full grid: states are ``(N, n)`` arrays, one row
per agent. The oracle assembles the nN×nN system directly and solves its
Riccati equation with the same integrator as the decomposed laws, so on
exactly low-rank instances the two agree to rounding.
"""

import dataclasses
import logging
import time
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import trapezoid

from graphonlqr.errors import DimensionError, HorizonError, OracleSizeError, SimulationError
from graphonlqr.graphon import Array, Graphon, GridFunction
from graphonlqr.riccati import (
    DEFAULT_STEPS,
    CouplingModel,
    RiccatiTrajectory,
    full_operator,
    solve_riccati,
)
from graphonlqr.subspace import SubspaceBasis

_LOG = logging.getLogger(__name__)

DEFAULT_MAX_ORACLE_DIMENSION = 512


class FeedbackLaw(Protocol):
    """Anything that maps a time and an ``(N, n)`` state to an ``(N, n)`` control."""

    @property
    def horizon(self) -> float: ...

    def control(self, t: float, states: Array) -> Array: ...


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    States and controls on a uniform time grid.

    Attributes:
        time_grid: ``(M+1,)`` times.
        states: ``(M+1, N, n)``.
        controls: ``(M+1, N, n)``.
        cost: Evaluated cost, once known.
    """

    time_grid: Array
    states: Array
    controls: Array
    cost: float | None = None

    def __post_init__(self) -> None:
        m = self.time_grid.shape[0]
        if self.states.shape[0] != m or self.controls.shape[0] != m:
            raise DimensionError("trajectory arrays do not match the time grid")
        if self.states.shape[:2] != self.controls.shape[:2]:
            raise DimensionError(
                f"states {self.states.shape} and controls {self.controls.shape} disagree"
            )

    @property
    def grid_size(self) -> int:
        return int(self.states.shape[1])

    @property
    def dimension(self) -> int:
        return int(self.states.shape[2])

    @property
    def steps(self) -> int:
        return int(self.time_grid.shape[0] - 1)

    def with_cost(self, cost: float) -> "Trajectory":
        return dataclasses.replace(self, cost=float(cost))


@dataclass(frozen=True, eq=False)
class OpenLoopSchedule:
    """A control schedule replayed regardless of the state, linear in time."""

    time_grid: Array
    controls: Array

    @property
    def horizon(self) -> float:
        return float(self.time_grid[-1])

    def control(self, t: float, states: Array) -> Array:
        if t < -1e-12 or t > self.horizon + 1e-12:
            raise HorizonError(f"time {t} is outside the schedule [0, {self.horizon}]")
        position = np.interp(t, self.time_grid, np.arange(self.time_grid.shape[0]))
        k = min(int(np.floor(position)), self.time_grid.shape[0] - 2)
        weight = position - k
        return (1 - weight) * self.controls[k] + weight * self.controls[k + 1]


def _coupling_matrix(g: Graphon, grid_size: int) -> Array:
    return g.on_grid(grid_size).weights / grid_size


def simulate(
    model: CouplingModel,
    law: FeedbackLaw,
    x0: GridFunction | Array,
    steps: int = DEFAULT_STEPS,
) -> Trajectory:
    """
    Integrate the closed loop ``ẋ = 𝔸x + 𝔹u`` forward with RK4.

    Args:
        model: The coupling model.
        law: Any feedback law, e.g. a :class:`~graphonlqr.control.ControlLaw`.
        x0: Initial state on the grid.
        steps: Number of time steps M.

    Returns:
        The trajectory with the control recorded at every grid point.

    Raises:
        DimensionError: If ``x0`` is not on the model's grid.
        HorizonError: If the law and model horizons differ.
        SimulationError: If the state becomes non-finite.
    """
    x = x0.values if isinstance(x0, GridFunction) else np.atleast_2d(np.asarray(x0, dtype=float))
    if x.shape[0] == 1 and x.ndim == 2 and model.dimension == 1 and x.shape[1] != 1:
        x = x.T
    n_agents, dimension = x.shape
    if model.grid_size is not None and model.grid_size != n_agents:
        raise DimensionError(f"initial state on {n_agents} agents, model on {model.grid_size}")
    if dimension != model.dimension:
        raise DimensionError(f"initial state of dimension {dimension}, model {model.dimension}")
    if not np.isclose(law.horizon, model.horizon, rtol=1e-12, atol=0.0):
        raise HorizonError(f"law horizon {law.horizon} differs from model horizon {model.horizon}")
    a = _coupling_matrix(model.a_graphon, n_agents)
    b = _coupling_matrix(model.b_graphon, n_agents)

    def rate(t: float, state: Array) -> tuple[Array, Array]:
        u = law.control(t, state)
        dx = state @ model.l_a.T + (a @ state) @ model.d_a.T
        dx += u @ model.l_b.T + (b @ u) @ model.d_b.T
        return dx, u

    h = model.horizon / steps
    time_grid = np.linspace(0.0, model.horizon, steps + 1)
    states = np.empty((steps + 1, n_agents, dimension))
    controls = np.empty_like(states)
    states[0] = x
    for k in range(steps):
        t, s = time_grid[k], states[k]
        k1, controls[k] = rate(t, s)
        k2, _ = rate(t + h / 2, s + h / 2 * k1)
        k3, _ = rate(t + h / 2, s + h / 2 * k2)
        k4, _ = rate(time_grid[k + 1], s + h * k3)
        states[k + 1] = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(states[k + 1])):
            raise SimulationError(f"state became non-finite at t = {time_grid[k + 1]:.6g}")
    controls[steps] = law.control(time_grid[steps], states[steps])
    return Trajectory(time_grid, states, controls)


def _quadratic(local: Array, coupling: Array, weights: Array, states: Array) -> Array:
    """``<x, [L𝕀 + D𝐓]x>`` at every time of an ``(M+1, N, n)`` stack."""
    n_agents = states.shape[1]
    image = states @ local.T + np.einsum("ij,tjk->tik", weights, states) @ coupling.T
    return np.sum(states * image, axis=(1, 2)) / n_agents


def _cost_parts(model: CouplingModel, states: Array, controls: Array, time_grid: Array) -> float:
    n_agents = states.shape[1]
    q = _coupling_matrix(model.q_graphon, n_agents)
    qt = _coupling_matrix(model.qt_graphon, n_agents)
    running = _quadratic(model.l_q, model.d_q, q, states)
    running = running + np.sum(controls**2, axis=(1, 2)) / n_agents
    terminal = _quadratic(model.l_qt, model.d_qt, qt, states[-1:])[0]
    return float(trapezoid(running, time_grid) + terminal)


def evaluate_cost(model: CouplingModel, traj: Trajectory) -> float:
    """
    ``J = ∫ <x, ℚx> + <u, u> dt + <x_T, ℚ_T x_T>`` by the trapezoidal rule.

    Example:
        With ``ℚ = 𝕀``, zero control and a constant state ``v`` over ``[0, T]``
        the cost is ``T·‖v‖²``.
    """
    if model.grid_size is not None and traj.grid_size != model.grid_size:
        raise DimensionError(f"trajectory on {traj.grid_size} agents, model on {model.grid_size}")
    return _cost_parts(model, traj.states, traj.controls, traj.time_grid)


def split_trajectory(basis: SubspaceBasis, traj: Trajectory) -> tuple[Trajectory, Trajectory]:
    """
    Split a trajectory along a subspace.

    Returns:
        The projected coordinates ``x^p``, ``u^p`` as a trajectory whose rows
        are the ``d`` basis functions instead of the agents, and the auxiliary
        trajectory ``x̆ = x − Σ_l x^{p l} f_l``, ``ŭ = u − Σ_l u^{p l} f_l`` on
        the agents.

    Raises:
        DimensionError: If the trajectory is not on the basis grid.
    """
    if traj.grid_size != basis.grid_size:
        raise DimensionError(f"trajectory on {traj.grid_size} agents, basis on {basis.grid_size}")
    f = basis.values
    xp = np.einsum("il,tik->tlk", f, traj.states) / basis.grid_size
    up = np.einsum("il,tik->tlk", f, traj.controls) / basis.grid_size
    projection = Trajectory(traj.time_grid, xp, up)
    auxiliary = Trajectory(
        traj.time_grid, traj.states - _on_grid(f, xp), traj.controls - _on_grid(f, up)
    )
    return projection, auxiliary


def _on_grid(f: Array, coords: Array) -> Array:
    return np.einsum("il,tlk->tik", f, coords)


def split_cost(model: CouplingModel, basis: SubspaceBasis, traj: Trajectory) -> tuple[float, float]:
    """
    Cost of the subspace part and of the auxiliary part of a trajectory.

    When 𝐐 and 𝐐_T leave the subspace invariant the two add up to
    :func:`evaluate_cost`, whatever the controls were.
    """
    projection, auxiliary = split_trajectory(basis, traj)
    f = basis.values
    subspace = _cost_parts(
        model,
        _on_grid(f, projection.states),
        _on_grid(f, projection.controls),
        traj.time_grid,
    )
    rest = _cost_parts(model, auxiliary.states, auxiliary.controls, traj.time_grid)
    return subspace, rest


@dataclass(frozen=True, eq=False)
class FullSystem:
    """The centralized nN×nN matrices, agent-major."""

    a: Array
    b: Array
    q: Array
    qt: Array
    grid_size: int
    dimension: int


def assemble_full(model: CouplingModel, grid_size: int | None = None) -> FullSystem:
    """
    Build ``I_N ⊗ L + (W/N) ⊗ D`` for all four roles.

    Grid-free graphons are sampled on ``grid_size``.
    """
    n_agents = grid_size or model.grid_size
    if n_agents is None:
        raise DimensionError("a grid size is needed for a model without step graphons")
    mats = {
        name: full_operator(local, coupling, g, n_agents)
        for name, (local, coupling, g) in model.pairs().items()
    }
    for name in ("Q", "QT"):
        mats[name] = (mats[name] + mats[name].T) / 2
    return FullSystem(mats["A"], mats["B"], mats["Q"], mats["QT"], n_agents, model.dimension)


@dataclass(frozen=True, eq=False)
class CentralizedLaw:
    """``u = −B_fullᵀ Π_full(t) x`` on the stacked state."""

    riccati: RiccatiTrajectory
    b_full: Array
    grid_size: int
    dimension: int
    synthesis_seconds: float = 0.0

    @property
    def horizon(self) -> float:
        return self.riccati.horizon

    def control(self, t: float, states: Array) -> Array:
        gain = -self.b_full.T @ self.riccati.at(t)
        return (gain @ states.ravel()).reshape(self.grid_size, self.dimension)


def oracle_law(
    model: CouplingModel,
    grid_size: int | None = None,
    steps: int = DEFAULT_STEPS,
    max_dimension: int = DEFAULT_MAX_ORACLE_DIMENSION,
) -> CentralizedLaw:
    """
    Solve the centralized Riccati equation of dimension nN.

    Raises:
        OracleSizeError: If nN exceeds ``max_dimension``.
    """
    n_agents = grid_size or model.grid_size
    if n_agents is None:
        raise DimensionError("a grid size is needed for a model without step graphons")
    size = n_agents * model.dimension
    if size > max_dimension:
        raise OracleSizeError(
            f"centralized problem has dimension {size} > {max_dimension}; use the decomposed "
            "synthesis, or raise max_oracle_dimension if the machine can afford it"
        )
    started = time.perf_counter()
    full = assemble_full(model, n_agents)
    riccati = solve_riccati(full.a, full.b, full.q, full.qt, model.horizon, steps)
    elapsed = time.perf_counter() - started
    _LOG.info("centralized Riccati of size %d solved in %.3fs", size, elapsed)
    return CentralizedLaw(riccati, full.b, n_agents, model.dimension, elapsed)


def oracle_solve(
    model: CouplingModel,
    x0: GridFunction | Array,
    steps: int = DEFAULT_STEPS,
    max_dimension: int = DEFAULT_MAX_ORACLE_DIMENSION,
) -> tuple[Trajectory, float]:
    """
    Centralized optimal trajectory and cost, by brute force.

    Args:
        model: The coupling model; grid-free graphons are sampled on x0's grid.
        x0: Initial state.
        steps: Time steps for both the Riccati solve and the simulation.
        max_dimension: Cap on nN.

    Raises:
        OracleSizeError: If the problem is larger than ``max_dimension``.
    """
    x = x0 if isinstance(x0, GridFunction) else GridFunction(np.asarray(x0, dtype=float))
    law = oracle_law(model, x.grid_size, steps, max_dimension)
    traj = simulate(model, law, x, steps)
    cost = evaluate_cost(model, traj)
    return traj.with_cost(cost), cost


class ComparisonReport(BaseModel):
    """
    How far trajectory ``a`` is from reference ``b``.

    Attributes:
        state_diff_l2: ``‖x_a − x_b‖ / ‖x_b‖`` in ``L²([0, T]; ℝ^{nN})``.
        max_state_diff: ``max|x_a − x_b| / max|x_b|``.
        cost_a: Cost of ``a``.
        cost_b: Cost of ``b``.
        cost_gap_percent: ``100·(cost_a − cost_b)/cost_b``.
        wall_times: Seconds per method, as measured by the caller.
    """

    model_config = ConfigDict(frozen=True)

    state_diff_l2: float
    max_state_diff: float
    cost_a: float
    cost_b: float
    cost_gap_percent: float
    wall_times: dict[str, float] = Field(default_factory=dict)

    def as_lines(self) -> list[str]:
        """``key = value`` lines for the flat report file."""
        lines = [
            f"state_diff_l2 = {self.state_diff_l2:.17g}",
            f"max_state_diff = {self.max_state_diff:.17g}",
            f"cost_a = {self.cost_a:.17g}",
            f"cost_b = {self.cost_b:.17g}",
            f"cost_gap_percent = {self.cost_gap_percent:.17g}",
        ]
        lines.extend(f"wall_time_{k} = {v:.6f}" for k, v in self.wall_times.items())
        return lines


def _ratio(numerator: float, denominator: float) -> float:
    if denominator == 0.0:
        return 0.0 if numerator == 0.0 else float("inf")
    return numerator / denominator


def compare(
    a: Trajectory, b: Trajectory, wall_times: Mapping[str, float] | None = None
) -> ComparisonReport:
    """
    Compare two trajectories with known costs; ``b`` is the reference.

    Raises:
        DimensionError: If the time grids or state shapes differ, or a cost is missing.
    """
    if a.states.shape != b.states.shape or not np.allclose(a.time_grid, b.time_grid):
        raise DimensionError("trajectories are on different grids")
    if a.cost is None or b.cost is None:
        raise DimensionError("both trajectories need an evaluated cost")
    n_agents = a.grid_size
    diff = a.states - b.states
    diff_norm = np.sqrt(trapezoid(np.sum(diff**2, axis=(1, 2)) / n_agents, a.time_grid))
    ref_norm = np.sqrt(trapezoid(np.sum(b.states**2, axis=(1, 2)) / n_agents, b.time_grid))
    return ComparisonReport(
        state_diff_l2=_ratio(float(diff_norm), float(ref_norm)),
        max_state_diff=_ratio(float(np.max(np.abs(diff))), float(np.max(np.abs(b.states)))),
        cost_a=a.cost,
        cost_b=b.cost,
        cost_gap_percent=100.0 * _ratio(a.cost - b.cost, b.cost),
        wall_times=dict(wall_times or {}),
    )


def sample_initial_state(
    rng: np.random.Generator,
    grid_size: int,
    dimension: int,
    low: float = -5.0,
    high: float = 5.0,
) -> GridFunction:
    """Initial states drawn uniformly from ``[low, high]`` per agent and component."""
    return GridFunction(rng.uniform(low, high, size=(grid_size, dimension)))
