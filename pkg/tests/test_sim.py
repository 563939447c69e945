"""Tests for closed-loop simulation, costs, the centralized oracle and comparisons."""

import numpy as np
import pytest

from graphonlqr import (
    CentralizedLaw,
    ComparisonReport,
    CouplingModel,
    DictionaryGraphon,
    DimensionError,
    GridFunction,
    HorizonError,
    OpenLoopSchedule,
    OracleSizeError,
    SimulationError,
    SubspaceBasis,
    Trajectory,
    assemble_full,
    compare,
    evaluate_cost,
    oracle_law,
    oracle_solve,
    sample_initial_state,
    simulate,
    split_cost,
    split_trajectory,
    synthesize_exact,
)
from tests.conftest import trig_model


class _Constant:
    """Feedback law that applies a fixed control field."""

    def __init__(self, value: float, horizon: float = 1.0) -> None:
        self.value = value
        self.horizon = horizon

    def control(self, t: float, states: np.ndarray) -> np.ndarray:
        return np.full(states.shape, self.value)


class _Bumped:
    """A feedback law plus the input ``direction·sin(πt)``."""

    def __init__(self, law: CentralizedLaw, direction: np.ndarray) -> None:
        self.law = law
        self.direction = direction

    @property
    def horizon(self) -> float:
        return self.law.horizon

    def control(self, t: float, states: np.ndarray) -> np.ndarray:
        return self.law.control(t, states) + self.direction * np.sin(np.pi * t)


def _constant_trajectory(value: np.ndarray, steps: int = 10) -> Trajectory:
    states = np.broadcast_to(value, (steps + 1, *value.shape)).copy()
    return Trajectory(np.linspace(0.0, 1.0, steps + 1), states, np.zeros_like(states))


class TestSimulate:
    """Forward integration of the closed loop."""

    def test_free_decay(self) -> None:
        """Uncoupled, uncontrolled agents decay as e^{-t}."""
        model = CouplingModel.create(L_a=-1.0)
        traj = simulate(model, _Constant(0.0), np.ones((5, 1)), steps=50)
        np.testing.assert_allclose(traj.states[-1], np.exp(-1.0), rtol=1e-8)
        assert traj.states.shape == (51, 5, 1)

    def test_coupling_drives_the_mean(self) -> None:
        """With the constant kernel every agent follows the mean."""
        model = CouplingModel.create(D_a=1.0, A=DictionaryGraphon.constant())
        x0 = np.array([[1.0], [3.0]])
        traj = simulate(model, _Constant(0.0), x0, steps=100)
        # mean m grows as e^t, deviations stay put
        expected = np.array([[-1.0], [1.0]]) + 2.0 * np.exp(1.0)
        np.testing.assert_allclose(traj.states[-1], expected, rtol=1e-8)

    def test_controls_are_recorded(self) -> None:
        """The control at every grid point is stored."""
        model = CouplingModel.create(L_b=1.0)
        traj = simulate(model, _Constant(2.0), np.zeros((3, 1)), steps=4)
        np.testing.assert_array_equal(traj.controls, 2.0)
        np.testing.assert_allclose(traj.states[-1], 2.0)

    def test_horizon_mismatch(self) -> None:
        """Law and model must share the horizon."""
        model = CouplingModel.create(L_a=1.0, horizon=2.0)
        with pytest.raises(HorizonError):
            simulate(model, _Constant(0.0, horizon=1.0), np.zeros((3, 1)))

    def test_grid_mismatch(self, model: CouplingModel, basis: SubspaceBasis) -> None:
        """The initial state must match the model's grid and dimension."""
        law = synthesize_exact(model, basis, steps=10)
        step_model = CouplingModel.create(L_a=1.0, A=DictionaryGraphon.zero().on_grid(40))
        with pytest.raises(DimensionError):
            simulate(step_model, law, np.zeros((30, 1)))
        with pytest.raises(DimensionError):
            simulate(model, law, np.zeros((40, 2)))

    def test_blow_up(self) -> None:
        """A non-finite state stops the simulation."""
        model = CouplingModel.create(L_b=1.0)
        with np.errstate(invalid="ignore"), pytest.raises(SimulationError):
            simulate(model, _Constant(np.inf), np.zeros((2, 1)), steps=5)


class TestCost:
    """Cost functional and its split."""

    def test_constant_state(self) -> None:
        """With ℚ = 𝕀 and no control the cost is T·‖v‖²."""
        model = CouplingModel.create(L_q=1.0)
        v = np.array([[1.0], [2.0], [3.0], [4.0]])
        assert evaluate_cost(model, _constant_trajectory(v)) == pytest.approx(7.5)

    def test_terminal_and_control_terms(self) -> None:
        """Terminal weight and control energy are both counted."""
        model = CouplingModel.create(L_qT=2.0)
        v = np.ones((2, 1))
        traj = _constant_trajectory(v)
        traj = Trajectory(traj.time_grid, traj.states, np.full_like(traj.states, 3.0))
        assert evaluate_cost(model, traj) == pytest.approx(2.0 + 9.0)

    def test_coupled_weight(self) -> None:
        """The cost kernel enters as <x, D·𝐐x>."""
        model = CouplingModel.create(D_q=1.0, Q=DictionaryGraphon.constant())
        v = np.array([[1.0], [3.0]])
        assert evaluate_cost(model, _constant_trajectory(v)) == pytest.approx(4.0)

    def test_split_adds_up(
        self, model: CouplingModel, basis: SubspaceBasis, x0: GridFunction
    ) -> None:
        """With invariant cost kernels the two parts sum to the whole cost."""
        law = synthesize_exact(model, basis, steps=50)
        traj = simulate(model, law, x0, steps=50)
        subspace, auxiliary = split_cost(model, basis, traj)
        assert subspace > 0 and auxiliary > 0
        assert subspace + auxiliary == pytest.approx(evaluate_cost(model, traj), rel=1e-10)

    def test_split_under_open_loop_controls(
        self, model: CouplingModel, basis: SubspaceBasis, x0: GridFunction
    ) -> None:
        """The split holds for arbitrary controls, not only the optimal ones."""
        rng = np.random.default_rng(11)
        time_grid = np.linspace(0.0, 1.0, 51)
        for _ in range(3):
            schedule = OpenLoopSchedule(time_grid, rng.normal(size=(51, 40, 1)))
            traj = simulate(model, schedule, x0, steps=50)
            subspace, auxiliary = split_cost(model, basis, traj)
            assert subspace + auxiliary == pytest.approx(evaluate_cost(model, traj), rel=1e-8)

    def test_split_trajectory(
        self, model: CouplingModel, basis: SubspaceBasis, x0: GridFunction
    ) -> None:
        """Coordinates and auxiliary parts rebuild the trajectory and are orthogonal."""
        traj = simulate(model, synthesize_exact(model, basis, steps=20), x0, steps=20)
        projection, auxiliary = split_trajectory(basis, traj)
        assert projection.states.shape == (21, 2, 1)
        assert auxiliary.controls.shape == (21, 40, 1)
        f = basis.values
        rebuilt = np.einsum("il,tlk->tik", f, projection.states) + auxiliary.states
        np.testing.assert_allclose(rebuilt, traj.states, atol=1e-10)
        rebuilt = np.einsum("il,tlk->tik", f, projection.controls) + auxiliary.controls
        np.testing.assert_allclose(rebuilt, traj.controls, atol=1e-10)
        leak = np.einsum("il,tik->tlk", f, auxiliary.states) / 40
        np.testing.assert_allclose(leak, 0.0, atol=1e-10)

    def test_split_needs_matching_grid(self, model: CouplingModel) -> None:
        """The basis must live on the trajectory's grid."""
        traj = _constant_trajectory(np.ones((4, 1)))
        with pytest.raises(DimensionError):
            split_cost(model, SubspaceBasis.ones(5), traj)


class TestOracle:
    """The centralized nN-dimensional solve."""

    def test_full_system_layout(self) -> None:
        """Full matrices are I_N ⊗ L + (W/N) ⊗ D, agent-major."""
        model = CouplingModel.create(
            L_a=np.diag([1.0, 2.0]), D_a=np.eye(2), A=DictionaryGraphon.constant()
        )
        full = assemble_full(model, 3)
        assert full.a.shape == (6, 6)
        np.testing.assert_allclose(full.a[:2, :2], np.diag([1.0, 2.0]) + np.eye(2) / 3)
        np.testing.assert_allclose(full.a[:2, 2:4], np.eye(2) / 3)

    def test_grid_free_model_needs_a_grid(self, model: CouplingModel) -> None:
        """Grid-free kernels need an explicit grid size."""
        with pytest.raises(DimensionError):
            assemble_full(model)

    def test_size_cap(self, model: CouplingModel) -> None:
        """Problems above the cap are refused with guidance."""
        with pytest.raises(OracleSizeError, match="max_oracle_dimension"):
            oracle_law(model, 40, steps=10, max_dimension=39)

    def test_perturbed_controls_cost_more(self, x0: GridFunction) -> None:
        """An extra input w on top of the optimal feedback costs exactly ∫ mean |w|²."""
        model = trig_model()
        oracle, cost = oracle_solve(model, x0, steps=100)
        law = oracle_law(model, 40, steps=100)
        rng = np.random.default_rng(3)
        for _ in range(3):
            direction = rng.normal(size=(40, 1))
            perturbed = simulate(model, _Bumped(law, direction), x0, steps=100)
            increase = evaluate_cost(model, perturbed) - cost
            assert increase > 0
            assert increase == pytest.approx(0.5 * np.mean(direction**2), rel=0.05)

    def test_open_loop_replay(self, x0: GridFunction) -> None:
        """Replaying the optimal controls open-loop retraces the optimal path."""
        model = trig_model()
        oracle, _ = oracle_solve(model, x0, steps=200)
        replay = simulate(model, OpenLoopSchedule(oracle.time_grid, oracle.controls), x0, 200)
        np.testing.assert_array_equal(replay.controls, oracle.controls)
        assert compare(replay.with_cost(1.0), oracle).max_state_diff < 0.1

    def test_schedule_outside_horizon(self) -> None:
        """An open-loop schedule ends at its last time."""
        schedule = OpenLoopSchedule(np.linspace(0, 1, 3), np.zeros((3, 2, 1)))
        with pytest.raises(HorizonError):
            schedule.control(1.5, np.zeros((2, 1)))
        np.testing.assert_array_equal(schedule.control(1.0, np.zeros((2, 1))), 0.0)


class TestCompare:
    """Trajectory comparison reports."""

    def test_identical(self) -> None:
        """A trajectory compared with itself has no differences."""
        traj = _constant_trajectory(np.ones((3, 1))).with_cost(2.0)
        report = compare(traj, traj, {"a": 0.1})
        assert report.state_diff_l2 == 0.0
        assert report.max_state_diff == 0.0
        assert report.cost_gap_percent == 0.0
        assert report.wall_times == {"a": 0.1}

    def test_relative_differences(self) -> None:
        """Differences are relative to the reference."""
        a = _constant_trajectory(np.full((2, 1), 1.1)).with_cost(11.0)
        b = _constant_trajectory(np.ones((2, 1))).with_cost(10.0)
        report = compare(a, b)
        assert report.state_diff_l2 == pytest.approx(0.1)
        assert report.max_state_diff == pytest.approx(0.1)
        assert report.cost_gap_percent == pytest.approx(10.0)

    def test_needs_costs(self) -> None:
        """Both trajectories need a cost."""
        traj = _constant_trajectory(np.ones((3, 1)))
        with pytest.raises(DimensionError, match="cost"):
            compare(traj, traj.with_cost(1.0))

    def test_needs_matching_grids(self) -> None:
        """Time grids and shapes must agree."""
        a = _constant_trajectory(np.ones((3, 1))).with_cost(1.0)
        b = _constant_trajectory(np.ones((4, 1))).with_cost(1.0)
        with pytest.raises(DimensionError):
            compare(a, b)

    def test_report_lines(self) -> None:
        """The flat report lists every field as key = value."""
        report = ComparisonReport(
            state_diff_l2=0.5,
            max_state_diff=0.25,
            cost_a=2.0,
            cost_b=1.0,
            cost_gap_percent=100.0,
            wall_times={"exact": 1.5},
        )
        lines = report.as_lines()
        assert lines[0] == "state_diff_l2 = 0.5"
        assert "cost_gap_percent = 100" in lines
        assert lines[-1] == "wall_time_exact = 1.500000"


def test_initial_state_range() -> None:
    """Initial states are uniform in the requested range and reproducible."""
    a = sample_initial_state(np.random.default_rng(9), 50, 2, -1.0, 1.0)
    b = sample_initial_state(np.random.default_rng(9), 50, 2, -1.0, 1.0)
    assert a.values.shape == (50, 2)
    assert np.all(np.abs(a.values) <= 1.0)
    np.testing.assert_array_equal(a.values, b.values)
