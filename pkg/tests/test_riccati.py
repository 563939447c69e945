"""Tests for coupling models, projected systems and Riccati solvers."""

import numpy as np
import pytest

from graphonlqr import (
    CertificateError,
    ConstructionError,
    CouplingModel,
    DictionaryGraphon,
    HorizonError,
    ResidualNorms,
    RiccatiIntegrationError,
    SbmSpec,
    SubspaceBasis,
    assemble_projected,
    certify,
    check_robust_conditions,
    cost_is_psd,
    eigenbasis,
    residual_norms,
    sbm_limit,
    solve_auxiliary,
    solve_riccati,
    solve_robust_auxiliary,
    step_from_matrix,
)
from graphonlqr.errors import DimensionError
from tests.conftest import BLOCK_PROBS, TRIG_A, trig_model


class TestCouplingModel:
    """Building models from scalars and matrices."""

    def test_scalars_broadcast(self) -> None:
        """Scalars become s·I once the dimension is known."""
        model = CouplingModel.create(L_a=np.eye(2), D_a=3.0)
        assert model.dimension == 2
        np.testing.assert_array_equal(model.d_a, 3.0 * np.eye(2))
        np.testing.assert_array_equal(model.l_q, np.zeros((2, 2)))

    def test_missing_graphons_are_zero(self) -> None:
        """Roles without a graphon get the zero kernel."""
        model = CouplingModel.create(L_a=1.0)
        assert all(isinstance(g, DictionaryGraphon) for g in model.graphons().values())
        assert model.grid_size is None

    def test_wrong_shape(self) -> None:
        """A matrix of the wrong size is refused."""
        with pytest.raises(ConstructionError, match="D_a|d_a"):
            CouplingModel.create(L_a=np.eye(2), D_a=np.eye(3), dimension=2)

    def test_horizon_must_be_positive(self) -> None:
        """Zero horizon is refused."""
        with pytest.raises(ConstructionError, match="horizon"):
            CouplingModel.create(L_a=1.0, horizon=0.0)

    def test_step_graphons_share_a_grid(self) -> None:
        """Step graphons on different grids cannot be combined."""
        with pytest.raises(ConstructionError, match="different grids"):
            CouplingModel.create(
                L_a=1.0, A=step_from_matrix(np.ones((3, 3))), B=step_from_matrix(np.ones((4, 4)))
            )

    def test_grid_size(self) -> None:
        """The grid comes from the step graphons."""
        model = CouplingModel.create(L_a=1.0, Q=step_from_matrix(np.ones((5, 5))))
        assert model.grid_size == 5

    def test_cost_is_psd(self) -> None:
        """Positive local weights dominate a small cost kernel; negative ones do not."""
        assert cost_is_psd(trig_model(), grid_size=40)
        assert not cost_is_psd(trig_model(L_q=-1.0), grid_size=40)


class TestProjectedModel:
    """Assembly of the projected system."""

    def test_trig_projection(self, model: CouplingModel, basis: SubspaceBasis) -> None:
        """Ā = I⊗L_a + M_A⊗D_a with M_A read off the kernel coefficients."""
        projected = assemble_projected(model, basis)
        np.testing.assert_allclose(projected.a_bar, [[3.0, 0.5], [0.5, 3.0]])
        np.testing.assert_allclose(projected.b_bar, [[0.7, 0.0], [0.0, 1.7]])
        np.testing.assert_allclose(projected.q_bar, [[1.5, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(projected.qt_bar, [[2.0, 0.0], [0.0, 2.5]])
        np.testing.assert_allclose(projected.couplings["A"], [[1.0, 0.5], [0.5, 1.0]])

    def test_not_invariant(self, model: CouplingModel) -> None:
        """A basis the couplings leak out of is refused with the report attached."""
        with pytest.raises(CertificateError, match="not invariant") as info:
            assemble_projected(model, SubspaceBasis.from_dictionary(["sin1"], 40))
        assert info.value.report.invariance["A"] > 0.1

    def test_certificate(self, model: CouplingModel, basis: SubspaceBasis) -> None:
        """All four kernels are exactly low-rank in span{sin1, cos1}."""
        report = certify(model, basis)
        assert report.exact
        assert set(report.invariance) == {"A", "B", "Q", "QT"}

    def test_residual_norms(self, basis: SubspaceBasis) -> None:
        """Residual norms are the operator norms outside the subspace."""
        extra = DictionaryGraphon.from_terms([(1.0, "sin1", "sin1"), (0.4, "cos5", "cos5")])
        norms = residual_norms(trig_model(B=extra), basis)
        assert norms.a == pytest.approx(0.0, abs=1e-12)
        assert norms.b == pytest.approx(0.4)
        assert norms.as_dict()["B"] == norms.b

    def test_grid_refinement(self) -> None:
        """Refining the block sizes of an SBM limit leaves the projected solution unchanged."""
        solutions = []
        for size in (20, 40):
            spec = SbmSpec(block_probs=BLOCK_PROBS, block_sizes=(size,) * 3, seed=0)
            g = sbm_limit(spec)
            model = CouplingModel.create(
                L_a=1.0, D_a=1.0, L_b=1.0, L_q=1.0, D_q=1.0, L_qT=1.0, D_qT=1.0, A=g, Q=g, QT=g
            )
            p = assemble_projected(model, eigenbasis(g, 3))
            solutions.append(solve_riccati(p.a_bar, p.b_bar, p.q_bar, p.qt_bar, 1.0, 50).matrices)
        np.testing.assert_allclose(solutions[1], solutions[0], atol=1e-8)

    def test_negative_residual_norm(self) -> None:
        """Norms are nonnegative."""
        with pytest.raises(ConstructionError):
            ResidualNorms(a=-1.0)


class TestSolveRiccati:
    """The RK4 backward solver."""

    def test_pure_control(self) -> None:
        """ṗ = p² with p(T) = 2 gives p(0) = 2/3."""
        traj = solve_riccati([[0.0]], [[1.0]], [[0.0]], [[2.0]], horizon=1.0)
        assert traj.at(0.0)[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-7)
        assert traj.at(0.5)[0, 0] == pytest.approx(1.0, abs=1e-7)

    def test_uncontrolled_growth(self) -> None:
        """Without input the equation is linear: p(t) = q·e^{2a(T−t)}."""
        traj = solve_riccati([[0.7]], [[0.0]], [[0.0]], [[1.5]], horizon=1.0, steps=200)
        expected = 1.5 * np.exp(1.4 * (1.0 - traj.time_grid))
        np.testing.assert_allclose(traj.matrices[:, 0, 0], expected, rtol=0.0, atol=1e-8)

    def test_monotone_in_the_running_weight(
        self, model: CouplingModel, basis: SubspaceBasis
    ) -> None:
        """A larger running weight gives a larger solution at every time."""
        p = assemble_projected(model, basis)
        base = solve_riccati(p.a_bar, p.b_bar, p.q_bar, p.qt_bar, 1.0, steps=100)
        heavier = solve_riccati(
            p.a_bar, p.b_bar, p.q_bar + 0.1 * np.eye(2), p.qt_bar, 1.0, steps=100
        )
        for low, high in zip(base.matrices, heavier.matrices, strict=True):
            assert np.min(np.linalg.eigvalsh(high - low)) >= -1e-8
        assert np.min(np.linalg.eigvalsh(heavier.at(0.0) - base.at(0.0))) > 0.0

    def test_fixed_point(self) -> None:
        """The stationary solution stays put."""
        traj = solve_riccati([[0.0]], [[1.0]], [[1.0]], [[1.0]], horizon=3.0, steps=30)
        np.testing.assert_allclose(traj.matrices[:, 0, 0], 1.0, atol=1e-14)

    def test_terminal_value_and_grid(self) -> None:
        """The last matrix is the terminal weight; the grid is uniform."""
        qt = np.array([[2.0, 0.5], [0.5, 1.0]])
        traj = solve_riccati(np.eye(2), np.eye(2), np.eye(2), qt, horizon=2.0, steps=8)
        np.testing.assert_array_equal(traj.matrices[-1], qt)
        np.testing.assert_allclose(traj.time_grid, np.linspace(0.0, 2.0, 9))
        assert traj.steps == 8 and traj.size == 2 and traj.horizon == 2.0

    def test_symmetric_solution(self) -> None:
        """Iterates stay symmetric for a non-symmetric drift."""
        a = np.array([[0.0, 3.0], [-1.0, 0.5]])
        b = np.array([[1.0], [0.2]])
        traj = solve_riccati(a, b, np.eye(2), np.eye(2), horizon=1.0)
        for p in traj.matrices:
            np.testing.assert_array_equal(p, p.T)

    def test_interpolation(self) -> None:
        """Between grid points the solution is interpolated linearly."""
        traj = solve_riccati([[0.0]], [[1.0]], [[0.0]], [[2.0]], horizon=1.0, steps=4)
        middle = 0.5 * (traj.matrices[0] + traj.matrices[1])
        np.testing.assert_allclose(traj.at(0.125), middle)

    def test_outside_horizon(self) -> None:
        """Times outside [0, T] are refused."""
        traj = solve_riccati([[0.0]], [[1.0]], [[0.0]], [[2.0]], horizon=1.0, steps=4)
        with pytest.raises(HorizonError):
            traj.at(1.5)
        with pytest.raises(HorizonError):
            traj.at(-0.1)

    def test_asymmetric_weight(self) -> None:
        """Weights must be symmetric."""
        with pytest.raises(ConstructionError, match="symmetric"):
            solve_riccati(np.eye(2), np.eye(2), [[1.0, 1.0], [0.0, 1.0]], np.eye(2), 1.0)

    def test_dimension_mismatch(self) -> None:
        """Sizes must agree."""
        with pytest.raises(DimensionError):
            solve_riccati(np.eye(2), np.eye(3), np.eye(2), np.eye(2), 1.0)
        with pytest.raises(DimensionError):
            solve_riccati(np.eye(2), np.eye(2), np.eye(3), np.eye(2), 1.0)

    def test_fourth_order_convergence(self, model: CouplingModel, basis: SubspaceBasis) -> None:
        """Halving the step cuts the error by about 2⁴."""
        p = assemble_projected(model, basis)

        def start(steps: int) -> np.ndarray:
            return solve_riccati(p.a_bar, p.b_bar, p.q_bar, p.qt_bar, 1.0, steps).matrices[0]

        reference = start(4096)
        coarse = np.max(np.abs(start(40) - reference))
        fine = np.max(np.abs(start(80) - reference))
        assert np.log2(coarse / fine) >= 3.5


class TestAuxiliary:
    """The per-agent equations on the orthogonal complement."""

    def test_auxiliary_uses_local_matrices(self, model: CouplingModel) -> None:
        """The auxiliary equation ignores the couplings."""
        aux = solve_auxiliary(model, steps=50)
        local = solve_riccati([[2.0]], [[1.2]], [[1.0]], [[2.0]], 1.0, 50)
        np.testing.assert_array_equal(aux.matrices, local.matrices)

    def test_robust_reduces_to_auxiliary(self, model: CouplingModel) -> None:
        """With zero residual norms the robust equation is the auxiliary one."""
        robust = solve_robust_auxiliary(model, ResidualNorms(), steps=50)
        np.testing.assert_allclose(robust.matrices, solve_auxiliary(model, 50).matrices)

    def test_robust_inflates_weights(self, model: CouplingModel) -> None:
        """Residual cost norms raise the auxiliary value function."""
        plain = solve_robust_auxiliary(model, ResidualNorms(), steps=50)
        inflated = solve_robust_auxiliary(model, ResidualNorms(q=0.5, qt=0.5), steps=50)
        assert inflated.matrices[0, 0, 0] > plain.matrices[0, 0, 0]

    def test_robust_conditions(self, model: CouplingModel) -> None:
        """The model satisfies every condition; a zero D_qT does not."""
        assert check_robust_conditions(model) == []
        issues = check_robust_conditions(trig_model(D_qT=0.0, D_a=-1.0))
        assert "D_qT is not positive definite" in issues
        assert "D_a has an eigenvalue with negative real part" in issues

    def test_robust_blow_up(self, model: CouplingModel) -> None:
        """An indefinite control-energy matrix makes the solution explode."""
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(
            RiccatiIntegrationError, match="robust auxiliary"
        ) as info:
            solve_robust_auxiliary(model, ResidualNorms(b=10.0), steps=200)
        assert 0.0 <= info.value.time < 1.0


def test_model_graphons_in_role_order() -> None:
    """Roles are always A, B, Q, QT."""
    model = CouplingModel.create(L_a=1.0, A=TRIG_A)
    assert list(model.graphons()) == ["A", "B", "Q", "QT"]
    assert model.pairs()["A"][2] is TRIG_A
