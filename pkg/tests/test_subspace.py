"""Tests for subspace bases, projections and certificates."""

import numpy as np
import pytest

from graphonlqr import (
    IDENTITY,
    BasisError,
    DictionaryGraphon,
    GridFunction,
    ProjectedVector,
    SbmSpec,
    SpectrumRangeError,
    SubspaceBasis,
    certify_graphons,
    check_invariance,
    check_lowrank,
    coupling_matrix,
    decompose,
    eigenbasis,
    project_function,
    project_operator,
    reconstruct,
    sample_sbm,
    sbm_limit,
    step_from_matrix,
)

LEAKY = DictionaryGraphon.from_terms(
    [(1.0, "sin1", "sin1"), (0.3, "sin1", "sin2"), (0.3, "sin2", "sin1")]
)


class TestBasis:
    """Construction and orthonormality."""

    def test_gram_schmidt(self) -> None:
        """Arbitrary independent columns are orthonormalized."""
        columns = np.random.default_rng(0).normal(size=(20, 3))
        basis = SubspaceBasis.from_functions(columns)
        assert basis.dim == 3
        assert basis.gram_error() < 1e-12

    def test_gram_schmidt_keeps_the_span(self) -> None:
        """The first column only gets rescaled."""
        columns = np.column_stack([np.full(10, 3.0), np.arange(10.0)])
        basis = SubspaceBasis.from_functions(columns)
        np.testing.assert_allclose(basis.values[:, 0], np.ones(10))

    def test_rank_deficient(self) -> None:
        """A dependent column is reported by its index."""
        v = np.random.default_rng(1).normal(size=10)
        with pytest.raises(BasisError, match="basis function 1"):
            SubspaceBasis.from_functions(np.column_stack([v, 2 * v]))

    def test_not_orthonormal(self) -> None:
        """Values that are not orthonormal are refused as they are."""
        with pytest.raises(BasisError, match="orthonormal"):
            SubspaceBasis(np.column_stack([np.ones(4), np.ones(4)]))

    def test_too_many_functions(self) -> None:
        """There cannot be more functions than grid points."""
        with pytest.raises(BasisError):
            SubspaceBasis(np.ones((2, 3)))

    def test_frequency_too_high_for_grid(self) -> None:
        """sin20 sampled on 40 points is not normalized."""
        with pytest.raises(BasisError):
            SubspaceBasis.from_dictionary(["sin20"], 40)

    def test_repeated_dictionary_element(self) -> None:
        """Dictionary bases need distinct elements."""
        with pytest.raises(BasisError, match="distinct"):
            SubspaceBasis.from_dictionary(["sin1", "sin1"], 40)

    def test_provenance(self, block_spec: SbmSpec) -> None:
        """Bases remember where they came from."""
        assert SubspaceBasis.from_dictionary(["sin1", "cos1"], 8).provenance == (
            "dictionary sin1, cos1"
        )
        assert eigenbasis(sbm_limit(block_spec), 2, label="A").provenance == "eigen 2 of A"

    def test_eigenbasis_count(self, block_spec: SbmSpec) -> None:
        """An eigenbasis cannot have more functions than the grid."""
        with pytest.raises(SpectrumRangeError):
            eigenbasis(sbm_limit(block_spec), 61)


class TestProjection:
    """Projecting functions and operators."""

    def test_project_mean(self) -> None:
        """On the constant basis the coordinate is the mean."""
        p = project_function(GridFunction(np.array([2.0, 4.0])), SubspaceBasis.ones(2))
        np.testing.assert_allclose(p.coords, [3.0])

    def test_mode_major_layout(self, basis: SubspaceBasis) -> None:
        """coords[l·n + i] = <x_i, f_l>."""
        x = GridFunction(np.column_stack([basis.values[:, 1], 2 * basis.values[:, 0]]))
        p = project_function(x, basis)
        np.testing.assert_allclose(p.coords, [0.0, 2.0, 1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(p.as_matrix(), [[0.0, 2.0], [1.0, 0.0]], atol=1e-12)

    def test_projected_vector_size(self) -> None:
        """The coordinate count must be d·n."""
        with pytest.raises(ValueError):
            ProjectedVector(np.zeros(3), 2, 2)

    def test_decompose(self, basis: SubspaceBasis) -> None:
        """The two parts are orthogonal and add up to the function."""
        x = GridFunction(np.random.default_rng(2).normal(size=(40, 2)))
        parts = decompose(x, basis)
        np.testing.assert_allclose((parts.subspace_part + parts.auxiliary_part).values, x.values)
        assert abs(parts.subspace_part.inner(parts.auxiliary_part)) < 1e-12
        np.testing.assert_allclose(
            project_function(parts.auxiliary_part, basis).coords, 0.0, atol=1e-12
        )

    def test_reconstruct_subspace_function(self, basis: SubspaceBasis) -> None:
        """A function in the span is rebuilt from its coordinates."""
        x = GridFunction(basis.values @ np.array([[1.5], [-0.5]]))
        back = reconstruct(project_function(x, basis), basis)
        np.testing.assert_allclose(back.values, x.values, atol=1e-12)

    def test_grid_mismatch(self, basis: SubspaceBasis) -> None:
        """Functions on another grid cannot be projected."""
        with pytest.raises(ValueError):
            project_function(GridFunction(np.ones(20)), basis)

    def test_identity_couples_to_identity(self, basis: SubspaceBasis) -> None:
        """The identity operator projects to I_d."""
        np.testing.assert_array_equal(coupling_matrix(IDENTITY, basis), np.eye(2))

    def test_analytic_and_grid_couplings_agree(self) -> None:
        """Dictionary kernels give the same matrix with or without element bookkeeping."""
        g = DictionaryGraphon.from_terms(
            [(1.0, "sin1", "sin1"), (0.5, "sin1", "cos1"), (0.5, "cos1", "sin1")]
        )
        analytic = SubspaceBasis.from_dictionary(["sin1", "cos1"], 40)
        sampled = SubspaceBasis(analytic.values)
        np.testing.assert_allclose(
            coupling_matrix(g, analytic), coupling_matrix(g, sampled), atol=1e-12
        )
        np.testing.assert_allclose(coupling_matrix(g, analytic), [[1.0, 0.5], [0.5, 0.0]])

    def test_operator_projection(self, block_spec: SbmSpec) -> None:
        """kron(M, D) acts on coordinates as D·𝕋 acts on functions in the span."""
        g = sbm_limit(block_spec)
        basis = eigenbasis(g, 3)
        rng = np.random.default_rng(5)
        local = rng.normal(size=(2, 2))
        coords = rng.normal(size=(3, 2))
        x = GridFunction(basis.values @ coords)
        image = GridFunction(g.apply(x).values @ local.T)
        projected = project_operator(local, g, basis) @ coords.ravel()
        np.testing.assert_allclose(projected, project_function(image, basis).coords, atol=1e-10)

    def test_operator_projection_needs_square_local(self, basis: SubspaceBasis) -> None:
        """The local matrix must be square."""
        with pytest.raises(ValueError):
            project_operator(np.ones((2, 3)), IDENTITY, basis)


class TestCertificates:
    """Invariance and low-rank checks."""

    def test_eigenbasis_is_invariant(self, block_spec: SbmSpec) -> None:
        """Leading eigenvectors span an invariant subspace of their network."""
        g = step_from_matrix(sample_sbm(block_spec))
        basis = eigenbasis(g, 3)
        assert check_invariance(g, basis) < 1e-10
        assert check_lowrank(g, basis) > 1e-3

    def test_low_rank_limit(self, block_spec: SbmSpec) -> None:
        """A rank-3 block graphon is exactly low-rank on its top-3 eigenbasis."""
        g = sbm_limit(block_spec)
        basis = eigenbasis(g, 3)
        assert check_invariance(g, basis) < 1e-10
        assert check_lowrank(g, basis) < 1e-10

    def test_dictionary_leak(self) -> None:
        """A sin1-sin2 term leaks out of span{sin1} by its coefficient."""
        analytic = SubspaceBasis.from_dictionary(["sin1"], 40)
        assert check_invariance(LEAKY, analytic) == pytest.approx(0.3)
        assert check_invariance(LEAKY, SubspaceBasis(analytic.values)) == pytest.approx(0.3)

    def test_report(self, basis: SubspaceBasis) -> None:
        """The report separates invariance from exactness."""
        leaky_basis = SubspaceBasis.from_dictionary(["sin1"], 40)
        invariant_only = DictionaryGraphon.from_terms(
            [(1.0, "sin1", "sin1"), (0.5, "cos3", "cos3")]
        )
        report = certify_graphons({"A": invariant_only}, leaky_basis)
        assert report.invariant and not report.exact
        assert len(report.errors) == 1 and "low-rank" in report.errors[0]

        report = certify_graphons({"A": LEAKY, "B": DictionaryGraphon.zero()}, leaky_basis)
        assert not report.invariant and not report
        assert report.errors[0].startswith("A: subspace not invariant")
        assert report.invariance["B"] == 0.0

        report = certify_graphons({"A": DictionaryGraphon.constant()}, SubspaceBasis.ones(40))
        assert report.exact and report
        assert "A invariance=" in report.summary()

    def test_threshold_is_relative(self) -> None:
        """Large operators get a proportionally larger threshold."""
        basis = SubspaceBasis.ones(10)
        report = certify_graphons({"A": step_from_matrix(np.full((10, 10), 100.0), 100.0)}, basis)
        assert report.threshold("A") == pytest.approx(1e-8 * 100.0)
        assert report.exact
