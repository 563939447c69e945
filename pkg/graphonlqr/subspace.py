"""
Orthonormal bases of the common invariant subspace and projections onto them.

A :class:`SubspaceBasis` holds d functions ``f_1 … f_d`` sampled on the grid.
States in ``(L²[0,1])ⁿ`` project to vectors in ℝ^{nd}; coupling operators of the
form ``D·𝕋`` project to ``M ⊗ D`` with ``M_kl = <f_k, 𝕋 f_l>``.

Projected vectors are stored mode-major: ``coords[l·n + i] = <x_i, f_l>``. With
that ordering ``(M ⊗ D) vec(P) = vec(M P Dᵀ)`` for the d×n coordinate matrix P,
which is exactly the projection of ``D·𝕋`` applied to the state.
"""

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from graphonlqr.errors import BasisError, DimensionError
from graphonlqr.graphon import (
    GRAM_TOLERANCE,
    Array,
    DictionaryElement,
    DictionaryGraphon,
    Graphon,
    GridFunction,
    Spectrum,
    operator_norm,
    residual,
    sample_elements,
    spectral_decomposition,
)

_LOG = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-8
CERTIFICATE_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """
    d orthonormal functions on the grid.

    Attributes:
        values: ``(N, d)`` array, column ``l`` is ``f_l``.
        elements: The dictionary elements the columns sample, when the basis
            was built from the dictionary; kernels and bases that are both
            dictionary-based are then projected analytically.
        provenance: Human-readable origin, recorded in run manifests.

    Raises:
        BasisError: If the Gram matrix ``(1/N) FᵀF`` deviates from the
            identity by more than 1e-10.
    """

    values: Array
    elements: tuple[DictionaryElement, ...] | None = None
    provenance: str = "explicit"

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[1] == 0:
            raise BasisError(f"basis needs shape (N, d) with d >= 1, got {values.shape}")
        if values.shape[1] > values.shape[0]:
            raise BasisError(f"{values.shape[1]} basis functions on a grid of {values.shape[0]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        error = self.gram_error()
        if error > GRAM_TOLERANCE:
            raise BasisError(f"basis is not orthonormal (Gram deviation {error:.3g})")

    @property
    def grid_size(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def gram(self) -> Array:
        return self.values.T @ self.values / self.grid_size

    def gram_error(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.dim))))

    def function(self, index: int) -> GridFunction:
        return GridFunction(self.values[:, index])

    @classmethod
    def from_functions(
        cls, functions: Array | Sequence[GridFunction], provenance: str = "explicit"
    ) -> "SubspaceBasis":
        """
        Orthonormalize grid functions by modified Gram–Schmidt.

        Args:
            functions: ``(N, d)`` array of columns, or scalar grid functions.
            provenance: Origin recorded in manifests.

        Raises:
            BasisError: If a pivot norm drops below 1e-8 (rank deficiency).
        """
        if isinstance(functions, np.ndarray):
            columns = np.array(functions, dtype=float)
            if columns.ndim == 1:
                columns = columns[:, None]
        else:
            columns = np.column_stack([f.values[:, 0] for f in functions])
        n = columns.shape[0]
        basis = np.zeros_like(columns)
        for k in range(columns.shape[1]):
            v = columns[:, k].copy()
            # second sweep restores orthogonality lost to rounding
            for _ in range(2):
                for j in range(k):
                    v -= (basis[:, j] @ v / n) * basis[:, j]
            pivot = np.sqrt(v @ v / n)
            if pivot < PIVOT_TOLERANCE:
                raise BasisError(
                    f"basis function {k} is linearly dependent on the previous ones "
                    f"(pivot norm {pivot:.3g})"
                )
            basis[:, k] = v / pivot
        return cls(basis, provenance=provenance)

    @classmethod
    def from_dictionary(
        cls, elements: Iterable[DictionaryElement | str], grid_size: int
    ) -> "SubspaceBasis":
        """
        Sample dictionary elements at the grid midpoints.

        Raises:
            BasisError: If an element repeats or its frequency is too high for
                the grid to keep the family orthonormal.
        """
        chosen = tuple(
            e if isinstance(e, DictionaryElement) else DictionaryElement.from_name(e)
            for e in elements
        )
        if len(set(chosen)) != len(chosen):
            raise BasisError("dictionary basis elements must be distinct")
        names = ", ".join(e.name for e in chosen)
        return cls(
            sample_elements(chosen, grid_size), elements=chosen, provenance=f"dictionary {names}"
        )

    @classmethod
    def from_spectrum(
        cls, spectrum: Spectrum, grid_size: int | None = None, provenance: str = "spectrum"
    ) -> "SubspaceBasis":
        """Use the eigenfunctions of a :class:`Spectrum` as the basis."""
        values = spectrum.eigenfunctions(grid_size)
        # eigh vectors are orthonormal to rounding; re-normalize to reach the Gram tolerance
        return cls.from_functions(values, provenance=provenance)

    @classmethod
    def ones(cls, grid_size: int) -> "SubspaceBasis":
        """The mean-field basis ``{1}``."""
        return cls.from_dictionary([DictionaryElement("one")], grid_size)


def eigenbasis(
    g: Graphon, count: int, grid_size: int | None = None, label: str = "graphon"
) -> SubspaceBasis:
    """
    Top-``count`` eigenbasis of a graphon.

    Raises:
        SpectrumRangeError: If ``count`` exceeds the available eigenpairs.
    """
    grid = grid_size if grid_size is not None else g.grid_size
    return SubspaceBasis.from_spectrum(
        spectral_decomposition(g, count), grid, provenance=f"eigen {count} of {label}"
    )


class Identity:
    """The identity operator 𝕀, usable wherever a graphon is."""

    def __repr__(self) -> str:
        return "IDENTITY"


IDENTITY = Identity()


@dataclass(frozen=True, eq=False)
class ProjectedVector:
    """
    Coordinates of an ℝⁿ-valued function in a d-dimensional basis.

    ``coords[l·n + i] = <x_i, f_l>``.
    """

    coords: Array
    dim: int
    dimension: int

    def __post_init__(self) -> None:
        coords = np.array(self.coords, dtype=float).ravel()
        if coords.shape[0] != self.dim * self.dimension:
            raise DimensionError(
                f"{coords.shape[0]} coordinates for d={self.dim}, n={self.dimension}"
            )
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_matrix(cls, matrix: Array) -> "ProjectedVector":
        """From the d×n coordinate matrix."""
        return cls(matrix.ravel(), matrix.shape[0], matrix.shape[1])

    def as_matrix(self) -> Array:
        """The d×n coordinate matrix; row ``l`` is ``<x, f_l>``."""
        return self.coords.reshape(self.dim, self.dimension)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Orthogonal split ``x = x_f + x_aux`` with ``x_f`` in the subspace."""

    subspace_part: GridFunction
    auxiliary_part: GridFunction
    projected: ProjectedVector


def _check_grid(x: GridFunction, basis: SubspaceBasis) -> None:
    if x.grid_size != basis.grid_size:
        raise DimensionError(
            f"function on a grid of {x.grid_size} projected on a basis of grid {basis.grid_size}"
        )


def project_function(x: GridFunction, basis: SubspaceBasis) -> ProjectedVector:
    """
    Project a grid function onto the basis.

    Raises:
        DimensionError: If the grids differ.

    Example:
        ```python
        basis = SubspaceBasis.ones(2)
        project_function(GridFunction([2.0, 4.0]), basis).coords  # [3.]
        ```
    """
    _check_grid(x, basis)
    return ProjectedVector.from_matrix(basis.values.T @ x.values / basis.grid_size)


def reconstruct(p: ProjectedVector, basis: SubspaceBasis) -> GridFunction:
    """``Σ_l p_l f_l`` component-wise."""
    if p.dim != basis.dim:
        raise DimensionError(f"{p.dim} coordinates per component for a basis of {basis.dim}")
    return GridFunction(basis.values @ p.as_matrix())


def decompose(x: GridFunction, basis: SubspaceBasis) -> Decomposition:
    """Split ``x`` into its subspace and auxiliary parts."""
    projected = project_function(x, basis)
    subspace_part = reconstruct(projected, basis)
    return Decomposition(subspace_part, x - subspace_part, projected)


def _dictionary_pair(
    g: Graphon | Identity, basis: SubspaceBasis
) -> tuple[DictionaryGraphon, tuple[DictionaryElement, ...]] | None:
    if isinstance(g, DictionaryGraphon) and basis.elements is not None:
        return g, basis.elements
    return None


def coupling_matrix(g: Graphon | Identity, basis: SubspaceBasis) -> Array:
    """
    ``M_kl = <f_k, 𝕋 f_l>``, the d×d projection of an operator.

    The identity gives ``I_d``.
    """
    if isinstance(g, Identity):
        return np.eye(basis.dim)
    pair = _dictionary_pair(g, basis)
    if pair is not None:
        kernel, elements = pair
        index = {e: i for i, e in enumerate(kernel.elements)}
        m = np.zeros((basis.dim, basis.dim))
        for k, ek in enumerate(elements):
            for l_, el in enumerate(elements):
                if ek in index and el in index:
                    m[k, l_] = kernel.coeffs[index[ek], index[el]]
        return m
    image = g.apply(GridFunction(basis.values)).values
    m = basis.values.T @ image / basis.grid_size
    return (m + m.T) / 2


def project_operator(local: Array, g: Graphon | Identity, basis: SubspaceBasis) -> Array:
    """
    Project ``D·𝕋`` to the nd×nd matrix ``M ⊗ D``.

    Args:
        local: The n×n matrix D.
        g: A graphon, or :data:`IDENTITY`.
        basis: The subspace basis.

    Returns:
        ``kron(M, D)``, laid out to match :class:`ProjectedVector`.
    """
    local = np.atleast_2d(np.asarray(local, dtype=float))
    if local.shape[0] != local.shape[1]:
        raise DimensionError(f"local matrix must be square, got {local.shape}")
    return np.kron(coupling_matrix(g, basis), local)


def check_invariance(g: Graphon, basis: SubspaceBasis) -> float:
    """
    Largest ``‖(I − P) g f_l‖`` over the basis functions.

    Zero (to tolerance) certifies that the span of ``basis`` is invariant under
    ``g``.
    """
    pair = _dictionary_pair(g, basis)
    if pair is not None:
        kernel, elements = pair
        # g f_l in element coordinates; the part on elements outside the basis leaks
        outside = [i for i, e in enumerate(kernel.elements) if e not in elements]
        columns = np.zeros((len(outside), basis.dim))
        for position, e in enumerate(elements):
            if e in kernel.elements:
                columns[:, position] = kernel.coeffs[outside, kernel.elements.index(e)]
        return float(np.max(np.linalg.norm(columns, axis=0), initial=0.0))
    image = g.apply(GridFunction(basis.values)).values
    leak = image - basis.values @ (basis.values.T @ image / basis.grid_size)
    norms = np.sqrt(np.sum(leak**2, axis=0) / basis.grid_size)
    return float(np.max(norms, initial=0.0))


def check_lowrank(g: Graphon, basis: SubspaceBasis) -> float:
    """Operator norm of ``residual(g, basis)``; zero certifies an exact low-rank kernel."""
    return operator_norm(residual(g, basis))


@dataclass
class CertificateReport:
    """
    Invariance and low-rank residuals of several operators against one basis.

    Attributes:
        invariance: ``check_invariance`` per operator name.
        lowrank: ``check_lowrank`` per operator name.
        norms: Operator norm per operator name.
        tolerance: Relative threshold; an operator passes when its residual is
            at most ``tolerance · max(‖g‖, 1)``.
        errors: One message per failed check.

    The report is falsy when any check failed. ``invariant`` is true when all
    invariance checks passed, which is enough for approximate control;
    ``exact`` additionally needs every low-rank check to pass.
    """

    invariance: dict[str, float] = field(default_factory=dict)
    lowrank: dict[str, float] = field(default_factory=dict)
    norms: dict[str, float] = field(default_factory=dict)
    tolerance: float = CERTIFICATE_TOLERANCE
    errors: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return not self.errors

    def threshold(self, name: str) -> float:
        return self.tolerance * max(self.norms.get(name, 0.0), 1.0)

    @property
    def invariant(self) -> bool:
        return all(value <= self.threshold(name) for name, value in self.invariance.items())

    @property
    def exact(self) -> bool:
        return self.invariant and all(
            value <= self.threshold(name) for name, value in self.lowrank.items()
        )

    def summary(self) -> str:
        """One line per operator: ``name invariance=… lowrank=…``."""
        return "\n".join(
            f"{name} invariance={self.invariance[name]:.3e} lowrank={self.lowrank[name]:.3e}"
            for name in self.invariance
        )


def certify_graphons(
    graphons: Mapping[str, Graphon],
    basis: SubspaceBasis,
    tolerance: float = CERTIFICATE_TOLERANCE,
) -> CertificateReport:
    """
    Run both certificates on each named operator.

    Returns:
        A :class:`CertificateReport`; failures are recorded, not raised.
    """
    report = CertificateReport(tolerance=tolerance)
    for name, g in graphons.items():
        report.norms[name] = operator_norm(g)
        report.invariance[name] = check_invariance(g, basis)
        report.lowrank[name] = check_lowrank(g, basis)
        _LOG.debug(
            "certificate %s: invariance %.3e, low-rank %.3e",
            name,
            report.invariance[name],
            report.lowrank[name],
        )
        if report.invariance[name] > report.threshold(name):
            report.errors.append(
                f"{name}: subspace not invariant (residual {report.invariance[name]:.3e})"
            )
        elif report.lowrank[name] > report.threshold(name):
            report.errors.append(
                f"{name}: not low-rank in the subspace (residual norm {report.lowrank[name]:.3e})"
            )
    return report
