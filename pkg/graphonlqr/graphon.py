"""
Graphon coupling operators on a uniform grid.

Functions on [0, 1] are represented as :class:`GridFunction` values that are
constant on each of the N intervals of the uniform partition, so the inner
product ``(1/N) Σ_i <u_i, v_i>`` is exact. Two graphon representations are
provided:

- :class:`StepGraphon`, the step-function embedding of an N-node network;
- :class:`DictionaryGraphon`, a finite kernel ``Σ M_lk f_l(x) f_k(y)`` over the
  trigonometric family ``1, √2 sin(2πk·), √2 cos(2πk·)``.

Stochastic block model sampling (via networkx) lives here too, because it is
the source of step graphons in the experiments.
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import networkx as nx
import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import linalg

from graphonlqr.errors import (
    BasisError,
    ConstructionError,
    DimensionError,
    SpectrumRangeError,
)
from graphonlqr.patterns import parse_regex

if TYPE_CHECKING:
    from graphonlqr.subspace import SubspaceBasis

_LOG = logging.getLogger(__name__)

Array = NDArray[np.float64]

GRAM_TOLERANCE = 1e-10


def midpoints(grid_size: int) -> Array:
    """Midpoints ``(i + 1/2) / N`` of the uniform partition of [0, 1]."""
    return (np.arange(grid_size, dtype=float) + 0.5) / grid_size


def _readonly(values: Array) -> Array:
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    An ℝⁿ-valued function on [0, 1], constant on each grid interval.

    Attributes:
        values: ``(N, n)`` array; row ``i`` is the value on interval ``P_i``.
            A 1-D array is read as a scalar function (``n = 1``).
    """

    values: Array

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] == 0:
            raise DimensionError(f"grid function needs shape (N, n), got {values.shape}")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def grid_size(self) -> int:
        return int(self.values.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.values.shape[1])

    def inner(self, other: "GridFunction") -> float:
        """Riemann-sum inner product ``(1/N) Σ_i <u_i, v_i>``."""
        if self.values.shape != other.values.shape:
            raise DimensionError(
                f"inner product of shapes {self.values.shape} and {other.values.shape}"
            )
        return float(np.sum(self.values * other.values) / self.grid_size)

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.values - other.values)

    def __mul__(self, scale: float) -> "GridFunction":
        return GridFunction(self.values * scale)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Spectrum:
    """
    Leading eigenpairs of a graphon.

    Attributes:
        eigenvalues: ``(d,)`` sorted by decreasing ``|λ|``, then decreasing λ.
        coefficients: ``(m, d)`` eigenfunction coordinates. For a step graphon
            these are the grid values themselves (``m = N``); for a dictionary
            graphon they are coordinates in ``elements``.
        elements: Dictionary elements the coefficients refer to, or ``None``
            for grid eigenfunctions.
    """

    eigenvalues: Array
    coefficients: Array
    elements: "tuple[DictionaryElement, ...] | None" = None

    @property
    def count(self) -> int:
        return int(self.eigenvalues.shape[0])

    def eigenfunctions(self, grid_size: int | None = None) -> Array:
        """
        Eigenfunction values on a grid as an ``(N, d)`` array.

        Raises:
            DimensionError: If a dictionary spectrum is sampled without a grid
                size, or a grid spectrum on the wrong grid.
        """
        if self.elements is None:
            if grid_size is not None and grid_size != self.coefficients.shape[0]:
                raise DimensionError(
                    f"eigenfunctions live on a grid of {self.coefficients.shape[0]}, "
                    f"not {grid_size}"
                )
            return self.coefficients
        if grid_size is None:
            raise DimensionError("dictionary eigenfunctions need a grid size")
        return sample_elements(self.elements, grid_size) @ self.coefficients


class Graphon(ABC):
    """A symmetric bounded kernel acting on grid functions by integration."""

    @property
    @abstractmethod
    def grid_size(self) -> int | None:
        """Partition size N for step graphons, ``None`` for grid-free kernels."""

    @abstractmethod
    def apply(self, v: GridFunction) -> GridFunction:
        """``w(x) = ∫ W(x, y) v(y) dy`` on v's grid."""

    @abstractmethod
    def on_grid(self, grid_size: int) -> "StepGraphon":
        """The step graphon this kernel induces on an N-interval grid."""

    @abstractmethod
    def _eigenpairs(self) -> tuple[Array, Array]:
        """All eigenvalues and eigenvector coordinates, unsorted."""

    @abstractmethod
    def _spectrum(self, eigenvalues: Array, coefficients: Array) -> Spectrum: ...


@dataclass(frozen=True, eq=False)
class StepGraphon(Graphon):
    """
    Step-function graphon built from an N×N symmetric matrix.

    ``W(x, y) = w_ij`` on ``P_i × P_j``, so applying it to a grid function gives
    the network coupling ``z_i = (1/N) Σ_j w_ij x_j``.
    """

    weights: Array
    bound: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", _readonly(self.weights))

    @property
    def grid_size(self) -> int:
        return int(self.weights.shape[0])

    partition_size = grid_size

    def apply(self, v: GridFunction) -> GridFunction:
        if v.grid_size != self.grid_size:
            raise DimensionError(
                f"step graphon on {self.grid_size} intervals applied to a grid of {v.grid_size}"
            )
        return GridFunction(self.weights @ v.values / self.grid_size)

    def on_grid(self, grid_size: int) -> "StepGraphon":
        if grid_size != self.grid_size:
            raise DimensionError(
                f"step graphon on {self.grid_size} intervals requested on {grid_size}"
            )
        return self

    def _eigenpairs(self) -> tuple[Array, Array]:
        return linalg.eigh(self.weights / self.grid_size)

    def _spectrum(self, eigenvalues: Array, coefficients: Array) -> Spectrum:
        # unit eigenvectors of W/N become L²-normalized step functions
        return Spectrum(_readonly(eigenvalues), _readonly(np.sqrt(self.grid_size) * coefficients))


def step_from_matrix(
    weights: Sequence[Sequence[float]] | Array, bound: float = 1.0
) -> StepGraphon:
    """
    Embed an N-node network as a step graphon.

    Args:
        weights: N×N coupling matrix; must be exactly symmetric.
        bound: Declared bound ``c`` on ``|w_ij|``.

    Returns:
        The step graphon on the uniform N-partition.

    Raises:
        ConstructionError: If the matrix is not square, not exactly symmetric,
            not finite, or has an entry above ``bound``.

    Example:
        ```python
        g = step_from_matrix([[0, 1], [1, 0]])
        g.apply(GridFunction([1.0, -1.0])).values.ravel()  # [-0.5, 0.5]
        ```
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
        raise ConstructionError(f"graphon weights must be a non-empty square matrix, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ConstructionError("graphon weights contain non-finite entries")
    if not np.array_equal(w, w.T):
        gap = float(np.max(np.abs(w - w.T)))
        raise ConstructionError(f"graphon weights are not symmetric (max |w_ij - w_ji| = {gap:g})")
    if bound < 0:
        raise ConstructionError(f"bound must be nonnegative, got {bound}")
    peak = float(np.max(np.abs(w)))
    if peak > bound:
        raise ConstructionError(f"graphon weight {peak:g} exceeds the declared bound {bound:g}")
    return StepGraphon(w, float(bound))


def _symmetric(matrix: Array) -> Array:
    return (matrix + matrix.T) / 2


def _step_from_derived(weights: Array) -> StepGraphon:
    weights = _symmetric(weights)
    return StepGraphon(weights, float(np.max(np.abs(weights))) if weights.size else 0.0)


ELEMENT_NAME = parse_regex(r"(?P<kind>one|sin|cos)(?P<frequency>\d*)")


@dataclass(frozen=True, order=True)
class DictionaryElement:
    """
    One orthonormal function of the trigonometric dictionary.

    ``one`` is the constant 1; ``sin`` and ``cos`` with frequency ``k ≥ 1`` are
    ``√2 sin(2πk·)`` and ``√2 cos(2πk·)``.
    """

    kind: Literal["one", "sin", "cos"]
    frequency: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("one", "sin", "cos"):
            raise ConstructionError(f"unknown dictionary element kind '{self.kind}'")
        if self.kind == "one" and self.frequency != 0:
            raise ConstructionError("the constant element has no frequency")
        if self.kind != "one" and self.frequency < 1:
            raise ConstructionError(f"{self.kind} elements need a frequency >= 1")

    @classmethod
    def from_name(cls, name: str) -> "DictionaryElement":
        """
        Read ``one``, ``sin3``, ``cos1`` and so on.

        Raises:
            ConstructionError: If the name is not a dictionary element.
        """
        try:
            fields = ELEMENT_NAME.parse(name)
        except ValueError as e:
            raise ConstructionError(f"'{name}' is not a dictionary element") from e
        return cls(fields["kind"], int(fields.get("frequency") or 0))

    @property
    def name(self) -> str:
        return "one" if self.kind == "one" else f"{self.kind}{self.frequency}"

    def sample(self, grid_size: int) -> Array:
        """Values at the interval midpoints."""
        x = midpoints(grid_size)
        if self.kind == "one":
            return np.ones(grid_size)
        phase = 2 * np.pi * self.frequency * x
        return np.sqrt(2.0) * (np.sin(phase) if self.kind == "sin" else np.cos(phase))

    def __str__(self) -> str:
        return self.name


def sample_elements(elements: Sequence[DictionaryElement], grid_size: int) -> Array:
    """``(N, m)`` matrix whose columns are the sampled elements."""
    if not elements:
        return np.zeros((grid_size, 0))
    return np.column_stack([e.sample(grid_size) for e in elements])


@dataclass(frozen=True, eq=False)
class DictionaryGraphon(Graphon):
    """
    Kernel ``W(x, y) = Σ_lk M_lk f_l(x) f_k(y)`` over dictionary elements.

    Sampled at grid midpoints the trigonometric family stays exactly
    orthonormal for frequencies below N/2, so projections of these kernels are
    exact on any reasonably fine grid.
    """

    elements: tuple[DictionaryElement, ...]
    coeffs: Array

    def __post_init__(self) -> None:
        elements = tuple(self.elements)
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if not elements:
            coeffs = np.zeros((0, 0))
        if len(set(elements)) != len(elements):
            raise ConstructionError("dictionary elements must be distinct")
        if coeffs.shape != (len(elements), len(elements)):
            raise ConstructionError(
                f"coefficient matrix {coeffs.shape} does not match {len(elements)} elements"
            )
        if not np.array_equal(coeffs, coeffs.T):
            raise ConstructionError("dictionary coefficient matrix must be symmetric")
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "coeffs", _readonly(coeffs))

    @classmethod
    def zero(cls) -> "DictionaryGraphon":
        return cls((), np.zeros((0, 0)))

    @classmethod
    def constant(cls, value: float = 1.0) -> "DictionaryGraphon":
        """The constant kernel ``W ≡ value``."""
        return cls((DictionaryElement("one"),), np.array([[float(value)]]))

    @classmethod
    def from_terms(
        cls, terms: Iterable[tuple[float, str | DictionaryElement, str | DictionaryElement]]
    ) -> "DictionaryGraphon":
        """
        Build a kernel from ``(coefficient, left, right)`` terms.

        Each term adds ``c·f_left(x) f_right(y)``; repeated pairs accumulate.
        Off-diagonal terms must be given in both orders with equal weight.

        Raises:
            ConstructionError: On unknown element names or an asymmetric result.

        Example:
            ```python
            DictionaryGraphon.from_terms([(0.5, "sin1", "sin1")])
            ```
        """
        elements: list[DictionaryElement] = []
        entries: list[tuple[float, int, int]] = []
        for coefficient, left, right in terms:
            pair = []
            for name in (left, right):
                element = name if isinstance(name, DictionaryElement) else (
                    DictionaryElement.from_name(name)
                )
                if element not in elements:
                    elements.append(element)
                pair.append(elements.index(element))
            entries.append((float(coefficient), pair[0], pair[1]))
        coeffs = np.zeros((len(elements), len(elements)))
        for coefficient, i, j in entries:
            coeffs[i, j] += coefficient
        return cls(tuple(elements), coeffs)

    @property
    def grid_size(self) -> None:
        return None

    @property
    def bound(self) -> float:
        # sup |W| ≤ Σ |M_lk| · sup|f_l| · sup|f_k|
        scale = np.array([1.0 if e.kind == "one" else np.sqrt(2.0) for e in self.elements])
        return float(np.sum(np.abs(self.coeffs) * np.outer(scale, scale)))

    def values_on(self, grid_size: int) -> Array:
        return sample_elements(self.elements, grid_size)

    def apply(self, v: GridFunction) -> GridFunction:
        f = self.values_on(v.grid_size)
        return GridFunction(f @ (self.coeffs @ (f.T @ v.values / v.grid_size)))

    def on_grid(self, grid_size: int) -> StepGraphon:
        f = self.values_on(grid_size)
        return _step_from_derived(f @ self.coeffs @ f.T)

    def _eigenpairs(self) -> tuple[Array, Array]:
        if not self.elements:
            return np.zeros(0), np.zeros((0, 0))
        return linalg.eigh(self.coeffs)

    def _spectrum(self, eigenvalues: Array, coefficients: Array) -> Spectrum:
        return Spectrum(_readonly(eigenvalues), _readonly(coefficients), self.elements)


def apply(g: Graphon, v: GridFunction) -> GridFunction:
    """
    Apply a graphon to a grid function.

    Raises:
        DimensionError: If a step graphon's grid differs from ``v``'s.
    """
    return g.apply(v)


def _ordering(eigenvalues: Array) -> NDArray[np.intp]:
    scale = max(float(np.max(np.abs(eigenvalues), initial=0.0)), np.finfo(float).tiny)
    # rounding makes numerically tied magnitudes compare equal
    magnitude = np.round(np.abs(eigenvalues) / scale, 10)
    signed = np.round(eigenvalues / scale, 10)
    index = np.arange(eigenvalues.shape[0])
    return np.lexsort((index, -signed, -magnitude))


def _fix_signs(vectors: Array) -> Array:
    vectors = vectors.copy()
    for k in range(vectors.shape[1]):
        column = vectors[:, k]
        nonzero = np.flatnonzero(np.abs(column) > 1e-12 * max(np.max(np.abs(column)), 1e-300))
        if nonzero.size and column[nonzero[0]] < 0:
            vectors[:, k] = -column
    return vectors


def spectral_decomposition(g: Graphon, count: int) -> Spectrum:
    """
    The ``count`` leading eigenpairs of a graphon.

    Eigenvalues are ordered by decreasing ``|λ|``, ties by decreasing λ and then
    by original index. Each eigenfunction's first nonzero coordinate is
    positive. For a step graphon a unit eigenvector ``v`` of ``W/N`` becomes the
    step function with value ``√N·v_i`` on ``P_i``.

    Args:
        g: The graphon.
        count: Number of eigenpairs ``d ≥ 1``.

    Returns:
        A :class:`Spectrum` with L²-orthonormal eigenfunctions.

    Raises:
        SpectrumRangeError: If ``count`` is below 1 or above N (step graphons)
            or the dictionary size.
    """
    eigenvalues, vectors = g._eigenpairs()
    available = eigenvalues.shape[0]
    if count < 1 or count > available:
        raise SpectrumRangeError(
            f"requested {count} eigenpairs from an operator with {available} available"
        )
    order = _ordering(eigenvalues)[:count]
    _LOG.debug("spectral decomposition: %d of %d eigenpairs", count, available)
    return g._spectrum(eigenvalues[order], _fix_signs(vectors[:, order]))


def operator_norm(g: Graphon) -> float:
    """Largest ``|λ|`` of the graphon (0 for the zero kernel)."""
    eigenvalues, _ = g._eigenpairs()
    return float(np.max(np.abs(eigenvalues), initial=0.0))


def _require_orthonormal(basis: "SubspaceBasis") -> None:
    error = basis.gram_error()
    if error > GRAM_TOLERANCE:
        raise BasisError(f"basis is not orthonormal (Gram deviation {error:.3g})")


def _joint_coordinates(
    g: DictionaryGraphon, basis_elements: tuple[DictionaryElement, ...]
) -> tuple[tuple[DictionaryElement, ...], Array, Array]:
    joint = list(g.elements)
    joint.extend(e for e in basis_elements if e not in joint)
    m = len(joint)
    coeffs = np.zeros((m, m))
    k = len(g.elements)
    coeffs[:k, :k] = g.coeffs
    selector = np.zeros((m, len(basis_elements)))
    for column, element in enumerate(basis_elements):
        selector[joint.index(element), column] = 1.0
    return tuple(joint), coeffs, selector


def restrict(g: Graphon, basis: "SubspaceBasis") -> Graphon:
    """
    The equivalent operator ``P g P`` of ``g`` in the span of ``basis``.

    Dictionary kernels paired with a dictionary basis stay analytic; everything
    else is computed on the basis grid.

    Raises:
        BasisError: If the basis is not orthonormal.
    """
    _require_orthonormal(basis)
    if isinstance(g, DictionaryGraphon) and basis.elements is not None:
        joint, coeffs, selector = _joint_coordinates(g, basis.elements)
        projector = selector @ selector.T
        return DictionaryGraphon(joint, _symmetric(projector @ coeffs @ projector))
    f = basis.values
    n = basis.grid_size
    w = g.on_grid(n).weights
    inner = f.T @ w @ f / n**2
    return _step_from_derived(f @ inner @ f.T)


def residual(g: Graphon, basis: "SubspaceBasis") -> Graphon:
    """
    The part of ``g`` outside the subspace: ``g − P g P``.

    When the span of ``basis`` is invariant under ``g``, the residual
    annihilates the subspace and ``g = restrict(g, basis) + residual(g, basis)``.

    Raises:
        BasisError: If the basis is not orthonormal.
    """
    _require_orthonormal(basis)
    if isinstance(g, DictionaryGraphon) and basis.elements is not None:
        joint, coeffs, selector = _joint_coordinates(g, basis.elements)
        projector = selector @ selector.T
        return DictionaryGraphon(joint, _symmetric(coeffs - projector @ coeffs @ projector))
    f = basis.values
    n = basis.grid_size
    w = g.on_grid(n).weights
    inner = f.T @ w @ f / n**2
    return _step_from_derived(w - f @ inner @ f.T)


def truncate(g: Graphon, count: int) -> Graphon:
    """
    Best rank-``count`` approximation of ``g`` from its leading eigenpairs.

    Raises:
        SpectrumRangeError: As :func:`spectral_decomposition`.
    """
    spectrum = spectral_decomposition(g, count)
    c, lam = spectrum.coefficients, spectrum.eigenvalues
    kept = c @ np.diag(lam) @ c.T
    if isinstance(g, DictionaryGraphon):
        return DictionaryGraphon(g.elements, _symmetric(kept))
    return _step_from_derived(kept)


def polynomial(g: Graphon, linear: float, square: float, grid_size: int | None = None) -> Graphon:
    """
    The kernel of ``linear·g + square·g∘g``.

    Dictionary kernels stay analytic (their elements are orthonormal, so the
    square's coefficients are ``C @ C``); step graphons compose as
    ``W @ W / N``. A grid-free kernel is sampled on ``grid_size`` when given.
    """
    if isinstance(g, DictionaryGraphon) and grid_size is None:
        coeffs = linear * g.coeffs + square * g.coeffs @ g.coeffs
        return DictionaryGraphon(g.elements, _symmetric(coeffs))
    step = g.on_grid(grid_size) if grid_size is not None else g.on_grid(g.grid_size or 0)
    w = step.weights
    return _step_from_derived(linear * w + square * (w @ w) / step.grid_size)


class SbmSpec(BaseModel):
    """
    A stochastic block model.

    Attributes:
        block_probs: K×K symmetric connection probabilities in [0, 1].
        block_sizes: K positive block sizes summing to N.
        seed: Seed of the sample.
    """

    model_config = ConfigDict(frozen=True)

    block_probs: tuple[tuple[float, ...], ...]
    block_sizes: tuple[int, ...]
    seed: int = 0

    @field_validator("block_sizes")
    @classmethod
    def _positive_sizes(cls, sizes: tuple[int, ...]) -> tuple[int, ...]:
        if not sizes or any(s <= 0 for s in sizes):
            raise ValueError(f"block sizes must be positive, got {list(sizes)}")
        return sizes

    @model_validator(mode="after")
    def _check_probabilities(self) -> "SbmSpec":
        p = np.array(self.block_probs, dtype=float)
        k = len(self.block_sizes)
        if p.shape != (k, k):
            raise ValueError(f"block_probs must be {k}x{k} for {k} blocks, got {p.shape}")
        if not np.array_equal(p, p.T):
            raise ValueError("block_probs must be symmetric")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("block_probs must lie in [0, 1]")
        return self

    @property
    def grid_size(self) -> int:
        return int(sum(self.block_sizes))

    def labels(self) -> NDArray[np.intp]:
        """Block index of every node."""
        return np.repeat(np.arange(len(self.block_sizes)), self.block_sizes)


def sample_sbm(spec: SbmSpec) -> Array:
    """
    Sample a symmetric 0/1 adjacency matrix with zero diagonal.

    The same ``SbmSpec``, seed included, always gives the same matrix.

    Example:
        ```python
        spec = SbmSpec(block_probs=((1.0,),), block_sizes=(3,), seed=0)
        sample_sbm(spec)  # ones off the diagonal
        ```
    """
    graph = nx.stochastic_block_model(
        list(spec.block_sizes),
        [list(row) for row in spec.block_probs],
        seed=spec.seed,
        directed=False,
        selfloops=False,
    )
    adjacency = nx.to_numpy_array(graph, nodelist=list(range(spec.grid_size)), dtype=float)
    _LOG.debug(
        "sampled SBM with %d nodes and %d edges (seed %d)",
        spec.grid_size,
        graph.number_of_edges(),
        spec.seed,
    )
    return np.asarray(adjacency, dtype=float)


def sbm_graphon(spec: SbmSpec) -> StepGraphon:
    """A sampled SBM network as a step graphon."""
    return step_from_matrix(sample_sbm(spec), 1.0)


def sbm_limit(spec: SbmSpec) -> StepGraphon:
    """
    The block-constant expected-adjacency graphon of an SBM.

    Its rank is the rank of ``block_probs``; it is the limit the sampled
    networks approach as the blocks grow.
    """
    labels = spec.labels()
    p = np.array(spec.block_probs, dtype=float)
    return step_from_matrix(p[np.ix_(labels, labels)], 1.0)
