"""
Coupling models, their projected systems and matrix Riccati solvers.

A :class:`CouplingModel` describes a graphon LQR problem::

    ẋ = [L_a 𝕀 + D_a 𝐀] x + [L_b 𝕀 + D_b 𝐁] u
    J = ∫ <x, [L_q 𝕀 + D_q 𝐐] x> + <u, u> dt + <x_T, [L_qT 𝕀 + D_qT 𝐐_T] x_T>

On a common invariant subspace the problem splits into an nd-dimensional
projected problem (:func:`assemble_projected`) and an n-dimensional auxiliary
one. Both, and the centralized oracle, are solved by :func:`solve_riccati`:
classical RK4 backward from the terminal time at a uniform step, with the
iterate symmetrized after every step.
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from graphonlqr.errors import (
    CertificateError,
    ConstructionError,
    DimensionError,
    HorizonError,
    RiccatiIntegrationError,
)
from graphonlqr.graphon import Array, DictionaryGraphon, Graphon
from graphonlqr.subspace import (
    CERTIFICATE_TOLERANCE,
    IDENTITY,
    CertificateReport,
    SubspaceBasis,
    certify_graphons,
    coupling_matrix,
    project_operator,
)

_LOG = logging.getLogger(__name__)

DEFAULT_STEPS = 200
ROLES = ("A", "B", "Q", "QT")

MatrixLike = float | Array | list[list[float]]


def _as_matrix(value: MatrixLike, dimension: int, name: str) -> Array:
    matrix = np.atleast_2d(np.asarray(value, dtype=float))
    if matrix.shape == (1, 1) and dimension != 1:
        return float(matrix[0, 0]) * np.eye(dimension)
    if matrix.shape != (dimension, dimension):
        raise ConstructionError(f"{name} must be {dimension}x{dimension}, got {matrix.shape}")
    return matrix


@dataclass(frozen=True, eq=False)
class CouplingModel:
    """
    Local parameter matrices, coupling graphons and horizon of a problem.

    Use :meth:`create` to build one from scalars or matrices.
    """

    l_a: Array
    d_a: Array
    l_b: Array
    d_b: Array
    l_q: Array
    d_q: Array
    l_qt: Array
    d_qt: Array
    a_graphon: Graphon
    b_graphon: Graphon
    q_graphon: Graphon
    qt_graphon: Graphon
    horizon: float = 1.0

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ConstructionError(f"horizon must be positive, got {self.horizon}")
        n = np.atleast_2d(np.asarray(self.l_a)).shape[0]
        for name in ("l_a", "d_a", "l_b", "d_b", "l_q", "d_q", "l_qt", "d_qt"):
            matrix = _as_matrix(getattr(self, name), n, name)
            if not np.all(np.isfinite(matrix)):
                raise ConstructionError(f"{name} has non-finite entries")
            matrix.setflags(write=False)
            object.__setattr__(self, name, matrix)
        sizes = {g.grid_size for g in self.graphons().values() if g.grid_size is not None}
        if len(sizes) > 1:
            raise ConstructionError(f"step graphons live on different grids: {sorted(sizes)}")

    @classmethod
    def create(
        cls,
        *,
        L_a: MatrixLike = 0.0,
        D_a: MatrixLike = 0.0,
        L_b: MatrixLike = 0.0,
        D_b: MatrixLike = 0.0,
        L_q: MatrixLike = 0.0,
        D_q: MatrixLike = 0.0,
        L_qT: MatrixLike = 0.0,
        D_qT: MatrixLike = 0.0,
        A: Graphon | None = None,
        B: Graphon | None = None,
        Q: Graphon | None = None,
        QT: Graphon | None = None,
        horizon: float = 1.0,
        dimension: int | None = None,
    ) -> "CouplingModel":
        """
        Build a model; scalars broadcast to ``s·I`` and missing graphons are zero.

        Args:
            dimension: Local state dimension n; inferred from the first
                non-scalar matrix when omitted.

        Example:
            ```python
            model = CouplingModel.create(L_a=2, D_a=1, L_b=1.2, A=DictionaryGraphon.constant())
            ```
        """
        locals_ = {"l_a": L_a, "d_a": D_a, "l_b": L_b, "d_b": D_b}
        locals_ |= {"l_q": L_q, "d_q": D_q, "l_qt": L_qT, "d_qt": D_qT}
        if dimension is None:
            shapes = [np.atleast_2d(np.asarray(v, dtype=float)).shape[0] for v in locals_.values()]
            dimension = max(shapes)
        matrices = {name: _as_matrix(value, dimension, name) for name, value in locals_.items()}
        zero = DictionaryGraphon.zero()
        return cls(
            **matrices,
            a_graphon=A if A is not None else zero,
            b_graphon=B if B is not None else zero,
            q_graphon=Q if Q is not None else zero,
            qt_graphon=QT if QT is not None else zero,
            horizon=float(horizon),
        )

    @property
    def dimension(self) -> int:
        return int(self.l_a.shape[0])

    @property
    def grid_size(self) -> int | None:
        """Grid of the model's step graphons, if it has any."""
        for g in self.graphons().values():
            if g.grid_size is not None:
                return g.grid_size
        return None

    def graphons(self) -> dict[str, Graphon]:
        return {
            "A": self.a_graphon,
            "B": self.b_graphon,
            "Q": self.q_graphon,
            "QT": self.qt_graphon,
        }

    def pairs(self) -> dict[str, tuple[Array, Array, Graphon]]:
        """``(L, D, graphon)`` per operator role."""
        return {
            "A": (self.l_a, self.d_a, self.a_graphon),
            "B": (self.l_b, self.d_b, self.b_graphon),
            "Q": (self.l_q, self.d_q, self.q_graphon),
            "QT": (self.l_qt, self.d_qt, self.qt_graphon),
        }


@dataclass(frozen=True, eq=False)
class ProjectedModel:
    """The nd-dimensional projected system ``I ⊗ L + M ⊗ D`` per role."""

    a_bar: Array
    b_bar: Array
    q_bar: Array
    qt_bar: Array
    couplings: Mapping[str, Array]


@dataclass(frozen=True)
class ResidualNorms:
    """Operator norms of the residual couplings outside the subspace."""

    a: float = 0.0
    b: float = 0.0
    q: float = 0.0
    qt: float = 0.0

    def __post_init__(self) -> None:
        for name in ("a", "b", "q", "qt"):
            if getattr(self, name) < 0:
                raise ConstructionError(f"residual norm {name} must be nonnegative")

    @classmethod
    def from_report(cls, report: CertificateReport) -> "ResidualNorms":
        low = report.lowrank
        return cls(low["A"], low["B"], low["Q"], low["QT"])

    def as_dict(self) -> dict[str, float]:
        return {"A": self.a, "B": self.b, "Q": self.q, "QT": self.qt}


def full_operator(local: Array, coupling: Array, g: Graphon, grid_size: int) -> Array:
    """
    ``I_N ⊗ L + (W/N) ⊗ D`` on agent-major stacked states.

    Row ``γ·n + i`` belongs to component ``i`` of agent ``γ``.
    """
    weights = g.on_grid(grid_size).weights
    return np.kron(np.eye(grid_size), local) + np.kron(weights / grid_size, coupling)


def cost_is_psd(
    model: CouplingModel, grid_size: int | None = None, tolerance: float = 1e-8
) -> bool:
    """
    Check that both cost operators are positive semidefinite on a test grid.

    Args:
        grid_size: Test grid; defaults to the model grid, or 32 for
            grid-free models.
    """
    grid = grid_size or model.grid_size or 32
    for name, (local, coupling, g) in model.pairs().items():
        if name not in ("Q", "QT"):
            continue
        full = full_operator(local, coupling, g, grid)
        smallest = float(np.min(linalg.eigvalsh((full + full.T) / 2)))
        if smallest < -tolerance:
            _LOG.warning("cost operator %s is indefinite (min eigenvalue %.3e)", name, smallest)
            return False
    return True


def certify(
    model: CouplingModel, basis: SubspaceBasis, tolerance: float = CERTIFICATE_TOLERANCE
) -> CertificateReport:
    """Invariance and low-rank certificates for all four coupling operators."""
    report = certify_graphons(model.graphons(), basis, tolerance)
    for name in ROLES:
        _LOG.info(
            "%s: invariance residual %.3e, low-rank residual %.3e",
            name,
            report.invariance[name],
            report.lowrank[name],
        )
    return report


def assemble_projected(
    model: CouplingModel,
    basis: SubspaceBasis,
    report: CertificateReport | None = None,
) -> ProjectedModel:
    """
    Project the model onto the subspace spanned by ``basis``.

    Args:
        model: The coupling model.
        basis: Basis of a subspace invariant under all four graphons.
        report: A certificate already computed for this pair, to avoid
            recomputing it.

    Returns:
        ``Ā = I⊗L_a + A⊗D_a`` and likewise ``B̄``, ``Q̄``, ``Q̄_T``.

    Raises:
        CertificateError: If the subspace is not invariant for some operator;
            the report lists the residual of each.
    """
    report = report if report is not None else certify(model, basis)
    if not report.invariant:
        failing = [m for m in report.errors if "invariant" in m]
        raise CertificateError(
            "basis is not invariant under every coupling operator: " + "; ".join(failing), report
        )
    couplings = {name: coupling_matrix(g, basis) for name, g in model.graphons().items()}
    bars = {
        name: project_operator(local, IDENTITY, basis) + project_operator(coupling, g, basis)
        for name, (local, coupling, g) in model.pairs().items()
    }
    for name in ("Q", "QT"):
        smallest = float(np.min(linalg.eigvalsh((bars[name] + bars[name].T) / 2)))
        if smallest < -1e-10:
            _LOG.warning("projected %s weight is indefinite (min eigenvalue %.3e)", name, smallest)
    _LOG.debug("assembled projected model of size %d", bars["A"].shape[0])
    return ProjectedModel(bars["A"], bars["B"], bars["Q"], bars["QT"], couplings)


@dataclass(frozen=True, eq=False)
class RiccatiTrajectory:
    """
    A Riccati solution on a uniform time grid.

    Attributes:
        time_grid: ``(M+1,)`` times ``0 = t_0 < … < t_M = T``.
        matrices: ``(M+1, m, m)``; ``matrices[k]`` is ``Π(t_k)``.
    """

    time_grid: Array
    matrices: Array

    @property
    def horizon(self) -> float:
        return float(self.time_grid[-1])

    @property
    def steps(self) -> int:
        return int(self.time_grid.shape[0] - 1)

    @property
    def size(self) -> int:
        return int(self.matrices.shape[1])

    def at(self, t: float) -> Array:
        """
        ``Π(t)`` by linear interpolation between grid points.

        Raises:
            HorizonError: If ``t`` is outside ``[0, T]``.
        """
        horizon = self.horizon
        slack = 1e-12 * max(horizon, 1.0)
        if t < -slack or t > horizon + slack:
            raise HorizonError(f"time {t} is outside the horizon [0, {horizon}]")
        position = min(max(t, 0.0), horizon) / horizon * self.steps
        k = min(int(np.floor(position)), self.steps - 1)
        weight = position - k
        if weight == 0.0:
            return self.matrices[k]
        return (1 - weight) * self.matrices[k] + weight * self.matrices[k + 1]


def _riccati_rate(a: Array, s: Array, q: Array, p: Array) -> Array:
    return a.T @ p + p @ a - p @ s @ p + q


def _integrate_backward(
    a: Array, s: Array, q: Array, qt: Array, horizon: float, steps: int
) -> RiccatiTrajectory:
    """RK4 for ``dΠ/dτ = AᵀΠ + ΠA − ΠSΠ + Q`` in reversed time ``τ = T − t``."""
    if steps < 1:
        raise ConstructionError(f"steps must be at least 1, got {steps}")
    if not horizon > 0:
        raise ConstructionError(f"horizon must be positive, got {horizon}")
    h = horizon / steps
    time_grid = np.linspace(0.0, horizon, steps + 1)
    matrices = np.empty((steps + 1, *qt.shape))
    matrices[steps] = qt
    p = np.array(qt, dtype=float)
    for k in range(steps - 1, -1, -1):
        k1 = _riccati_rate(a, s, q, p)
        k2 = _riccati_rate(a, s, q, p + 0.5 * h * k1)
        k3 = _riccati_rate(a, s, q, p + 0.5 * h * k2)
        k4 = _riccati_rate(a, s, q, p + h * k3)
        p = p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        p = 0.5 * (p + p.T)
        if not np.all(np.isfinite(p)):
            raise RiccatiIntegrationError(
                f"Riccati solution became non-finite at t = {time_grid[k]:.6g}", float(time_grid[k])
            )
        matrices[k] = p
    matrices.setflags(write=False)
    time_grid.setflags(write=False)
    return RiccatiTrajectory(time_grid, matrices)


def _square(name: str, matrix: Array, size: int | None = None) -> Array:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] != matrix.shape[1] or (size is not None and matrix.shape[0] != size):
        raise DimensionError(f"{name} must be square of size {size}, got {matrix.shape}")
    return matrix


def solve_riccati(
    a_bar: Array,
    b_bar: Array,
    q_bar: Array,
    qt_bar: Array,
    horizon: float,
    steps: int = DEFAULT_STEPS,
) -> RiccatiTrajectory:
    """
    Solve ``−Π̇ = ĀᵀΠ + ΠĀ − ΠB̄B̄ᵀΠ + Q̄`` with ``Π(T) = Q̄_T``.

    Integration is classical fourth-order Runge–Kutta backward in time at the
    uniform step ``T/M``, symmetrizing the iterate after each step.

    Args:
        a_bar: Drift matrix, m×m.
        b_bar: Input matrix with m rows.
        q_bar: Symmetric PSD running weight.
        qt_bar: Symmetric PSD terminal weight.
        horizon: Final time T.
        steps: Number of time steps M.

    Returns:
        The trajectory on ``t_k = kT/M``; its last matrix is ``qt_bar`` itself.

    Raises:
        RiccatiIntegrationError: If the solution becomes non-finite.
        DimensionError: If the matrix sizes disagree.

    Example:
        ```python
        traj = solve_riccati([[0.0]], [[1.0]], [[0.0]], [[2.0]], horizon=1.0)
        traj.at(0.0)  # ≈ 2 / (1 + 2)
        ```
    """
    a = _square("a_bar", a_bar)
    m = a.shape[0]
    b = np.atleast_2d(np.asarray(b_bar, dtype=float))
    if b.shape[0] != m:
        raise DimensionError(f"b_bar must have {m} rows, got {b.shape}")
    q = _square("q_bar", q_bar, m)
    qt = _square("qt_bar", qt_bar, m)
    for name, weight in (("q_bar", q), ("qt_bar", qt)):
        if not np.allclose(weight, weight.T, rtol=0.0, atol=1e-10):
            raise ConstructionError(f"{name} must be symmetric")
    _LOG.debug("solving Riccati equation of size %d with %d steps", m, steps)
    return _integrate_backward(a, b @ b.T, q, qt, float(horizon), steps)


def solve_auxiliary(model: CouplingModel, steps: int = DEFAULT_STEPS) -> RiccatiTrajectory:
    """
    The n×n auxiliary Riccati equation on the orthogonal complement.

    ``−π̇ = L_aᵀπ + πL_a − πL_bL_bᵀπ + L_q``, ``π(T) = L_qT``.
    """
    return solve_riccati(model.l_a, model.l_b, model.l_q, model.l_qt, model.horizon, steps)


def check_robust_conditions(model: CouplingModel) -> list[str]:
    """
    Applicability conditions of the robust auxiliary equation.

    Returns one message per violated condition: ``D_qT > 0``, ``D_q ≥ 0``,
    ``D_b L_bᵀ ≥ 0`` and eigenvalues of ``D_a`` with nonnegative real part.
    A non-normal ``L_b`` is also reported, since the robust equation then does
    not reduce to the auxiliary one at zero residuals.
    """
    issues = []

    def smallest(matrix: Array) -> float:
        return float(np.min(linalg.eigvalsh((matrix + matrix.T) / 2)))

    if smallest(model.d_qt) <= 0:
        issues.append("D_qT is not positive definite")
    if smallest(model.d_q) < 0:
        issues.append("D_q is not positive semidefinite")
    if smallest(model.d_b @ model.l_b.T) < 0:
        issues.append("D_b L_b^T is not positive semidefinite")
    if np.min(np.real(linalg.eigvals(model.d_a))) < 0:
        issues.append("D_a has an eigenvalue with negative real part")
    l_b = model.l_b
    if not np.allclose(l_b.T @ l_b, l_b @ l_b.T, rtol=0.0, atol=1e-12):
        issues.append("L_b is not normal; the robust equation uses L_b^T L_b")
    return issues


def solve_robust_auxiliary(
    model: CouplingModel, norms: ResidualNorms, steps: int = DEFAULT_STEPS
) -> RiccatiTrajectory:
    """
    Auxiliary Riccati equation inflated by the residual operator norms.

    Uses drift ``L_a + D_a·a⊥``, control-energy matrix
    ``L_bᵀL_b − D_bL_bᵀ·b⊥ − L_bD_bᵀ·b⊥``, running weight ``L_q + D_q·q⊥`` and
    terminal weight ``L_qT + D_qT·qT⊥``. The applicability conditions of
    :func:`check_robust_conditions` are logged as warnings, not enforced.

    Raises:
        RiccatiIntegrationError: If an indefinite control-energy matrix makes
            the solution blow up.
    """
    for issue in check_robust_conditions(model):
        _LOG.warning("robust auxiliary equation: %s", issue)
    drift = model.l_a + model.d_a * norms.a
    energy = model.l_b.T @ model.l_b - (model.d_b @ model.l_b.T) * norms.b
    energy = energy - (model.l_b @ model.d_b.T) * norms.b
    weight = model.l_q + model.d_q * norms.q
    terminal = model.l_qt + model.d_qt * norms.qt
    smallest = float(np.min(linalg.eigvalsh((energy + energy.T) / 2)))
    if smallest < 0:
        _LOG.warning("robust control-energy matrix is indefinite (min eigenvalue %.3e)", smallest)
    try:
        return _integrate_backward(drift, energy, weight, terminal, model.horizon, steps)
    except RiccatiIntegrationError as e:
        raise RiccatiIntegrationError(
            f"{e} (robust auxiliary equation; control-energy min eigenvalue {smallest:.3e}, "
            f"residual norms A={norms.a:.3g} B={norms.b:.3g})",
            e.time,
        ) from e


def residual_norms(model: CouplingModel, basis: SubspaceBasis) -> ResidualNorms:
    """Residual operator norms of the four couplings against ``basis``."""
    return ResidualNorms.from_report(certify_graphons(model.graphons(), basis))
