"""
Feedback synthesis on top of the subspace decomposition.

- :func:`synthesize_exact`: the optimal law when every coupling is exactly
  low-rank in the subspace;
- :func:`synthesize_approximate`: same projected gain, auxiliary gain from the
  robust Riccati equation inflated by the residual operator norms;
- :func:`evaluate_nodal`: one agent's share of a law, from its own state and
  the shared aggregate;
- :func:`expand_oscillator` and :func:`oscillator_law`: the coupled harmonic
  oscillator model, solved mode by mode.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import linalg

from graphonlqr.errors import (
    CertificateError,
    ConstructionError,
    DimensionError,
    HorizonError,
    SpectrumRangeError,
)
from graphonlqr.graphon import Array, DictionaryGraphon, Graphon, polynomial, spectral_decomposition
from graphonlqr.riccati import (
    DEFAULT_STEPS,
    CouplingModel,
    ResidualNorms,
    RiccatiTrajectory,
    assemble_projected,
    certify,
    solve_auxiliary,
    solve_riccati,
    solve_robust_auxiliary,
)
from graphonlqr.subspace import (
    CERTIFICATE_TOLERANCE,
    CertificateReport,
    ProjectedVector,
    SubspaceBasis,
)

_LOG = logging.getLogger(__name__)

Mode = Literal["exact", "approximate"]


@dataclass(frozen=True, eq=False)
class ControlLaw:
    """
    A synthesized feedback law.

    At time t the subspace part of the state is driven by
    ``u^p = −B̄ᵀΠ(t) x^p`` and each agent's auxiliary state by
    ``ŭ = −L_bᵀπ(t) x̆``; the applied control is ``ŭ + Σ_l u^{p l} f_l``.

    Attributes:
        basis: Subspace basis.
        projected_riccati: Π on the nd-dimensional projected problem.
        auxiliary_riccati: π on the n-dimensional auxiliary problem.
        a_bar: Projected drift, used to precompute the aggregate trajectory.
        b_bar: Projected input matrix.
        l_b: Local input matrix.
        mode: ``exact`` or ``approximate``.
        residual_norms: Residual operator norms used for the auxiliary gain.
        certificate: Certificates computed during synthesis, if any.
        synthesis_seconds: Wall time spent synthesizing.
    """

    basis: SubspaceBasis
    projected_riccati: RiccatiTrajectory
    auxiliary_riccati: RiccatiTrajectory
    a_bar: Array
    b_bar: Array
    l_b: Array
    mode: Mode = "exact"
    residual_norms: ResidualNorms = field(default_factory=ResidualNorms)
    certificate: CertificateReport | None = None
    synthesis_seconds: float = 0.0

    def __post_init__(self) -> None:
        if not np.array_equal(
            self.projected_riccati.time_grid, self.auxiliary_riccati.time_grid
        ):
            raise ConstructionError("projected and auxiliary Riccati grids differ")
        expected = self.basis.dim * self.dimension
        if self.projected_riccati.size != expected:
            raise DimensionError(
                f"projected Riccati of size {self.projected_riccati.size}, expected {expected}"
            )

    @property
    def horizon(self) -> float:
        return self.projected_riccati.horizon

    @property
    def dimension(self) -> int:
        return int(self.l_b.shape[0])

    def projected_gain(self, t: float) -> Array:
        """``−B̄ᵀΠ(t)``."""
        return -self.b_bar.T @ self.projected_riccati.at(t)

    def auxiliary_gain(self, t: float) -> Array:
        """``−L_bᵀπ(t)``."""
        return -self.l_b.T @ self.auxiliary_riccati.at(t)

    def control(self, t: float, states: Array) -> Array:
        """
        The centralized control field for an ``(N, n)`` state.

        Raises:
            DimensionError: If the state grid differs from the basis grid.
            HorizonError: If ``t`` is outside ``[0, T]``.
        """
        f = self.basis.values
        if states.shape != (self.basis.grid_size, self.dimension):
            raise DimensionError(
                f"state of shape {states.shape} for a law on "
                f"({self.basis.grid_size}, {self.dimension})"
            )
        p = f.T @ states / self.basis.grid_size
        auxiliary = states - f @ p
        up = (self.projected_gain(t) @ p.ravel()).reshape(p.shape)
        return auxiliary @ self.auxiliary_gain(t).T + f @ up

    def projected_path(self, x0p: ProjectedVector, steps: int | None = None) -> Array:
        """
        Precompute the aggregate ``x^p`` along the projected closed loop.

        Integrates ``ẋ^p = (Ā − B̄B̄ᵀΠ(t)) x^p`` forward with RK4 on the law's
        time grid; agents evaluating :func:`evaluate_nodal` read it instead of
        exchanging states.

        Returns:
            ``(M+1, nd)`` coordinates at the Riccati grid points.
        """
        steps = steps or self.projected_riccati.steps
        h = self.horizon / steps
        path = np.empty((steps + 1, x0p.coords.shape[0]))
        path[0] = x0p.coords

        def rate(t: float, x: Array) -> Array:
            return self.a_bar @ x + self.b_bar @ (self.projected_gain(t) @ x)

        for k in range(steps):
            t, x = k * h, path[k]
            k1 = rate(t, x)
            k2 = rate(t + h / 2, x + h / 2 * k1)
            k3 = rate(t + h / 2, x + h / 2 * k2)
            k4 = rate(min(t + h, self.horizon), x + h * k3)
            path[k + 1] = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return path


def evaluate_nodal(
    law: ControlLaw,
    t: float,
    local_state: Array,
    projected_state: Array | ProjectedVector,
    basis_values: Array,
) -> Array:
    """
    One agent's control from its own state and the shared aggregate.

    Args:
        law: The synthesized law.
        t: Time in ``[0, T]``.
        local_state: The agent's state ``x(γ) ∈ ℝⁿ``.
        projected_state: Aggregate ``x^p ∈ ℝ^{nd}``.
        basis_values: ``f_1(γ) … f_d(γ)``.

    Returns:
        ``−L_bᵀπ(t) x̆(γ) + Σ_l f_l(γ) u^{p l}`` with
        ``x̆(γ) = x(γ) − Σ_l x^{p l} f_l(γ)``.

    Raises:
        HorizonError: If ``t`` is outside ``[0, T]``.
    """
    if t < 0 or t > law.horizon:
        raise HorizonError(f"time {t} is outside the horizon [0, {law.horizon}]")
    coords = projected_state.coords if isinstance(projected_state, ProjectedVector) else (
        np.asarray(projected_state, dtype=float)
    )
    f = np.asarray(basis_values, dtype=float).ravel()
    x = np.asarray(local_state, dtype=float).ravel()
    p = coords.reshape(law.basis.dim, law.dimension)
    auxiliary = x - p.T @ f
    up = (law.projected_gain(t) @ coords).reshape(p.shape)
    return law.auxiliary_gain(t) @ auxiliary + up.T @ f


def _check_grid(model: CouplingModel, basis: SubspaceBasis) -> None:
    if model.grid_size is not None and model.grid_size != basis.grid_size:
        raise DimensionError(
            f"model graphons live on a grid of {model.grid_size}, basis on {basis.grid_size}"
        )


def synthesize_exact(
    model: CouplingModel,
    basis: SubspaceBasis,
    steps: int = DEFAULT_STEPS,
    tolerance: float = CERTIFICATE_TOLERANCE,
) -> ControlLaw:
    """
    The optimal law for a model whose couplings are exactly low-rank in the subspace.

    Args:
        model: The coupling model.
        basis: Basis of the common invariant subspace.
        steps: Riccati time steps.
        tolerance: Relative certificate threshold.

    Raises:
        CertificateError: If invariance or the low-rank condition fails for
            any coupling; use :func:`synthesize_approximate` instead.

    Example:
        ```python
        law = synthesize_exact(model, SubspaceBasis.from_dictionary(["sin1", "cos1"], 40))
        ```
    """
    _check_grid(model, basis)
    started = time.perf_counter()
    report = certify(model, basis, tolerance)
    if not report.exact:
        raise CertificateError(
            "exact synthesis needs every coupling to be low-rank in the subspace ("
            + "; ".join(report.errors)
            + "); use synthesize_approximate",
            report,
        )
    projected = assemble_projected(model, basis, report)
    pi = solve_riccati(
        projected.a_bar, projected.b_bar, projected.q_bar, projected.qt_bar, model.horizon, steps
    )
    aux = solve_auxiliary(model, steps)
    elapsed = time.perf_counter() - started
    _LOG.info(
        "exact law synthesized: projected size %d, auxiliary size %d, %.3fs",
        pi.size,
        aux.size,
        elapsed,
    )
    return ControlLaw(
        basis,
        pi,
        aux,
        projected.a_bar,
        projected.b_bar,
        model.l_b,
        "exact",
        ResidualNorms.from_report(report),
        report,
        elapsed,
    )


def synthesize_approximate(
    model: CouplingModel,
    basis: SubspaceBasis,
    steps: int = DEFAULT_STEPS,
    tolerance: float = CERTIFICATE_TOLERANCE,
    require_invariance: bool = True,
) -> ControlLaw:
    """
    Approximate law for couplings that are not low-rank in the subspace.

    The projected part is the same as in :func:`synthesize_exact`, computed
    from the equivalent operators ``P𝐓P``; the auxiliary part solves the robust
    Riccati equation with the residual operator norms ``‖𝐓 − P𝐓P‖``. With all
    residuals zero it reproduces the exact law.

    Args:
        require_invariance: When true (the default) a basis that is not
            invariant under every coupling is refused. When false the
            non-invariance is logged and absorbed by the residual norms.

    Raises:
        CertificateError: If invariance is required and fails.
        RiccatiIntegrationError: If the robust equation blows up.
    """
    _check_grid(model, basis)
    started = time.perf_counter()
    report = certify(model, basis, tolerance)
    if not report.invariant:
        if require_invariance:
            raise CertificateError(
                "approximate synthesis needs an invariant subspace ("
                + "; ".join(report.errors)
                + "); set require_invariance=False to absorb it in the residuals",
                report,
            )
        for message in report.errors:
            _LOG.warning("using equivalent operators: %s", message)
        relaxed = CertificateReport(
            invariance={name: 0.0 for name in report.invariance},
            lowrank=report.lowrank,
            norms=report.norms,
            tolerance=report.tolerance,
        )
        projected = assemble_projected(model, basis, relaxed)
    else:
        projected = assemble_projected(model, basis, report)
    norms = ResidualNorms.from_report(report)
    _LOG.info(
        "residual norms: A %.4f, B %.4f, Q %.4f, QT %.4f", norms.a, norms.b, norms.q, norms.qt
    )
    pi = solve_riccati(
        projected.a_bar, projected.b_bar, projected.q_bar, projected.qt_bar, model.horizon, steps
    )
    aux = solve_robust_auxiliary(model, norms, steps)
    elapsed = time.perf_counter() - started
    _LOG.info("approximate law synthesized in %.3fs", elapsed)
    return ControlLaw(
        basis,
        pi,
        aux,
        projected.a_bar,
        projected.b_bar,
        model.l_b,
        "approximate",
        norms,
        report,
        elapsed,
    )


@dataclass(frozen=True, eq=False)
class OscillatorModel:
    """
    Harmonic oscillators coupled through a graphon, each tracking ``η·z``.

    Local dynamics are ``ẋ = [[0, α], [−α, 0]] x + diag(0, β) u`` plus the
    coupling ``z = 𝐀x``; the running cost is ``(x − ηz)ᵀQ(x − ηz) + r|u|²`` and
    the terminal cost uses ``Q_T``.

    Attributes:
        alpha: Natural frequency (rad per time unit).
        beta: Input gain.
        q: 2×2 PSD running weight.
        qt: 2×2 PSD terminal weight.
        eta: Tracking coefficient.
        graphon: Coupling graphon 𝐀.
        modes: Number of eigenmodes d kept.
        r: Scalar control weight, handled by rescaling the input matrix.
        horizon: Final time T.
        grid_size: Grid for grid-free graphons.
    """

    alpha: float
    beta: float
    q: Array
    qt: Array
    eta: float
    graphon: Graphon
    modes: int = 3
    r: float = 1.0
    horizon: float = 2.0
    grid_size: int | None = None

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ConstructionError("alpha and beta must be positive")
        if not self.r > 0:
            raise ConstructionError(f"control weight r must be positive, got {self.r}")
        for name in ("q", "qt"):
            matrix = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if matrix.shape == (1, 1):
                matrix = float(matrix[0, 0]) * np.eye(2)
            if matrix.shape != (2, 2) or not np.allclose(matrix, matrix.T):
                raise ConstructionError(f"{name} must be a symmetric 2x2 matrix")
            if np.min(linalg.eigvalsh(matrix)) < -1e-12:
                raise ConstructionError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, matrix)
        if self.grid_size is None and self.graphon.grid_size is None:
            raise ConstructionError("a grid-free oscillator graphon needs grid_size")

    @property
    def grid(self) -> int:
        return int(self.grid_size or self.graphon.grid_size or 0)

    def local_drift(self) -> Array:
        return np.array([[0.0, self.alpha], [-self.alpha, 0.0]])

    def local_input(self) -> Array:
        return np.diag([0.0, self.beta]) / np.sqrt(self.r)


def expand_oscillator(model: OscillatorModel) -> CouplingModel:
    """
    Express the oscillator problem as a :class:`CouplingModel`.

    The tracking cost ``(x − η𝐀x)ᵀQ(x − η𝐀x)`` becomes ``L_q = D_q = Q`` with
    cost graphon ``−2η𝐀 + η²𝐀²``, so that on an eigenfunction with eigenvalue
    λ the weight is ``(1 − ηλ)²Q``; the same holds for the terminal cost. The
    residual cost operator outside an 𝐀-invariant subspace is then
    ``(𝕀 − η𝐀_⊥)² − 𝕀``.
    """
    g = model.graphon
    if isinstance(g, DictionaryGraphon):
        cost = polynomial(g, -2 * model.eta, model.eta**2)
    else:
        cost = polynomial(g, -2 * model.eta, model.eta**2, model.grid)
    return CouplingModel.create(
        L_a=model.local_drift(),
        D_a=np.eye(2),
        L_b=model.local_input(),
        D_b=np.zeros((2, 2)),
        L_q=model.q,
        D_q=model.q,
        L_qT=model.qt,
        D_qT=model.qt,
        A=g,
        B=DictionaryGraphon.zero(),
        Q=cost,
        QT=cost,
        horizon=model.horizon,
    )


def oscillator_law(model: OscillatorModel, steps: int = DEFAULT_STEPS) -> ControlLaw:
    """
    Mode-by-mode optimal law for the oscillator model.

    Each of the d leading eigenmodes of 𝐀 gets its own 2×2 equation
    ``−Π̇ = (L_a + λI)ᵀΠ + Π(L_a + λI) − ΠL_bL_bᵀΠ + (1 − ηλ)²Q`` with
    ``Π(T) = (1 − ηλ)²Q_T``; the auxiliary 2×2 equation uses ``Q`` and ``Q_T``.
    The projected solution is the block-diagonal assembly over modes.

    Raises:
        SpectrumRangeError: If ``modes`` exceeds the rank of the graphon.
    """
    started = time.perf_counter()
    spectrum = spectral_decomposition(model.graphon, model.modes)
    scale = max(float(np.max(np.abs(spectrum.eigenvalues))), 1.0)
    if abs(spectrum.eigenvalues[-1]) <= 1e-12 * scale:
        raise SpectrumRangeError(
            f"{model.modes} modes requested but the graphon has a smaller rank"
        )
    basis = SubspaceBasis.from_spectrum(
        spectrum, model.grid, provenance=f"eigen {model.modes} of oscillator graphon"
    )
    coupling = expand_oscillator(model)
    l_a, l_b = coupling.l_a, coupling.l_b
    blocks = []
    drifts = []
    for lam in spectrum.eigenvalues:
        drift = l_a + lam * np.eye(2)
        factor = (1 - model.eta * lam) ** 2
        drifts.append(drift)
        blocks.append(
            solve_riccati(drift, l_b, factor * model.q, factor * model.qt, model.horizon, steps)
        )
    matrices = np.stack(
        [linalg.block_diag(*(b.matrices[k] for b in blocks)) for k in range(steps + 1)]
    )
    matrices.setflags(write=False)
    projected = RiccatiTrajectory(blocks[0].time_grid, matrices)
    aux = solve_auxiliary(coupling, steps)
    elapsed = time.perf_counter() - started
    _LOG.info(
        "oscillator law: %d modes, eigenvalues %s, %.3fs",
        model.modes,
        np.array2string(spectrum.eigenvalues, precision=4),
        elapsed,
    )
    return ControlLaw(
        basis,
        projected,
        aux,
        linalg.block_diag(*drifts),
        np.kron(np.eye(model.modes), l_b),
        l_b,
        "exact",
        ResidualNorms(),
        None,
        elapsed,
    )
