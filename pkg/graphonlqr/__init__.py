"""
graphonlqr - LQR control of very large graphon-coupled networks.

Networks of identical linear agents coupled through graphons (or finite
networks embedded as step graphons) are controlled by splitting the state
space along a subspace that every coupling operator leaves invariant: one small
projected Riccati problem on that subspace and one decoupled per-agent Riccati
problem on its complement. A centralized nN×nN solve is included as an oracle.

Example:
    ```python
    from graphonlqr import (
        CouplingModel,
        DictionaryGraphon,
        SubspaceBasis,
        evaluate_cost,
        sample_initial_state,
        simulate,
        synthesize_exact,
    )
    import numpy as np

    A = DictionaryGraphon.from_terms([(1.0, "sin1", "sin1"), (1.0, "cos1", "cos1")])
    model = CouplingModel.create(L_a=2, D_a=1, L_b=1.2, L_q=1, L_qT=2, A=A)
    basis = SubspaceBasis.from_dictionary(["sin1", "cos1"], 40)
    law = synthesize_exact(model, basis)
    x0 = sample_initial_state(np.random.default_rng(0), 40, 1)
    print(evaluate_cost(model, simulate(model, law, x0)))
    ```
"""

from graphonlqr.config import ExperimentConfig, load_config, read_config
from graphonlqr.control import (
    ControlLaw,
    OscillatorModel,
    evaluate_nodal,
    expand_oscillator,
    oscillator_law,
    synthesize_approximate,
    synthesize_exact,
)
from graphonlqr.errors import (
    BasisError,
    CertificateError,
    ConfigError,
    ConstructionError,
    DimensionError,
    GraphonLQRError,
    HorizonError,
    OracleSizeError,
    RiccatiIntegrationError,
    SimulationError,
    SpectrumRangeError,
)
from graphonlqr.graphon import (
    DictionaryElement,
    DictionaryGraphon,
    Graphon,
    GridFunction,
    SbmSpec,
    Spectrum,
    StepGraphon,
    apply,
    operator_norm,
    polynomial,
    residual,
    restrict,
    sample_sbm,
    sbm_graphon,
    sbm_limit,
    spectral_decomposition,
    step_from_matrix,
    truncate,
)
from graphonlqr.riccati import (
    CouplingModel,
    ProjectedModel,
    ResidualNorms,
    RiccatiTrajectory,
    assemble_projected,
    certify,
    check_robust_conditions,
    cost_is_psd,
    residual_norms,
    solve_auxiliary,
    solve_riccati,
    solve_robust_auxiliary,
)
from graphonlqr.sim import (
    CentralizedLaw,
    ComparisonReport,
    OpenLoopSchedule,
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
)
from graphonlqr.subspace import (
    IDENTITY,
    CertificateReport,
    Decomposition,
    ProjectedVector,
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
)

__all__ = [
    "IDENTITY",
    "BasisError",
    "CentralizedLaw",
    "CertificateError",
    "CertificateReport",
    "ComparisonReport",
    "ConfigError",
    "ConstructionError",
    "ControlLaw",
    "CouplingModel",
    "Decomposition",
    "DictionaryElement",
    "DictionaryGraphon",
    "DimensionError",
    "ExperimentConfig",
    "Graphon",
    "GraphonLQRError",
    "GridFunction",
    "HorizonError",
    "OpenLoopSchedule",
    "OracleSizeError",
    "OscillatorModel",
    "ProjectedModel",
    "ProjectedVector",
    "ResidualNorms",
    "RiccatiIntegrationError",
    "RiccatiTrajectory",
    "SbmSpec",
    "SimulationError",
    "Spectrum",
    "SpectrumRangeError",
    "StepGraphon",
    "SubspaceBasis",
    "Trajectory",
    "apply",
    "assemble_full",
    "assemble_projected",
    "certify",
    "certify_graphons",
    "check_invariance",
    "check_lowrank",
    "check_robust_conditions",
    "compare",
    "cost_is_psd",
    "coupling_matrix",
    "decompose",
    "eigenbasis",
    "evaluate_cost",
    "evaluate_nodal",
    "expand_oscillator",
    "load_config",
    "operator_norm",
    "oracle_law",
    "oracle_solve",
    "oscillator_law",
    "polynomial",
    "project_function",
    "project_operator",
    "read_config",
    "reconstruct",
    "residual",
    "residual_norms",
    "restrict",
    "sample_initial_state",
    "sample_sbm",
    "sbm_graphon",
    "sbm_limit",
    "simulate",
    "solve_auxiliary",
    "solve_riccati",
    "solve_robust_auxiliary",
    "spectral_decomposition",
    "split_cost",
    "split_trajectory",
    "step_from_matrix",
    "synthesize_approximate",
    "synthesize_exact",
    "truncate",
]
__version__ = "0.1.0"
