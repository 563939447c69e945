"""
Config-driven experiment pipelines behind the command line.

:func:`build_experiment` turns an :class:`~graphonlqr.config.ExperimentConfig`
into a model, a basis and an initial state; :func:`run_experiment` synthesizes,
simulates, checks against the centralized oracle where it fits and writes
every artifact into the output directory.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from graphonlqr.artifacts import (
    Manifest,
    read_matrix_csv,
    write_comparison,
    write_gains,
    write_lines,
    write_riccati,
    write_trajectory,
)
from graphonlqr.config import ExperimentConfig, Source
from graphonlqr.control import (
    ControlLaw,
    OscillatorModel,
    expand_oscillator,
    oscillator_law,
    synthesize_approximate,
    synthesize_exact,
)
from graphonlqr.errors import ConfigError, OracleSizeError
from graphonlqr.graphon import (
    Array,
    DictionaryGraphon,
    Graphon,
    GridFunction,
    SbmSpec,
    sample_sbm,
    sbm_limit,
    step_from_matrix,
)
from graphonlqr.riccati import ROLES, CouplingModel, certify
from graphonlqr.sim import (
    ComparisonReport,
    Trajectory,
    compare,
    evaluate_cost,
    oracle_law,
    sample_initial_state,
    simulate,
    split_trajectory,
)
from graphonlqr.subspace import CertificateReport, SubspaceBasis, eigenbasis

_LOG = logging.getLogger(__name__)

SEED_BOUND = 2**32


@dataclass(frozen=True, eq=False)
class Experiment:
    """
    Everything a run needs, built from a config.

    Attributes:
        config: The validated config.
        model: The coupling model of the network being controlled.
        basis: Subspace basis for the decomposed synthesis.
        x0: Initial state.
        seeds: Seed of every random draw, by role.
        oscillator: The oscillator model on the sampled network (oscillator mode).
        law_graphon: Graphon the mode-by-mode oscillator law is built on.
    """

    config: ExperimentConfig
    model: CouplingModel
    basis: SubspaceBasis
    x0: GridFunction
    seeds: dict[str, int]
    oscillator: OscillatorModel | None = None
    law_graphon: Graphon | None = None

    @property
    def grid_size(self) -> int:
        return self.x0.grid_size


@dataclass
class RunResult:
    """What :func:`run_experiment` produced."""

    output_dir: Path
    outputs: list[Path] = field(default_factory=list)
    costs: dict[str, float] = field(default_factory=dict)
    reports: dict[str, ComparisonReport] = field(default_factory=dict)
    wall_times: dict[str, float] = field(default_factory=dict)
    laws: dict[str, ControlLaw] = field(default_factory=dict)


def _sbm_spec(config: ExperimentConfig, seed: int) -> SbmSpec:
    if config.sbm is None:
        raise ConfigError("an [sbm] section is required")
    return config.sbm.spec(seed)


def draw_seeds(config: ExperimentConfig, rng: np.random.Generator) -> dict[str, int]:
    """
    Seeds for every sampled network, drawn in role order A, B, Q, QT.

    In oscillator mode without a ``[coupling]`` section the network is role A.
    """
    if config.coupling is not None:
        roles = [r for r, s in config.coupling.sources().items() if s.kind == "sbm"]
    else:
        roles = ["A"]
    return {role: int(rng.integers(SEED_BOUND)) for role in roles}


def _graphon(config: ExperimentConfig, source: Source, seed: int | None) -> Graphon:
    if source.kind == "sbm":
        return step_from_matrix(sample_sbm(_sbm_spec(config, seed or 0)), 1.0)
    if source.kind == "limit":
        return sbm_limit(_sbm_spec(config, 0))
    if source.kind == "zero":
        return DictionaryGraphon.zero()
    if source.kind == "ones":
        return DictionaryGraphon.constant(1.0)
    if source.kind == "terms":
        return DictionaryGraphon.from_terms(source.terms())
    if source.kind == "csv":
        weights = read_matrix_csv(config.resolve(str(source.argument)))
        return step_from_matrix(weights, max(float(np.max(np.abs(weights))), 1.0))
    raise ConfigError(f"unresolved coupling source '{source}'")


def build_graphons(config: ExperimentConfig, seeds: dict[str, int]) -> dict[str, Graphon]:
    """The four coupling graphons; ``same`` references share one object."""
    if config.coupling is None:
        raise ConfigError("a [coupling] section is required")
    sources = config.coupling.sources()
    graphons = {
        role: _graphon(config, source, seeds.get(role))
        for role, source in sources.items()
        if source.kind != "same"
    }
    for role, source in sources.items():
        if source.kind == "same":
            graphons[role] = graphons[str(source.argument)]
    return {role: graphons[role] for role in ROLES}


def _grid_size(config: ExperimentConfig, graphons: dict[str, Graphon]) -> int:
    sizes = {g.grid_size for g in graphons.values() if g.grid_size is not None}
    declared = config.coupling.grid_size if config.coupling is not None else None
    if declared is not None:
        sizes.add(declared)
    if len(sizes) > 1:
        raise ConfigError(f"coupling operators live on different grids: {sorted(sizes)}")
    if not sizes:
        raise ConfigError("grid_size is required in [coupling] when no operator fixes it")
    return sizes.pop()


def _basis(config: ExperimentConfig, graphons: dict[str, Graphon], grid_size: int) -> SubspaceBasis:
    if config.subspace is None:
        raise ConfigError("a [subspace] section is required")
    spec = config.subspace.basis
    if spec.kind == "eigen":
        role = str(spec.role)
        return eigenbasis(graphons[role], int(spec.count or 1), grid_size, label=role)
    if spec.kind == "dictionary":
        return SubspaceBasis.from_dictionary(spec.names, grid_size)
    if spec.kind == "csv":
        values = read_matrix_csv(config.resolve(str(spec.path)))
        if values.shape[0] != grid_size:
            raise ConfigError(f"basis {spec.path} has {values.shape[0]} rows, grid has {grid_size}")
        return SubspaceBasis.from_functions(values, provenance=str(spec))
    return SubspaceBasis.ones(grid_size)


def _oscillator_experiment(
    config: ExperimentConfig, rng: np.random.Generator, seeds: dict[str, int]
) -> Experiment:
    section = config.oscillator
    if section is None:
        raise ConfigError("an [oscillator] section is required")
    if config.coupling is not None:
        network = build_graphons(config, seeds)["A"]
    else:
        network = step_from_matrix(sample_sbm(_sbm_spec(config, seeds["A"])), 1.0)
    grid_size = _grid_size(config, {"A": network})
    oscillator = OscillatorModel(
        alpha=section.alpha,
        beta=section.beta,
        q=np.array(section.Q),
        qt=np.array(section.QT),
        eta=section.eta,
        graphon=network,
        modes=section.modes,
        r=section.R,
        horizon=section.horizon,
        grid_size=grid_size,
    )
    law_graphon = sbm_limit(_sbm_spec(config, 0)) if section.graphon == "limit" else network
    initial = config.initial.range
    x0 = sample_initial_state(rng, grid_size, 2, initial.low, initial.high)
    return Experiment(
        config,
        expand_oscillator(oscillator),
        eigenbasis(network, section.modes, grid_size, label="A"),
        x0,
        seeds,
        oscillator,
        law_graphon,
    )


def build_experiment(config: ExperimentConfig) -> Experiment:
    """
    Sample networks, build the model, the basis and the initial state.

    All randomness comes from ``default_rng(config.run.seed)``: first one seed
    per sampled network in role order, then the initial state.

    Raises:
        ConfigError: If the config cannot be turned into a consistent model.
        SpectrumRangeError: If an eigenbasis asks for more modes than exist.
        BasisError: If an explicit basis is rank deficient.
    """
    rng = np.random.default_rng(config.run.seed)
    seeds = draw_seeds(config, rng)
    if config.run.mode == "oscillator":
        return _oscillator_experiment(config, rng, seeds)
    graphons = build_graphons(config, seeds)
    grid_size = _grid_size(config, graphons)
    section = config.model
    model = CouplingModel.create(
        **{name: np.array(value) for name, value in section.matrices().items()},
        A=graphons["A"],
        B=graphons["B"],
        Q=graphons["Q"],
        QT=graphons["QT"],
        horizon=section.horizon,
        dimension=section.dimension,
    )
    basis = _basis(config, graphons, grid_size)
    initial = config.initial.range
    x0 = sample_initial_state(rng, grid_size, model.dimension, initial.low, initial.high)
    _LOG.info(
        "experiment: N=%d, n=%d, d=%d, basis %s",
        grid_size,
        model.dimension,
        basis.dim,
        basis.provenance,
    )
    return Experiment(config, model, basis, x0, seeds)


def certify_experiment(experiment: Experiment) -> CertificateReport:
    """Invariance and low-rank residuals of the experiment's couplings."""
    return certify(experiment.model, experiment.basis, experiment.config.run.tolerance)


def generate_network(config: ExperimentConfig) -> Array:
    """
    The SBM adjacency matrix a run with this config would sample first.

    Raises:
        ConfigError: If the config samples no network.
    """
    rng = np.random.default_rng(config.run.seed)
    seeds = draw_seeds(config, rng)
    if not seeds:
        raise ConfigError("the config samples no SBM network")
    role = next(iter(seeds))
    _LOG.info("sampling the %s network with seed %d", role, seeds[role])
    return sample_sbm(_sbm_spec(config, seeds[role]))


def _closed_loop(experiment: Experiment, law: ControlLaw) -> tuple[Trajectory, float]:
    started = time.perf_counter()
    traj = simulate(experiment.model, law, experiment.x0, experiment.config.run.steps)
    cost = evaluate_cost(experiment.model, traj)
    return traj.with_cost(cost), time.perf_counter() - started


def run_oracle(experiment: Experiment) -> tuple[Trajectory, dict[str, float]]:
    """
    Centralized optimal trajectory with its cost, and its wall times.

    Raises:
        OracleSizeError: If nN exceeds ``max_oracle_dimension``.
    """
    run = experiment.config.run
    law = oracle_law(experiment.model, experiment.grid_size, run.steps, run.max_oracle_dimension)
    started = time.perf_counter()
    traj = simulate(experiment.model, law, experiment.x0, run.steps)
    traj = traj.with_cost(evaluate_cost(experiment.model, traj))
    elapsed = time.perf_counter() - started
    return traj, {"oracle_synthesis": law.synthesis_seconds, "oracle_simulation": elapsed}


def _write_law(directory: Path, name: str, law: ControlLaw) -> list[Path]:
    grid = law.projected_riccati.time_grid
    projected = np.stack([law.projected_gain(t) for t in grid])
    auxiliary = np.stack([law.auxiliary_gain(t) for t in grid])
    return [
        write_riccati(directory / f"riccati_projected_{name}.csv", law.projected_riccati),
        write_riccati(directory / f"riccati_auxiliary_{name}.csv", law.auxiliary_riccati),
        write_gains(directory / f"gain_projected_{name}.csv", grid, projected),
        write_gains(directory / f"gain_auxiliary_{name}.csv", grid, auxiliary),
    ]


def _write_split(directory: Path, name: str, law: ControlLaw, traj: Trajectory) -> list[Path]:
    projection, auxiliary = split_trajectory(law.basis, traj)
    header = {"signal": "projection", "rows": "basis functions", "basis": law.basis.provenance}
    return [
        write_trajectory(directory / f"projection_{name}.csv", projection, header),
        write_trajectory(directory / f"auxiliary_{name}.csv", auxiliary, {"signal": "auxiliary"}),
    ]


def _laws(experiment: Experiment) -> dict[str, ControlLaw]:
    run = experiment.config.run
    if run.mode == "exact":
        law = synthesize_exact(experiment.model, experiment.basis, run.steps, run.tolerance)
        return {"exact": law}
    if run.mode == "approximate":
        law = synthesize_approximate(
            experiment.model, experiment.basis, run.steps, run.tolerance, run.require_invariance
        )
        return {"approximate": law}
    assert experiment.oscillator is not None and experiment.law_graphon is not None
    mode_model = OscillatorModel(
        alpha=experiment.oscillator.alpha,
        beta=experiment.oscillator.beta,
        q=experiment.oscillator.q,
        qt=experiment.oscillator.qt,
        eta=experiment.oscillator.eta,
        graphon=experiment.law_graphon,
        modes=experiment.oscillator.modes,
        r=experiment.oscillator.r,
        horizon=experiment.oscillator.horizon,
        grid_size=experiment.grid_size,
    )
    return {
        "graphon": oscillator_law(mode_model, run.steps),
        "projection": synthesize_approximate(
            experiment.model, experiment.basis, run.steps, run.tolerance, run.require_invariance
        ),
    }


def run_experiment(experiment: Experiment, config_path: str = "<config>") -> RunResult:
    """
    Synthesize, simulate, compare with the oracle and write all artifacts.

    The oracle is skipped with a log message when nN exceeds
    ``max_oracle_dimension``; everything else is still written.

    Raises:
        CertificateError: If the basis does not certify for the chosen mode.
        RiccatiIntegrationError: If a Riccati equation blows up.
        SimulationError: If a closed loop blows up.
    """
    from graphonlqr import __version__

    run = experiment.config.run
    directory = Path(run.output_dir)
    result = RunResult(directory)
    laws = _laws(experiment)
    result.laws = laws
    trajectories: dict[str, Trajectory] = {}
    for name, law in laws.items():
        traj, simulation = _closed_loop(experiment, law)
        trajectories[name] = traj
        assert traj.cost is not None
        result.costs[name] = traj.cost
        result.wall_times[f"{name}_synthesis"] = law.synthesis_seconds
        result.wall_times[f"{name}_simulation"] = simulation
        result.outputs.append(write_trajectory(directory / f"trajectory_{name}.csv", traj))
        result.outputs.extend(_write_split(directory, name, law, traj))
        result.outputs.extend(_write_law(directory, name, law))
    try:
        oracle, timings = run_oracle(experiment)
    except OracleSizeError as e:
        _LOG.info("oracle skipped: %s", e)
    else:
        assert oracle.cost is not None
        result.costs["oracle"] = oracle.cost
        result.wall_times.update(timings)
        result.outputs.append(write_trajectory(directory / "trajectory_oracle.csv", oracle))
        for name, traj in trajectories.items():
            times = {
                name: result.wall_times[f"{name}_synthesis"],
                "oracle": timings["oracle_synthesis"],
            }
            report = compare(traj, oracle, times)
            result.reports[name] = report
            result.outputs.extend(write_comparison(directory, name, report))
            _LOG.info(
                "%s: cost gap %.4g%%, state difference %.4g (L2), %.4g (max)",
                name,
                report.cost_gap_percent,
                report.state_diff_l2,
                report.max_state_diff,
            )
    reference = laws.get("projection") or next(iter(laws.values()))
    manifest = Manifest(
        version=__version__,
        config=config_path,
        config_sha256=experiment.config.digest,
        mode=run.mode,
        seed=run.seed,
        seeds=experiment.seeds,
        steps=run.steps,
        grid_size=experiment.grid_size,
        dimension=experiment.model.dimension,
        tolerance=run.tolerance,
        basis=experiment.basis.provenance,
        residual_norms=reference.residual_norms.as_dict(),
        wall_times=result.wall_times,
        outputs=[p.name for p in result.outputs],
    )
    result.outputs.append(write_lines(directory / "manifest.txt", manifest.as_lines()))
    return result
