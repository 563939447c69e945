"""
Command line: ``graphonlqr run|sbm-gen|oracle|compare|check``.

Every failure ends with one ``error[<category>]: <message>`` line on stderr and
an exit code from :class:`ExitCode`.
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from enum import IntEnum
from pathlib import Path

from graphonlqr.artifacts import read_trajectory, write_matrix_csv, write_trajectory
from graphonlqr.config import ExperimentConfig, read_config
from graphonlqr.errors import (
    CertificateError,
    ConfigError,
    GraphonLQRError,
    OracleSizeError,
    RiccatiIntegrationError,
    SimulationError,
)
from graphonlqr.experiment import (
    build_experiment,
    certify_experiment,
    generate_network,
    run_experiment,
    run_oracle,
)
from graphonlqr.sim import compare

_LOG = logging.getLogger(__name__)


class ExitCode(IntEnum):
    OK = 0
    FAILURE = 1
    CONFIG = 2
    CERTIFICATE = 3
    INTEGRATION = 4
    ORACLE_SIZE = 5
    # check only: the mode is approximate and its synthesis will accept the basis
    APPROXIMATE_ONLY = 6


_CATEGORIES: list[tuple[type[Exception], ExitCode, str]] = [
    (ConfigError, ExitCode.CONFIG, "config"),
    (CertificateError, ExitCode.CERTIFICATE, "certificate"),
    (RiccatiIntegrationError, ExitCode.INTEGRATION, "integration"),
    (SimulationError, ExitCode.INTEGRATION, "integration"),
    (OracleSizeError, ExitCode.ORACLE_SIZE, "oracle-size"),
    (GraphonLQRError, ExitCode.FAILURE, "failure"),
    (OSError, ExitCode.FAILURE, "io"),
]


def _config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {"seed": args.seed, "steps": args.steps, "output_dir": args.output_dir}
    return read_config(args.config, overrides)


def _run(args: argparse.Namespace) -> ExitCode:
    experiment = build_experiment(_config(args))
    result = run_experiment(experiment, str(args.config))
    for name, cost in result.costs.items():
        print(f"cost_{name} = {cost:.10g}")
    for name, report in result.reports.items():
        print(f"cost_gap_percent_{name} = {report.cost_gap_percent:.6g}")
        print(f"max_state_diff_{name} = {report.max_state_diff:.6g}")
    print(f"output_dir = {result.output_dir}")
    return ExitCode.OK


def _sbm_gen(args: argparse.Namespace) -> ExitCode:
    write_matrix_csv(args.output, generate_network(_config(args)))
    return ExitCode.OK


def _oracle(args: argparse.Namespace) -> ExitCode:
    config = _config(args)
    experiment = build_experiment(config)
    traj, timings = run_oracle(experiment)
    write_trajectory(Path(config.run.output_dir) / "trajectory_oracle.csv", traj)
    print(f"cost_oracle = {traj.cost:.10g}")
    print(f"wall_time_oracle_synthesis = {timings['oracle_synthesis']:.6f}")
    return ExitCode.OK


def _compare(args: argparse.Namespace) -> ExitCode:
    report = compare(read_trajectory(args.a), read_trajectory(args.b))
    if args.json:
        print(report.model_dump_json(indent=2))
    else:
        print("\n".join(report.as_lines()))
    return ExitCode.OK


def _check(args: argparse.Namespace) -> ExitCode:
    config = _config(args)
    report = certify_experiment(build_experiment(config))
    print(report.summary())
    if report.exact:
        print("certificate = exact")
        return ExitCode.OK
    approximate = config.run.mode != "exact"
    if approximate and (report.invariant or not config.run.require_invariance):
        print("certificate = approximate")
        return ExitCode.APPROXIMATE_ONLY
    for message in report.errors:
        _LOG.warning("%s", message)
    print("certificate = failed")
    return ExitCode.CERTIFICATE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    configured = argparse.ArgumentParser(add_help=False, parents=[common])
    configured.add_argument("config", type=Path, help="experiment config file")
    configured.add_argument("--seed", type=int, default=None, help="override [run] seed")
    configured.add_argument("--steps", type=int, default=None, help="override [run] steps")
    configured.add_argument(
        "--output-dir", type=str, default=None, help="override [run] output_dir"
    )

    parser = argparse.ArgumentParser(
        prog="graphonlqr",
        description="LQR control of large graphon-coupled networks by subspace decomposition",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser(
        "run", parents=[configured], help="synthesize, simulate, compare and write results"
    ).set_defaults(handler=_run)
    sbm = commands.add_parser("sbm-gen", parents=[configured], help="write a sampled SBM network")
    sbm.add_argument("-o", "--output", type=Path, required=True, help="adjacency CSV to write")
    sbm.set_defaults(handler=_sbm_gen)
    commands.add_parser(
        "oracle", parents=[configured], help="centralized solve only"
    ).set_defaults(handler=_oracle)
    cmp = commands.add_parser("compare", parents=[common], help="compare two trajectory CSVs")
    cmp.add_argument("a", type=Path, help="trajectory to assess")
    cmp.add_argument("b", type=Path, help="reference trajectory")
    cmp.add_argument("--json", action="store_true", help="print the report as JSON")
    cmp.set_defaults(handler=_compare)
    commands.add_parser(
        "check", parents=[configured], help="invariance and low-rank certificates only"
    ).set_defaults(handler=_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``graphonlqr`` console script."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return int(args.handler(args))
    except Exception as e:
        for kind, code, category in _CATEGORIES:
            if isinstance(e, kind):
                message = str(e).replace("\n", "; ")
                print(f"error[{category}]: {message}", file=sys.stderr)
                return int(code)
        raise


if __name__ == "__main__":
    sys.exit(main())
