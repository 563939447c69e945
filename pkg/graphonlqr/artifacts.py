"""
Files written by experiment runs: CSV data, manifests and comparison reports.

CSV files are plain numbers separated by commas, preceded by ``# key = value``
comment lines that carry the metadata needed to read them back. Floats are
written with 17 significant digits so reruns with the same seed produce
identical bytes.
"""

import logging
from collections.abc import Mapping
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from graphonlqr.errors import ConfigError
from graphonlqr.graphon import Array
from graphonlqr.patterns import parse
from graphonlqr.riccati import RiccatiTrajectory
from graphonlqr.sim import ComparisonReport, Trajectory

_LOG = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
HEADER_LINE = parse("# {key} = {value}")
KEY_VALUE_LINE = parse("{key} = {value}")


def _metadata(lines: Mapping[str, object]) -> str:
    return "".join(f"# {key} = {value}\n" for key, value in lines.items())


def write_matrix_csv(path: Path | str, matrix: Array) -> Path:
    """Write a 2-D array, one row per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.atleast_2d(matrix), fmt=FLOAT_FORMAT, delimiter=",")
    _LOG.info("wrote %s", path)
    return path


def read_matrix_csv(path: Path | str) -> Array:
    """
    Read a comma-separated matrix; ``#`` lines are skipped.

    Raises:
        ConfigError: If the file is missing or not a rectangular table of numbers.
    """
    try:
        return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read matrix from {path}: {e}") from e


def write_trajectory(
    path: Path | str, traj: Trajectory, extra: Mapping[str, object] | None = None
) -> Path:
    """
    Write a trajectory as CSV.

    Columns are ``t``, then ``x<agent>_<component>`` for every state entry,
    then ``u<agent>_<component>`` for every control entry, agent-major.
    ``extra`` adds header lines after ``grid_size`` and ``dimension``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_agents, dimension = traj.grid_size, traj.dimension
    names = [f"{i}_{k}" for i in range(n_agents) for k in range(dimension)]
    columns = ["t", *(f"x{n}" for n in names), *(f"u{n}" for n in names)]
    meta: dict[str, object] = {"grid_size": n_agents, "dimension": dimension}
    if traj.cost is not None:
        meta = {"cost": format(traj.cost, ".17g"), **meta}
    meta.update(extra or {})
    rows = np.column_stack(
        [
            traj.time_grid,
            traj.states.reshape(traj.steps + 1, -1),
            traj.controls.reshape(traj.steps + 1, -1),
        ]
    )
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(_metadata(meta))
        handle.write(",".join(columns) + "\n")
        np.savetxt(handle, rows, fmt=FLOAT_FORMAT, delimiter=",")
    _LOG.info("wrote %s", path)
    return path


def read_trajectory(path: Path | str) -> Trajectory:
    """
    Read a CSV written by :func:`write_trajectory`.

    Raises:
        ConfigError: If the file is missing, has no ``grid_size``/``dimension``
            header or the wrong number of columns.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read trajectory {path}: {e.strerror or e}") from e
    meta: dict[str, str] = {}
    header = 0
    for line in lines:
        if not line.startswith("#"):
            break
        header += 1
        try:
            entry = HEADER_LINE.parse(line)
        except ValueError:
            continue
        meta[entry["key"]] = entry["value"]
    try:
        n_agents, dimension = int(meta["grid_size"]), int(meta["dimension"])
    except (KeyError, ValueError) as e:
        raise ConfigError(f"{path} has no grid_size/dimension header") from e
    try:
        rows = np.loadtxt(path, delimiter=",", comments="#", skiprows=header + 1, ndmin=2)
    except ValueError as e:
        raise ConfigError(f"cannot read trajectory data from {path}: {e}") from e
    width = n_agents * dimension
    if rows.shape[1] != 1 + 2 * width:
        raise ConfigError(f"{path} has {rows.shape[1]} columns, expected {1 + 2 * width}")
    shape = (rows.shape[0], n_agents, dimension)
    cost = float(meta["cost"]) if "cost" in meta else None
    return Trajectory(
        rows[:, 0],
        rows[:, 1 : 1 + width].reshape(shape),
        rows[:, 1 + width :].reshape(shape),
        cost,
    )


def write_riccati(path: Path | str, riccati: RiccatiTrajectory) -> Path:
    """One row per time point: ``t`` followed by the row-major matrix."""
    flat = riccati.matrices.reshape(riccati.steps + 1, -1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(_metadata({"size": riccati.size}))
        np.savetxt(
            handle, np.column_stack([riccati.time_grid, flat]), fmt=FLOAT_FORMAT, delimiter=","
        )
    _LOG.info("wrote %s", path)
    return path


def write_gains(path: Path | str, time_grid: Array, gains: Array) -> Path:
    """Gain schedule, one row per time point: ``t`` then the row-major gain matrix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.column_stack([time_grid, gains.reshape(gains.shape[0], -1)])
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(_metadata({"rows": gains.shape[1], "columns": gains.shape[2]}))
        np.savetxt(handle, rows, fmt=FLOAT_FORMAT, delimiter=",")
    _LOG.info("wrote %s", path)
    return path


class Manifest(BaseModel):
    """What produced a run's outputs, written next to them."""

    model_config = ConfigDict(frozen=True)

    version: str
    config: str
    config_sha256: str
    mode: str
    seed: int
    seeds: dict[str, int] = Field(default_factory=dict)
    steps: int
    grid_size: int
    dimension: int
    tolerance: float
    basis: str = ""
    residual_norms: dict[str, float] = Field(default_factory=dict)
    wall_times: dict[str, float] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)

    def as_lines(self) -> list[str]:
        lines = [
            f"version = {self.version}",
            f"config = {self.config}",
            f"config_sha256 = {self.config_sha256}",
            f"mode = {self.mode}",
            f"seed = {self.seed}",
        ]
        lines.extend(f"seed_{name} = {value}" for name, value in self.seeds.items())
        lines.extend(
            [
                f"steps = {self.steps}",
                f"grid_size = {self.grid_size}",
                f"dimension = {self.dimension}",
                f"tolerance = {self.tolerance:g}",
            ]
        )
        if self.basis:
            lines.append(f"basis = {self.basis}")
        lines.extend(f"residual_{k} = {v:.17g}" for k, v in self.residual_norms.items())
        lines.extend(f"wall_time_{k} = {v:.6f}" for k, v in self.wall_times.items())
        lines.extend(f"output = {name}" for name in self.outputs)
        return lines


def write_lines(path: Path | str, lines: list[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    _LOG.info("wrote %s", path)
    return path


def read_key_values(path: Path | str) -> dict[str, str]:
    """
    Read a ``key = value`` file such as a manifest or comparison report.

    Repeated keys keep their last value; other lines are ignored.
    """
    values: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        try:
            entry = KEY_VALUE_LINE.parse(line)
        except ValueError:
            continue
        values[entry["key"]] = entry["value"]
    return values


def write_comparison(directory: Path | str, name: str, report: ComparisonReport) -> list[Path]:
    """Write ``comparison_<name>.txt`` (key = value) and ``comparison_<name>.json``."""
    directory = Path(directory)
    text = write_lines(directory / f"comparison_{name}.txt", report.as_lines())
    data = directory / f"comparison_{name}.json"
    data.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    _LOG.info("wrote %s", data)
    return [text, data]
