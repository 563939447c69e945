"""
Experiment configuration files.

A config is a flat text file of ``[section]`` headers and ``key = value``
lines; ``#`` starts a comment line. Lines are read with the pattern layer,
values are validated by the pydantic section models below, and every problem
in a file is reported at once through :class:`~graphonlqr.errors.ConfigError`.

Example:
    ```text
    [run]
    mode = exact
    seed = 7

    [model]
    L_a = 2
    D_a = 1
    L_b = 1.2

    [coupling]
    grid_size = 40
    A = terms 1 sin1 sin1; 1 cos1 cos1

    [subspace]
    basis = dictionary sin1, cos1
    ```
"""

import hashlib
import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    ValidationError,
    model_validator,
)

from graphonlqr.errors import ConfigError
from graphonlqr.graphon import DictionaryElement, DictionaryGraphon, SbmSpec
from graphonlqr.patterns import (
    ParsableModel,
    ParseReport,
    parse,
    parse_matrix,
    parse_numbers,
    parse_regex,
)
from graphonlqr.riccati import DEFAULT_STEPS, ROLES
from graphonlqr.sim import DEFAULT_MAX_ORACLE_DIMENSION
from graphonlqr.subspace import CERTIFICATE_TOLERANCE

_LOG = logging.getLogger(__name__)

SECTION_LINE = parse("[{name}]")
ENTRY_LINE = parse("{key} = {value}")
TERM = parse("{coefficient} {left} {right}")

SOURCE = parse_regex(r"(?P<kind>sbm|limit|zero|ones)") | parse_regex(
    r"(?P<kind>csv|terms|same)\s+(?P<argument>.+)"
)
BASIS = (
    parse_regex(r"(?P<kind>eigen)\s+(?P<count>\d+)\s+of\s+(?P<role>A|B|Q|QT)")
    | parse_regex(r"(?P<kind>dictionary)\s+(?P<names>.+)")
    | parse_regex(r"(?P<kind>csv)\s+(?P<path>.+)")
    | parse_regex(r"(?P<kind>ones)")
)

Role = Literal["A", "B", "Q", "QT"]


def _matrix(value: Any) -> list[list[float]]:
    return parse_matrix(value).tolist()


def _integers(value: Any) -> list[int]:
    numbers = parse_numbers(value)
    if any(n != int(n) for n in numbers):
        raise ValueError(f"expected integers, got {value!r}")
    return [int(n) for n in numbers]


def _names(value: Any) -> list[str]:
    if isinstance(value, str):
        return [n for n in value.replace(",", " ").split() if n]
    return list(value)


Matrix = Annotated[list[list[float]], BeforeValidator(_matrix)]
Integers = Annotated[list[int], BeforeValidator(_integers)]
Names = Annotated[list[str], BeforeValidator(_names)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSection(_Section):
    """``[run]``: what to do and how finely."""

    mode: Literal["exact", "approximate", "oscillator"] = "exact"
    seed: int = 0
    steps: int = Field(DEFAULT_STEPS, ge=1)
    output_dir: str = "out"
    max_oracle_dimension: int = Field(DEFAULT_MAX_ORACLE_DIMENSION, ge=1)
    tolerance: float = Field(CERTIFICATE_TOLERANCE, gt=0)
    require_invariance: bool = True


class ModelSection(_Section):
    """``[model]``: local matrices (scalars broadcast to ``s·I``) and horizon."""

    L_a: Matrix = [[0.0]]
    D_a: Matrix = [[0.0]]
    L_b: Matrix = [[0.0]]
    D_b: Matrix = [[0.0]]
    L_q: Matrix = [[0.0]]
    D_q: Matrix = [[0.0]]
    L_qT: Matrix = [[0.0]]
    D_qT: Matrix = [[0.0]]
    dimension: int | None = Field(None, ge=1)
    horizon: float = Field(1.0, gt=0)

    def matrices(self) -> dict[str, list[list[float]]]:
        return {
            name: getattr(self, name)
            for name in ("L_a", "D_a", "L_b", "D_b", "L_q", "D_q", "L_qT", "D_qT")
        }


class OscillatorSection(_Section):
    """``[oscillator]``: the coupled harmonic oscillator experiment."""

    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)
    Q: Matrix = [[1.0]]
    QT: Matrix = [[1.0]]
    R: float = Field(1.0, gt=0)
    eta: float = 0.0
    horizon: float = Field(2.0, gt=0)
    modes: int = Field(3, ge=1)
    graphon: Literal["limit", "A"] = "limit"


class SbmSection(_Section):
    """``[sbm]``: block connection probabilities and block sizes."""

    probabilities: Matrix
    sizes: Integers

    @model_validator(mode="after")
    def _check_blocks(self) -> "SbmSection":
        try:
            self.spec(0)
        except ValidationError as e:
            messages = (str(err["msg"]).removeprefix("Value error, ") for err in e.errors())
            raise ValueError("; ".join(messages)) from None
        return self

    def spec(self, seed: int) -> SbmSpec:
        return SbmSpec(
            block_probs=tuple(tuple(row) for row in self.probabilities),
            block_sizes=tuple(self.sizes),
            seed=seed,
        )

    @property
    def grid_size(self) -> int:
        return sum(self.sizes)


class Source(_Section):
    """Where one coupling operator comes from."""

    kind: Literal["sbm", "limit", "zero", "ones", "csv", "terms", "same"]
    argument: str | None = None

    @model_validator(mode="after")
    def _check_argument(self) -> "Source":
        if self.kind == "same" and self.argument not in ROLES:
            raise ValueError(f"'same' needs one of {', '.join(ROLES)}, got {self.argument!r}")
        if self.kind == "terms":
            DictionaryGraphon.from_terms(self.terms())
        return self

    def terms(self) -> list[tuple[float, str, str]]:
        """The ``(c, f, g)`` triples of a ``terms`` source."""
        out = []
        for chunk in (self.argument or "").split(";"):
            if not chunk.strip():
                continue
            fields = TERM.parse(chunk)
            out.append((float(fields["coefficient"]), fields["left"], fields["right"]))
        if not out:
            raise ValueError("'terms' needs at least one 'c f g' term")
        return out

    def __str__(self) -> str:
        return self.kind if self.argument is None else f"{self.kind} {self.argument}"


class CouplingSection(ParsableModel):
    """``[coupling]``: one source per operator, plus the grid size."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    grid_size: int | None = Field(None, ge=1)
    A: Source = SOURCE  # type: ignore[assignment]
    B: Source = SOURCE  # type: ignore[assignment]
    Q: Source = SOURCE  # type: ignore[assignment]
    QT: Source = SOURCE  # type: ignore[assignment]

    def sources(self) -> dict[str, Source]:
        return {"A": self.A, "B": self.B, "Q": self.Q, "QT": self.QT}

    @model_validator(mode="after")
    def _check_references(self) -> "CouplingSection":
        sources = self.sources()
        for role, source in sources.items():
            if source.kind != "same":
                continue
            if source.argument == role:
                raise ValueError(f"{role} cannot be 'same' as itself")
            if sources[str(source.argument)].kind == "same":
                raise ValueError(f"{role} refers to {source.argument}, which is itself a reference")
        return self


class BasisSource(_Section):
    kind: Literal["eigen", "dictionary", "csv", "ones"]
    count: int | None = Field(None, ge=1)
    role: Role | None = None
    names: Names = []
    path: str | None = None

    @model_validator(mode="after")
    def _check_names(self) -> "BasisSource":
        for name in self.names:
            DictionaryElement.from_name(name)
        return self

    def __str__(self) -> str:
        if self.kind == "eigen":
            return f"eigen {self.count} of {self.role}"
        if self.kind == "dictionary":
            return "dictionary " + ", ".join(self.names)
        if self.kind == "csv":
            return f"csv {self.path}"
        return "ones"


class SubspaceSection(ParsableModel):
    """``[subspace]``: exactly one ``basis =`` line."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    basis: BasisSource = BASIS  # type: ignore[assignment]


class Interval(BaseModel):
    low: float
    high: float

    @model_validator(mode="after")
    def _ordered(self) -> "Interval":
        if not self.low < self.high:
            raise ValueError(f"empty range {self.low} .. {self.high}")
        return self


class InitialSection(ParsableModel):
    """``[initial]``: range of the uniform initial states."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    range: Interval = parse("{low} .. {high}")  # type: ignore[assignment]


SECTIONS: dict[str, type[BaseModel]] = {
    "run": RunSection,
    "model": ModelSection,
    "oscillator": OscillatorSection,
    "sbm": SbmSection,
    "coupling": CouplingSection,
    "subspace": SubspaceSection,
    "initial": InitialSection,
}


class ExperimentConfig(ParsableModel):
    """
    A validated experiment config.

    Attributes:
        base_dir: Directory relative CSV paths resolve against.
        digest: SHA-256 of the config text, for the manifest.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    run: RunSection = Field(default_factory=RunSection)
    model: ModelSection = Field(default_factory=ModelSection)
    oscillator: OscillatorSection | None = None
    sbm: SbmSection | None = None
    coupling: CouplingSection | None = None
    subspace: SubspaceSection | None = None
    initial: InitialSection = Field(
        default_factory=lambda: InitialSection(range=Interval(low=-5.0, high=5.0))
    )
    base_dir: Path = Path(".")
    digest: str = ""

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        problems = []
        if self.run.mode == "oscillator":
            if self.oscillator is None:
                problems.append("mode 'oscillator' needs an [oscillator] section")
            elif self.oscillator.graphon == "limit" and self.sbm is None:
                problems.append("oscillator graphon 'limit' needs an [sbm] section")
            if self.coupling is None and self.sbm is None:
                problems.append("mode 'oscillator' needs an [sbm] or [coupling] network")
        else:
            if self.coupling is None:
                problems.append(f"mode '{self.run.mode}' needs a [coupling] section")
            if self.subspace is None:
                problems.append(f"mode '{self.run.mode}' needs a [subspace] section")
        problems.extend(self._check_sources())
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def _check_sources(self) -> list[str]:
        problems = []
        paths: list[str] = []
        if self.coupling is not None:
            for role, source in self.coupling.sources().items():
                if source.kind in ("sbm", "limit") and self.sbm is None:
                    problems.append(f"coupling {role} = {source.kind} needs an [sbm] section")
                if source.kind == "csv":
                    paths.append(str(source.argument))
            fixed = self.sbm.grid_size if self.sbm is not None else None
            uses_sbm = any(s.kind in ("sbm", "limit") for s in self.coupling.sources().values())
            size = self.coupling.grid_size
            if uses_sbm and size is not None and fixed is not None and size != fixed:
                problems.append(f"grid_size {size} differs from the SBM size {fixed}")
        if self.subspace is not None and self.subspace.basis.kind == "csv":
            paths.append(str(self.subspace.basis.path))
        for path in paths:
            if not self.resolve(path).is_file():
                problems.append(f"file '{path}' not found (relative to {self.base_dir})")
        return problems

    def resolve(self, path: str) -> Path:
        """A path from the config, relative to the config's directory."""
        candidate = Path(path)
        return candidate if candidate.is_absolute() else self.base_dir / candidate


def read_sections(text: str, source: str = "<config>") -> ParseReport:
    """
    Split config text into ``{section: {key: value}}``.

    Nothing is validated beyond the line structure; the returned report lists
    unreadable lines, unknown sections and duplicate keys.
    """
    report = ParseReport(data={})
    section: str | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{source}:{number}"
        try:
            section = SECTION_LINE.parse(line)["name"]
        except ValueError:
            pass
        else:
            if section not in SECTIONS:
                report.add(where, f"unknown section [{section}]", "unknown_section")
            elif section in report.data:
                report.add(where, f"duplicate section [{section}]", "duplicate")
            report.data.setdefault(section, {})
            continue
        try:
            entry = ENTRY_LINE.parse(line)
        except ValueError:
            report.add(where, f"cannot read '{line}'; expected [section] or key = value")
            continue
        if section is None:
            report.add(where, "entry before the first [section]")
            continue
        values = report.data[section]
        if entry["key"] in values:
            report.add(where, f"duplicate key '{entry['key']}' in [{section}]", "duplicate")
            continue
        values[entry["key"]] = entry["value"]
    return report


def load_config(
    text: str,
    base_dir: Path | str = ".",
    source: str = "<config>",
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentConfig:
    """
    Validate config text.

    Args:
        text: The config file contents.
        base_dir: Directory relative CSV paths resolve against.
        source: Name used in messages.
        overrides: ``[run]`` values that replace the file's, e.g. from the
            command line; ``None`` values are ignored.

    Raises:
        ConfigError: With every problem found, if any.
    """
    report = read_sections(text, source)
    if not report:
        raise ConfigError(f"{source}: " + "; ".join(report.messages()), report.messages())
    sections = {name: dict(values) for name, values in report.data.items() if name in SECTIONS}
    if "coupling" in sections:
        for role in ROLES:
            sections["coupling"].setdefault(role, "zero")
    if "initial" in sections:
        sections["initial"].setdefault("range", "-5 .. 5")
    run = sections.setdefault("run", {})
    for key, value in (overrides or {}).items():
        if value is not None:
            run[key] = value
    data: dict[str, Any] = dict(sections)
    data["base_dir"] = Path(base_dir)
    data["digest"] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    result = ExperimentConfig.validate_with_recovery(data)
    if isinstance(result, ParseReport):
        issues = result.messages()
        raise ConfigError(f"{source}: " + "; ".join(issues), issues)
    assert isinstance(result, ExperimentConfig)
    _LOG.debug("config %s read: mode %s, seed %d", source, result.run.mode, result.run.seed)
    return result


def read_config(path: Path | str, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """
    Read and validate a config file.

    Raises:
        ConfigError: If the file cannot be read or is invalid.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
    return load_config(text, path.parent, str(path), overrides)
