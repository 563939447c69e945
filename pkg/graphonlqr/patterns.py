"""
String pattern layer for graphonlqr's text formats.

Config values (``eigen 3 of A``, ``terms 0.5 sin1 cos1; ...``, ``-5 .. 5``),
config lines and CSV header comments are all small structured strings. This
module turns them into dictionaries with format patterns (``formatparse``) or
regular expressions with named groups, and lets pydantic models declare those
patterns directly on their fields.
"""

import re
import types
from dataclasses import dataclass, field
from typing import Any, ClassVar, Union, get_args, get_origin

import formatparse
import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ValidationError, model_validator


@dataclass
class ParseReport:
    """
    Outcome of reading something with every problem collected.

    Instead of stopping at the first bad line or field, readers that return a
    ``ParseReport`` keep going and record each problem, so a user sees all of
    them at once.

    Attributes:
        data: Everything that could be read.
        errors: One dictionary per problem with ``field``, ``error`` and ``type``
            keys, and optionally ``input``.

    The report is falsy when any error was recorded.
    """

    data: dict[str, Any]
    errors: list[dict[str, Any]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return not self.errors

    def add(self, where: str, message: str, kind: str = "pattern_error") -> None:
        """Record one problem."""
        self.errors.append({"field": where, "error": message, "type": kind})

    def messages(self) -> list[str]:
        """Render the recorded problems as ``field: error`` strings."""
        return [f"{e['field']}: {e['error']}" if e["field"] else e["error"] for e in self.errors]


class ParsePattern:
    """
    A format-string pattern that turns a string into a dictionary of fields.

    Fields are written as ``{name}``; values come back stripped of surrounding
    whitespace and still as strings, leaving type coercion to pydantic.

    Example:
        ```python
        from graphonlqr.patterns import parse

        parse("eigen {count} of {role}").parse("eigen 3 of A")
        # {'count': '3', 'role': 'A'}
        ```
    """

    def __init__(self, pattern: str):
        """
        Compile ``pattern``.

        Raises:
            ValueError: If formatparse cannot compile the pattern.
        """
        self.original_pattern = pattern
        try:
            self.compiled_pattern = formatparse.compile(pattern)
        except Exception as e:
            raise ValueError(f"Invalid pattern '{pattern}': {e}") from e

    def parse(self, value: str) -> dict[str, Any]:
        """
        Match ``value`` against the pattern.

        Raises:
            ValueError: If the string does not match.
            TypeError: If ``value`` is not a string.
        """
        if not isinstance(value, str):
            raise TypeError(f"Expected string, got {type(value).__name__}")
        result = self.compiled_pattern.parse(value.strip())
        if result is None:
            raise ValueError(f"'{value}' does not match pattern '{self.original_pattern}'")
        return {k: v.strip() if isinstance(v, str) else v for k, v in result.named.items()}

    def __or__(self, other: "ParsePattern | ChainedParsePattern") -> "ChainedParsePattern":
        if isinstance(other, ParsePattern):
            return ChainedParsePattern([self, other])
        if isinstance(other, ChainedParsePattern):
            return ChainedParsePattern([self, *other.patterns])
        return NotImplemented

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.original_pattern!r})"


class ChainedParsePattern:
    """Patterns tried in order; the first match wins."""

    def __init__(self, patterns: list[ParsePattern]):
        if not patterns:
            raise ValueError("ChainedParsePattern requires at least one pattern")
        for i, pattern in enumerate(patterns):
            if not isinstance(pattern, ParsePattern):
                raise TypeError(
                    f"All patterns must be ParsePattern instances, "
                    f"but got {type(pattern).__name__} at index {i}"
                )
        self.patterns = patterns

    def parse(self, value: str) -> dict[str, Any]:
        """
        Try each pattern in order until one succeeds.

        Raises:
            ValueError: If none of the patterns match.
            TypeError: If ``value`` is not a string.
        """
        if not isinstance(value, str):
            raise TypeError(f"Expected string, got {type(value).__name__}")
        for pattern in self.patterns:
            try:
                return pattern.parse(value)
            except ValueError:
                pass
        expected = " | ".join(repr(p.original_pattern) for p in self.patterns)
        raise ValueError(f"'{value}' did not match any of {expected}")

    def __or__(self, other: "ParsePattern | ChainedParsePattern") -> "ChainedParsePattern":
        if isinstance(other, ParsePattern):
            return ChainedParsePattern([*self.patterns, other])
        if isinstance(other, ChainedParsePattern):
            return ChainedParsePattern([*self.patterns, *other.patterns])
        return NotImplemented


def parse(pattern: str) -> ParsePattern:
    """
    Create a format-string pattern.

    Args:
        pattern: Format string with named fields, e.g. ``"{low} .. {high}"``.

    Returns:
        A pattern usable standalone or as a :class:`ParsableModel` field default.
    """
    return ParsePattern(pattern)


class RegexParsePattern(ParsePattern):
    """A pattern backed by a regular expression with named groups."""

    def __init__(self, pattern: str) -> None:
        self.original_pattern = pattern
        try:
            self.compiled_regex = re.compile(pattern)
        except re.error as e:
            raise ValueError(f"Invalid regex pattern: {e}") from e
        if not self.compiled_regex.groupindex:
            raise ValueError("Regex pattern must contain named groups (e.g., (?P<name>...))")

    def parse(self, value: str) -> dict[str, Any]:
        """
        Match the whole of ``value`` and return its named groups.

        Groups that did not participate in the match are left out.
        """
        if not isinstance(value, str):
            raise TypeError(f"Expected string, got {type(value).__name__}")
        match = self.compiled_regex.fullmatch(value.strip())
        if match is None:
            raise ValueError(f"'{value}' does not match regex pattern '{self.original_pattern}'")
        return {
            name: group.strip() if isinstance(group, str) else group
            for name, group in match.groupdict().items()
            if group is not None
        }


def parse_regex(pattern: str) -> ParsePattern:
    r"""
    Create a regular-expression pattern.

    The whole input must match. Example: ``parse_regex(r"(?P<kind>sin|cos)(?P<k>\d+)")``.

    Raises:
        ValueError: If the expression is invalid or has no named groups.
    """
    return RegexParsePattern(pattern)


AnyPattern = ParsePattern | ChainedParsePattern


def _model_type(annotation: Any) -> type[BaseModel] | None:
    """The BaseModel subclass inside an annotation such as ``Model`` or ``Model | None``."""
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    origin = get_origin(annotation)
    if origin is Union or origin is types.UnionType:
        for arg in get_args(annotation):
            if isinstance(arg, type) and issubclass(arg, BaseModel):
                return arg
    return None


class ParsableModel(BaseModel):
    """
    Pydantic model whose fields may be given as strings matching a pattern.

    A field whose class-level default is a pattern is parsed from a string into
    the field's model type before validation.

    Example:
        ```python
        from pydantic import BaseModel
        from graphonlqr.patterns import ParsableModel, parse

        class Interval(BaseModel):
            low: float
            high: float

        class Initial(ParsableModel):
            range: Interval = parse("{low} .. {high}")

        Initial(range="-5 .. 5").range.high  # 5.0
        ```
    """

    _parse_patterns: ClassVar[dict[str, tuple[AnyPattern, type[BaseModel]]]] = {}

    def __init_subclass__(cls: type["ParsableModel"], **kwargs: Any) -> None:
        """Collect fields whose default is a pattern."""
        super().__init_subclass__(**kwargs)

        cls._parse_patterns = {}
        for base in cls.__mro__[1:]:
            if hasattr(base, "_parse_patterns"):
                cls._parse_patterns.update(base._parse_patterns.copy())

        annotations = getattr(cls, "__annotations__", {})
        for field_name, annotation in annotations.items():
            default_value = getattr(cls, field_name, None)
            if not isinstance(default_value, (ParsePattern, ChainedParsePattern)):
                continue
            target = _model_type(annotation)
            if target is None:
                raise TypeError(
                    f"{cls.__name__}.{field_name} has a parse pattern but is not a model field"
                )
            cls._parse_patterns[field_name] = (default_value, target)
            # the pattern must not become the field default
            delattr(cls, field_name)

    @model_validator(mode="before")
    @classmethod
    def _parse_string_fields(cls, data: Any) -> Any:
        """Parse string values for fields that have patterns."""
        if not isinstance(data, dict):
            return data
        result = data.copy()
        for field_name, (pattern_obj, _target) in cls._parse_patterns.items():
            value = result.get(field_name)
            if isinstance(value, str):
                result[field_name] = pattern_obj.parse(value)
        return result

    @classmethod
    def validate_with_recovery(cls, data: dict[str, Any]) -> "ParsableModel | ParseReport":
        """
        Validate ``data``, returning a :class:`ParseReport` instead of raising.

        Every validation issue pydantic reports ends up in the report's errors.
        """
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            report = ParseReport(data=dict(data))
            for error in e.errors():
                report.errors.append(
                    {
                        "field": ".".join(str(loc) for loc in error.get("loc", [])),
                        "error": error.get("msg", "Validation error"),
                        "type": error.get("type", "validation_error"),
                        "input": error.get("input"),
                    }
                )
            return report


_ROW_SEPARATOR = ";"
_ENTRY_SEPARATOR = ","


def parse_numbers(value: str | float | list[Any]) -> list[float]:
    """Read ``"1, 2.5, 3"`` (or a number, or a list) as a list of floats."""
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, str):
        parts = [p for p in value.replace(_ENTRY_SEPARATOR, " ").split() if p]
        if not parts:
            raise ValueError("expected at least one number")
        try:
            return [float(p) for p in parts]
        except ValueError as e:
            raise ValueError(f"'{value}' is not a list of numbers") from e
    return [float(v) for v in value]


def parse_matrix(value: Any) -> NDArray[np.float64]:
    """
    Read a matrix written as ``"a, b; c, d"``.

    A single number becomes a 1×1 matrix; callers broadcast it to ``s·I``.
    Arrays and nested lists pass through.

    Raises:
        ValueError: If rows have different lengths.
    """
    if isinstance(value, np.ndarray):
        return np.atleast_2d(np.asarray(value, dtype=float))
    if isinstance(value, (int, float)):
        return np.array([[float(value)]])
    if isinstance(value, str):
        rows = [parse_numbers(row) for row in value.split(_ROW_SEPARATOR) if row.strip()]
    else:
        rows = [parse_numbers(row) for row in value]
    if not rows:
        raise ValueError("empty matrix")
    if len({len(row) for row in rows}) != 1:
        raise ValueError(f"matrix rows have different lengths in '{value}'")
    return np.array(rows, dtype=float)
