"""Runtime parameter store with a declare/get/set API and typed values.

Zero-dependency by design: algorithms declare the parameters they need and
read them through a scoped view; the integration layer owns declaration
matching, strict type checking, change notification, and all-or-nothing
validation of override files (flat JSON objects keyed by dotted names).
Integers and floats are distinct types: ``40`` does not satisfy a float
parameter, ``40.0`` does not satisfy an int one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable


class ParamError(Exception):
    pass


class RedeclarationError(ParamError):
    pass


class InvalidNameError(ParamError):
    pass


class UndeclaredError(ParamError):
    pass


class ParamTypeMismatchError(ParamError):
    def __init__(self, name: str, expected: "ValueTag", got: "ValueTag"):
        super().__init__(f"{name}: expected {expected.name}, got {got.name}")
        self.name = name
        self.expected = expected
        self.got = got


class ReadOnlyError(ParamError):
    pass


class UnknownParameterError(ParamError):
    def __init__(self, names: list[str]):
        super().__init__(f"unknown parameters: {', '.join(names)}")
        self.names = names


class OverrideParseError(ParamError):
    pass


class ValueTag(Enum):
    BOOL = "bool"
    INT = "int"
    FLOAT = "float"
    TEXT = "text"
    BOOL_ARRAY = "bool_array"
    INT_ARRAY = "int_array"
    FLOAT_ARRAY = "float_array"
    TEXT_ARRAY = "text_array"


_SCALAR_TAGS = {bool: ValueTag.BOOL, int: ValueTag.INT, float: ValueTag.FLOAT, str: ValueTag.TEXT}
_ARRAY_TAGS = {bool: ValueTag.BOOL_ARRAY, int: ValueTag.INT_ARRAY,
               float: ValueTag.FLOAT_ARRAY, str: ValueTag.TEXT_ARRAY}


@dataclass(frozen=True)
class ParameterValue:
    tag: ValueTag
    value: Any

    def __post_init__(self):
        _check_consistent(self.tag, self.value)
        if self.tag is ValueTag.FLOAT_ARRAY:
            object.__setattr__(self, "value", tuple(self.value))
        elif self.tag in (ValueTag.BOOL_ARRAY, ValueTag.INT_ARRAY, ValueTag.TEXT_ARRAY):
            object.__setattr__(self, "value", tuple(self.value))

    @staticmethod
    def of(raw: Any) -> "ParameterValue":
        """Infer the tag from a plain Python value; empty lists are ambiguous."""
        return ParameterValue(infer_tag(raw), raw)


def infer_tag(raw: Any) -> ValueTag:
    if type(raw) in _SCALAR_TAGS:
        return _SCALAR_TAGS[type(raw)]
    if isinstance(raw, (list, tuple)):
        if not raw:
            raise ParamError("cannot infer the element type of an empty array")
        element_types = {type(v) for v in raw}
        if len(element_types) == 1 and element_types.issubset(_ARRAY_TAGS):
            return _ARRAY_TAGS[element_types.pop()]
        raise ParamError(f"mixed or unsupported array elements: {raw!r}")
    raise ParamError(f"unsupported parameter value: {raw!r}")


def _check_consistent(tag: ValueTag, value: Any) -> None:
    scalar_types = {ValueTag.BOOL: bool, ValueTag.INT: int, ValueTag.FLOAT: float,
                    ValueTag.TEXT: str}
    array_types = {ValueTag.BOOL_ARRAY: bool, ValueTag.INT_ARRAY: int,
                   ValueTag.FLOAT_ARRAY: float, ValueTag.TEXT_ARRAY: str}
    if tag in scalar_types:
        if type(value) is not scalar_types[tag]:
            raise ParamError(f"value {value!r} does not match tag {tag.name}")
        if tag is ValueTag.FLOAT and not math.isfinite(value):
            raise ParamError("float parameters must be finite")
    elif tag in array_types:
        if not isinstance(value, (list, tuple)):
            raise ParamError(f"value {value!r} does not match tag {tag.name}")
        element = array_types[tag]
        for v in value:
            if type(v) is not element:
                raise ParamError(f"array element {v!r} does not match tag {tag.name}")
            if tag is ValueTag.FLOAT_ARRAY and not math.isfinite(v):
                raise ParamError("float array elements must be finite")
    else:  # pragma: no cover - exhaustive enum
        raise ParamError(f"unhandled tag {tag}")


@dataclass(frozen=True)
class ParameterDescriptor:
    name: str
    default: ParameterValue
    read_only: bool = False
    description: str = ""


def validate_name(name: str) -> None:
    if not name or any(not segment for segment in name.split(".")):
        raise InvalidNameError(f"invalid parameter name: {name!r}")


class ParamStore:
    """Declared parameters with current values and change subscriptions."""

    def __init__(self):
        self._descriptors: dict[str, ParameterDescriptor] = {}
        self._values: dict[str, ParameterValue] = {}
        self._watchers: dict[str, list[Callable[[ParameterValue, ParameterValue], None]]] = {}

    def declare(self, desc: ParameterDescriptor) -> None:
        validate_name(desc.name)
        if desc.name in self._descriptors:
            raise RedeclarationError(desc.name)
        self._descriptors[desc.name] = desc
        self._values[desc.name] = desc.default

    def declared(self, name: str) -> bool:
        return name in self._descriptors

    def names(self) -> list[str]:
        return list(self._descriptors)

    def descriptor(self, name: str) -> ParameterDescriptor:
        self._require(name)
        return self._descriptors[name]

    def get(self, name: str) -> ParameterValue:
        self._require(name)
        return self._values[name]

    def get_value(self, name: str) -> Any:
        """Unwrapped current value (lists come back as plain lists)."""
        value = self.get(name).value
        return list(value) if isinstance(value, tuple) else value

    def set(self, name: str, value: ParameterValue | Any) -> None:
        self._require(name)
        desc = self._descriptors[name]
        if desc.read_only:
            raise ReadOnlyError(name)
        new = value if isinstance(value, ParameterValue) else ParameterValue.of(value)
        self._check_tag(name, new)
        self._commit(name, new)

    def _commit(self, name: str, new: ParameterValue) -> None:
        old = self._values[name]
        self._values[name] = new
        for callback in self._watchers.get(name, []):
            callback(old, new)

    def _check_tag(self, name: str, value: ParameterValue) -> None:
        declared_tag = self._descriptors[name].default.tag
        if value.tag is not declared_tag:
            raise ParamTypeMismatchError(name, declared_tag, value.tag)

    def on_change(self, name: str,
                  callback: Callable[[ParameterValue, ParameterValue], None]) -> Callable[[], None]:
        self._require(name)
        self._watchers.setdefault(name, []).append(callback)

        def unsubscribe():
            self._watchers[name].remove(callback)

        return unsubscribe

    def apply_overrides(self, document: str | dict) -> int:
        """Validate and apply a full override document atomically.

        Any unknown name, type mismatch, or parse failure leaves every value
        untouched. Returns the number of parameters applied.
        """
        if isinstance(document, str):
            try:
                parsed = json.loads(document) if document.strip() else {}
            except json.JSONDecodeError as exc:
                raise OverrideParseError(str(exc)) from exc
        else:
            parsed = document
        if not isinstance(parsed, dict):
            raise OverrideParseError("override document must be a JSON object")

        staged: list[tuple[str, ParameterValue]] = []
        unknown = [name for name in parsed if name not in self._descriptors]
        if unknown:
            raise UnknownParameterError(sorted(unknown))
        for name, raw in parsed.items():
            declared_tag = self._descriptors[name].default.tag
            value = _coerce_override(name, raw, declared_tag)
            if self._descriptors[name].read_only:
                raise ReadOnlyError(name)
            staged.append((name, value))
        for name, value in staged:
            self._commit(name, value)
        return len(staged)

    def snapshot(self) -> dict[str, Any]:
        """Read-only copy safe to hand to another thread."""
        return {name: self.get_value(name) for name in self._descriptors}

    def scoped(self, prefix: str) -> "ParamView":
        return ParamView(self, prefix)

    def _require(self, name: str) -> None:
        if name not in self._descriptors:
            raise UndeclaredError(name)


def _coerce_override(name: str, raw: Any, declared_tag: ValueTag) -> ParameterValue:
    """Map a JSON value onto the declared tag, strictly.

    JSON has no int/float literal distinction beyond the fractional part, so
    the parsed Python type decides; an empty array matches any array tag.
    """
    if isinstance(raw, list) and not raw:
        if declared_tag in (ValueTag.BOOL_ARRAY, ValueTag.INT_ARRAY,
                            ValueTag.FLOAT_ARRAY, ValueTag.TEXT_ARRAY):
            return ParameterValue(declared_tag, [])
        raise ParamTypeMismatchError(name, declared_tag, ValueTag.TEXT_ARRAY)
    try:
        tag = infer_tag(raw)
    except ParamError as exc:
        raise OverrideParseError(f"{name}: {exc}") from exc
    if tag is not declared_tag:
        raise ParamTypeMismatchError(name, declared_tag, tag)
    return ParameterValue(tag, raw)


class ParamView:
    """Prefix-scoped access used by algorithm cores; keeps them store-agnostic."""

    def __init__(self, store: ParamStore, prefix: str):
        self._store = store
        self._prefix = prefix.rstrip(".")

    def _full(self, name: str) -> str:
        return f"{self._prefix}.{name}" if self._prefix else name

    def declare(self, name: str, default: Any, read_only: bool = False,
                description: str = "") -> None:
        self._store.declare(ParameterDescriptor(
            self._full(name), ParameterValue.of(default), read_only, description))

    def get(self, name: str) -> Any:
        return self._store.get_value(self._full(name))

    def set(self, name: str, value: Any) -> None:
        self._store.set(self._full(name), value)

    def on_change(self, name: str, callback) -> Callable[[], None]:
        return self._store.on_change(self._full(name), callback)
