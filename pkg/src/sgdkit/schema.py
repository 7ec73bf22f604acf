"""Service schemas: intents and slots with natural-language descriptions.

The on-disk format is the released SGD ``schema.json`` layout: a JSON array of
service objects. Field order on output follows the released files so a parsed
and re-serialized file differs from the original only in whitespace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

DONTCARE = "dontcare"

_SERVICE_FIELDS = ("service_name", "description", "slots", "intents")
_SLOT_FIELDS = ("name", "description", "is_categorical", "possible_values")
_INTENT_FIELDS = (
    "name",
    "description",
    "is_transactional",
    "required_slots",
    "optional_slots",
    "result_slots",
)


class SchemaError(ValueError):
    """Base class for schema loading problems."""


class SchemaParseError(SchemaError):
    """The document is not well-formed JSON."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaFormatError(SchemaError):
    """Well-formed JSON that does not follow the schema file layout."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class SchemaValidationError(SchemaError):
    """Raised when serializing schemas that fail validation."""

    def __init__(self, report: "SchemaValidationReport"):
        lines = "; ".join(f"{loc}: {msg}" for loc, msg in report.errors)
        super().__init__(f"invalid schema: {lines}")
        self.report = report


@dataclass(frozen=True)
class SlotDef:
    name: str
    description: str = ""
    is_categorical: bool = False
    possible_values: tuple[str, ...] = ()


@dataclass(frozen=True)
class IntentDef:
    name: str
    description: str = ""
    is_transactional: bool = False
    required_slots: tuple[str, ...] = ()
    # slot name -> default value, in declaration order
    optional_slots: dict[str, str] = field(default_factory=dict)
    result_slots: tuple[str, ...] = ()

    @property
    def argument_slots(self) -> tuple[str, ...]:
        return self.required_slots + tuple(self.optional_slots)


@dataclass(frozen=True)
class ServiceSchema:
    service_name: str
    description: str = ""
    slots: tuple[SlotDef, ...] = ()
    intents: tuple[IntentDef, ...] = ()

    def slot(self, name: str) -> SlotDef:
        for s in self.slots:
            if s.name == name:
                return s
        raise KeyError(f"{self.service_name} has no slot {name!r}")

    def intent(self, name: str) -> IntentDef:
        for i in self.intents:
            if i.name == name:
                return i
        raise KeyError(f"{self.service_name} has no intent {name!r}")

    def has_slot(self, name: str) -> bool:
        return any(s.name == name for s in self.slots)

    def has_intent(self, name: str) -> bool:
        return any(i.name == name for i in self.intents)


@dataclass
class SchemaValidationReport:
    """Errors and warnings as ``(location, message)`` pairs, in document order."""

    errors: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, location: str, message: str) -> None:
        self.errors.append((location, message))

    def warn(self, location: str, message: str) -> None:
        self.warnings.append((location, message))

    def extend(self, other: "SchemaValidationReport", prefix: str = "") -> None:
        self.errors.extend((prefix + loc, msg) for loc, msg in other.errors)
        self.warnings.extend((prefix + loc, msg) for loc, msg in other.warnings)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "errors": [{"location": loc, "message": msg} for loc, msg in self.errors],
            "warnings": [{"location": loc, "message": msg} for loc, msg in self.warnings],
        }


def load_json_document(data: bytes | str, error_cls=SchemaParseError):
    """Decode a UTF-8 JSON document, turning decode failures into positioned errors."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise error_cls(f"invalid UTF-8: {exc.reason}", 1, exc.start + 1) from exc
    else:
        text = data
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise error_cls(exc.msg, exc.lineno, exc.colno) from exc


class _Reader:
    """Shared field checking for the strict/lenient JSON readers."""

    def __init__(self, strict: bool, warnings: list | None, error_cls=SchemaFormatError):
        self.strict = strict
        self.warnings = warnings
        self.error_cls = error_cls

    def obj(self, value, path: str, known: Sequence[str], required: Sequence[str]) -> dict:
        if not isinstance(value, dict):
            raise self.error_cls(path, f"expected an object, got {type(value).__name__}")
        for key in value:
            if key not in known:
                if self.strict:
                    raise self.error_cls(f"{path}.{key}", f"unknown field {key!r}")
                if self.warnings is not None:
                    self.warnings.append((f"{path}.{key}", f"unknown field {key!r} ignored"))
        for key in required:
            if key not in value:
                raise self.error_cls(path, f"missing field {key!r}")
        return value

    def str(self, value, path: str) -> str:
        if not isinstance(value, str):
            raise self.error_cls(path, f"expected a string, got {type(value).__name__}")
        return value

    def bool(self, value, path: str) -> bool:
        if not isinstance(value, bool):
            raise self.error_cls(path, f"expected a boolean, got {type(value).__name__}")
        return value

    def int(self, value, path: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error_cls(path, f"expected an integer, got {type(value).__name__}")
        return value

    def str_list(self, value, path: str) -> tuple[str, ...]:
        if not isinstance(value, list):
            raise self.error_cls(path, f"expected a list, got {type(value).__name__}")
        return tuple(self.str(v, f"{path}[{i}]") for i, v in enumerate(value))

    def str_map(self, value, path: str) -> dict[str, str]:
        if not isinstance(value, dict):
            raise self.error_cls(path, f"expected an object, got {type(value).__name__}")
        return {k: self.str(v, f"{path}.{k}") for k, v in value.items()}

    def list(self, value, path: str) -> list:
        if not isinstance(value, list):
            raise self.error_cls(path, f"expected a list, got {type(value).__name__}")
        return value


def _parse_slot(r: _Reader, raw, path: str) -> SlotDef:
    obj = r.obj(raw, path, _SLOT_FIELDS, ("name",))
    return SlotDef(
        name=r.str(obj["name"], f"{path}.name"),
        description=r.str(obj.get("description", ""), f"{path}.description"),
        is_categorical=r.bool(obj.get("is_categorical", False), f"{path}.is_categorical"),
        possible_values=r.str_list(obj.get("possible_values", []), f"{path}.possible_values"),
    )


def _parse_intent(r: _Reader, raw, path: str) -> IntentDef:
    obj = r.obj(raw, path, _INTENT_FIELDS, ("name",))
    return IntentDef(
        name=r.str(obj["name"], f"{path}.name"),
        description=r.str(obj.get("description", ""), f"{path}.description"),
        is_transactional=r.bool(obj.get("is_transactional", False), f"{path}.is_transactional"),
        required_slots=r.str_list(obj.get("required_slots", []), f"{path}.required_slots"),
        optional_slots=r.str_map(obj.get("optional_slots", {}), f"{path}.optional_slots"),
        result_slots=r.str_list(obj.get("result_slots", []), f"{path}.result_slots"),
    )


def schema_from_json(raw, path: str = "$", *, strict: bool = True, warnings: list | None = None) -> ServiceSchema:
    r = _Reader(strict, warnings)
    obj = r.obj(raw, path, _SERVICE_FIELDS, ("service_name",))
    slots = r.list(obj.get("slots", []), f"{path}.slots")
    intents = r.list(obj.get("intents", []), f"{path}.intents")
    return ServiceSchema(
        service_name=r.str(obj["service_name"], f"{path}.service_name"),
        description=r.str(obj.get("description", ""), f"{path}.description"),
        slots=tuple(_parse_slot(r, s, f"{path}.slots[{i}]") for i, s in enumerate(slots)),
        intents=tuple(_parse_intent(r, it, f"{path}.intents[{i}]") for i, it in enumerate(intents)),
    )


def parse_schemas(data: bytes | str, *, strict: bool = True, warnings: list | None = None) -> list[ServiceSchema]:
    """Parse a schema document into a list of services, keeping declaration order.

    In strict mode an unknown field raises :class:`SchemaFormatError`; with
    ``strict=False`` it is ignored and recorded in ``warnings`` (if given) as a
    ``(location, message)`` pair.
    """
    doc = load_json_document(data)
    if not isinstance(doc, list):
        raise SchemaFormatError("$", "top-level value must be a list of services")
    return [schema_from_json(raw, f"$[{i}]", strict=strict, warnings=warnings) for i, raw in enumerate(doc)]


def schema_to_json(schema: ServiceSchema) -> dict:
    return {
        "service_name": schema.service_name,
        "description": schema.description,
        "slots": [
            {
                "name": s.name,
                "description": s.description,
                "is_categorical": s.is_categorical,
                "possible_values": list(s.possible_values),
            }
            for s in schema.slots
        ],
        "intents": [
            {
                "name": i.name,
                "description": i.description,
                "is_transactional": i.is_transactional,
                "required_slots": list(i.required_slots),
                "optional_slots": dict(i.optional_slots),
                "result_slots": list(i.result_slots),
            }
            for i in schema.intents
        ],
    }


def serialize_schemas(schemas: Sequence[ServiceSchema]) -> bytes:
    """Serialize schemas to the canonical document; refuses invalid input."""
    report = validate_schemas(schemas)
    if not report.ok:
        raise SchemaValidationError(report)
    doc = [schema_to_json(s) for s in schemas]
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _duplicates(names: Iterable[str]) -> list[tuple[int, int, str]]:
    """(first index, duplicate index, name) for every repeated name."""
    seen: dict[str, int] = {}
    dups = []
    for i, n in enumerate(names):
        if n in seen:
            dups.append((seen[n], i, n))
        else:
            seen[n] = i
    return dups


def validate_schema(schema: ServiceSchema) -> SchemaValidationReport:
    """Check every structural invariant of one service schema.

    Violations are returned as data; locations are relative to the service
    object (``slots[2].possible_values``) and listed in document order.
    """
    report = SchemaValidationReport()
    if not schema.service_name:
        report.error("service_name", "service name is empty")
    if not schema.description:
        report.warn("description", "service description is empty")
    if not schema.slots:
        report.error("slots", "service declares no slots")
    if not schema.intents:
        report.error("intents", "service declares no intents")

    slots_by_name = {}
    dup_slots = {j: i for i, j, _ in _duplicates(s.name for s in schema.slots)}
    for i, slot in enumerate(schema.slots):
        loc = f"slots[{i}]"
        if not slot.name:
            report.error(f"{loc}.name", "slot name is empty")
        if i in dup_slots:
            report.error(f"{loc}.name", f"duplicate slot name {slot.name!r} (slots[{dup_slots[i]}] and slots[{i}])")
        slots_by_name.setdefault(slot.name, slot)
        if slot.is_categorical:
            if not slot.possible_values:
                report.error(f"{loc}.possible_values", "categorical slot has no possible values")
            for a, b, v in _duplicates(slot.possible_values):
                report.error(f"{loc}.possible_values[{b}]", f"duplicate possible value {v!r} (also at index {a})")
        elif slot.possible_values:
            report.error(f"{loc}.possible_values", "non-categorical slot lists possible values")

    dup_intents = {j: i for i, j, _ in _duplicates(it.name for it in schema.intents)}
    for i, intent in enumerate(schema.intents):
        loc = f"intents[{i}]"
        if not intent.name:
            report.error(f"{loc}.name", "intent name is empty")
        if i in dup_intents:
            report.error(
                f"{loc}.name", f"duplicate intent name {intent.name!r} (intents[{dup_intents[i]}] and intents[{i}])"
            )
        for j, name in enumerate(intent.required_slots):
            if name not in slots_by_name:
                report.error(f"{loc}.required_slots[{j}]", f"unknown slot {name!r}")
        for name, default in intent.optional_slots.items():
            if name not in slots_by_name:
                report.error(f"{loc}.optional_slots.{name}", f"unknown slot {name!r}")
                continue
            if name in intent.required_slots:
                report.error(f"{loc}.optional_slots.{name}", f"slot {name!r} is both required and optional")
            slot = slots_by_name[name]
            if slot.is_categorical and default != DONTCARE and default not in slot.possible_values:
                report.error(
                    f"{loc}.optional_slots.{name}",
                    f"default {default!r} is not a possible value of categorical slot {name!r}",
                )
        for j, name in enumerate(intent.result_slots):
            if name not in slots_by_name:
                report.error(f"{loc}.result_slots[{j}]", f"unknown slot {name!r}")
    return report


def validate_schemas(schemas: Sequence[ServiceSchema]) -> SchemaValidationReport:
    """Validate a collection: each service plus service-name uniqueness."""
    report = SchemaValidationReport()
    dup = {j: i for i, j, _ in _duplicates(s.service_name for s in schemas)}
    for i, schema in enumerate(schemas):
        if i in dup:
            report.error(
                f"[{i}].service_name",
                f"duplicate service name {schema.service_name!r} ([{dup[i]}] and [{i}])",
            )
        report.extend(validate_schema(schema), prefix=f"[{i}].")
    return report


def schema_index(schemas: Iterable[ServiceSchema]) -> dict[str, ServiceSchema]:
    return {s.service_name: s for s in schemas}


def load_schemas(path, *, strict: bool = True) -> dict[str, ServiceSchema]:
    """Read and validate a schema file (or a directory holding ``schema.json``).

    Returns services keyed by name; any validation error raises
    :class:`SchemaValidationError`.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "schema.json"
    schemas = parse_schemas(path.read_bytes(), strict=strict)
    report = validate_schemas(schemas)
    if not report.ok:
        raise SchemaValidationError(report)
    return schema_index(schemas)
