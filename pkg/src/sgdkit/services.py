"""In-memory service backends: entity tables plus intent-call semantics.

Each service is backed by one CSV table whose header names are slots of the
service. A call filters rows by exact cell equality on the arguments that name
table columns; arguments for slots that are not columns (dates, party sizes)
parameterize the call but never filter. The value ``dontcare`` matches any
cell. Tables are never mutated, transactions included.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .schema import DONTCARE, ServiceSchema

SUCCESS = "SUCCESS"
FAILURE = "FAILURE"

VALUE_POOLS_FILE = "value_pools.json"


class EntityTableError(ValueError):
    pass


class CallError(ValueError):
    pass


class RequiredSlotMissing(CallError):
    def __init__(self, slot: str):
        super().__init__(f"required slot {slot!r} missing")
        self.slot = slot


class UnknownArgument(CallError):
    def __init__(self, slot: str):
        super().__init__(f"argument {slot!r} is neither required nor optional for this intent")
        self.slot = slot


@dataclass(frozen=True)
class EntityTable:
    service: str
    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def column_index(self, slot: str) -> int:
        return self.columns.index(slot)

    def row_dict(self, row: tuple[str, ...]) -> dict[str, str]:
        return dict(zip(self.columns, row))

    def values(self, slot: str) -> list[str]:
        """Distinct values of a column in first-seen order."""
        i = self.columns.index(slot)
        return list(dict.fromkeys(r[i] for r in self.rows))


@dataclass(frozen=True)
class IntentCall:
    intent: str
    arguments: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class CallResult:
    status: str
    matches: tuple[tuple[str, ...], ...]
    count: int


def parse_entity_table(text: str, schema: ServiceSchema, source: str = "<table>") -> EntityTable:
    """Parse CSV text (header row of slot names) and check it against the schema."""
    reader = csv.reader(io.StringIO(text))
    records = [r for r in reader if r]
    if not records:
        raise EntityTableError(f"{source}: empty entity table")
    header = tuple(h.strip() for h in records[0])
    for col in header:
        if not schema.has_slot(col):
            raise EntityTableError(f"{source}: unknown column {col!r} (not a slot of {schema.service_name})")
    if len(set(header)) != len(header):
        raise EntityTableError(f"{source}: duplicate column names")
    rows = records[1:]
    if not rows:
        raise EntityTableError(f"{source}: empty entity table")
    categorical = {
        i: schema.slot(col).possible_values for i, col in enumerate(header) if schema.slot(col).is_categorical
    }
    for n, row in enumerate(rows):
        if len(row) != len(header):
            raise EntityTableError(f"{source}: row {n} has {len(row)} cells, expected {len(header)}")
        for i, allowed in categorical.items():
            if row[i] not in allowed:
                raise EntityTableError(
                    f"{source}: row {n}: value {row[i]!r} of categorical column {header[i]!r} "
                    f"is not a possible value"
                )
    return EntityTable(schema.service_name, header, tuple(tuple(r) for r in rows))


def load_entity_table(path: str | Path, schema: ServiceSchema) -> EntityTable:
    path = Path(path)
    return parse_entity_table(path.read_text(encoding="utf-8"), schema, str(path))


def load_entities(path: str | Path, schemas: Mapping[str, ServiceSchema]) -> dict[str, EntityTable]:
    """Load every ``<service_name>.csv`` in a directory (or a single CSV file)."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    tables = {}
    for f in files:
        schema = schemas.get(f.stem)
        if schema is None:
            raise EntityTableError(f"{f}: no schema for service {f.stem!r}")
        tables[f.stem] = load_entity_table(f, schema)
    return tables


def load_value_pools(path: str | Path) -> dict[str, tuple[str, ...]]:
    """Candidate values for slots that no entity table covers (``value_pools.json``).

    Keys are slot names or ``Service.slot`` for a service-specific pool.
    """
    path = Path(path)
    if path.is_dir():
        path = path / VALUE_POOLS_FILE
    if not path.exists():
        return {}
    raw = json.loads(path.read_text(encoding="utf-8"))
    return {k: tuple(v) for k, v in raw.items()}


def find_rows(table: EntityTable, constraints: Mapping[str, str]) -> tuple[tuple[str, ...], ...]:
    """Rows matching every column constraint, in document order."""
    checks = [
        (table.columns.index(slot), value)
        for slot, value in constraints.items()
        if slot in table.columns and value != DONTCARE
    ]
    return tuple(row for row in table.rows if all(row[i] == v for i, v in checks))


def effective_arguments(schema: ServiceSchema, call: IntentCall) -> dict[str, str]:
    """Arguments after validation, with schema defaults filled in for absent optional slots."""
    intent = schema.intent(call.intent)
    allowed = set(intent.argument_slots)
    for slot in call.arguments:
        if slot not in allowed:
            raise UnknownArgument(slot)
    for slot in intent.required_slots:
        if slot not in call.arguments:
            raise RequiredSlotMissing(slot)
    args = dict(intent.optional_slots)
    args.update(call.arguments)
    return args


def call(table: EntityTable, schema: ServiceSchema, c: IntentCall) -> CallResult:
    """Execute an intent call against a table.

    Searches return every matching row; transactions commit the first match
    (document order). No match is a FAILURE result, whereas a missing required
    slot or an unexpected argument raises.
    """
    intent = schema.intent(c.intent)
    matches = find_rows(table, effective_arguments(schema, c))
    if intent.is_transactional:
        matches = matches[:1]
    return CallResult(SUCCESS if matches else FAILURE, matches, len(matches))
