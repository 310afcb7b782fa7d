"""Shared domain vocabulary: systems, identifiers, field classes, schemas, result tables."""

from __future__ import annotations

import datetime as dt
import enum
import json
import re
from dataclasses import dataclass, field
from functools import cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import SchemaMismatch, SpecSyntax, UnknownColumn


class System(str, enum.Enum):
    HIPE = "HIPE"
    CDM = "CDM"
    PCRS = "PCRS"
    RETINA_SCREEN = "RETINA_SCREEN"

    @property
    def stem(self) -> str:
        """File stem used for ``<stem>.csv`` / ``<stem>_pii.csv`` / ``<stem>.schema``."""
        return self.value.lower()

    @classmethod
    def parse(cls, text: str) -> "System":
        key = text.strip().upper().replace("-", "_")
        aliases = {"RS": "RETINA_SCREEN", "RETINASCREEN": "RETINA_SCREEN"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown source system {text!r}") from None


# Canonical order used wherever systems are enumerated.
SYSTEMS: tuple[System, ...] = (System.HIPE, System.CDM, System.PCRS, System.RETINA_SCREEN)


class IdentifierKind(str, enum.Enum):
    MRN = "MRN"
    IHI = "IHI"
    CDM_ID = "CDM_ID"
    PCRS_ID = "PCRS_ID"
    RS_ID = "RS_ID"
    MOBILE = "MOBILE"
    EIRCODE_KEY = "EIRCODE_KEY"
    META_ID = "META_ID"


SYSTEM_ID_KIND: dict[System, IdentifierKind] = {
    System.HIPE: IdentifierKind.MRN,
    System.CDM: IdentifierKind.CDM_ID,
    System.PCRS: IdentifierKind.PCRS_ID,
    System.RETINA_SCREEN: IdentifierKind.RS_ID,
}

_DIGITS = re.compile(r"^[0-9]+$")
_MOBILE = re.compile(r"^[0-9]{9,10}$")
_ROUTING_KEY = re.compile(r"^[A-Z][0-9A-Z]{2}$")


def valid_identifier(kind: IdentifierKind, value: str) -> bool:
    """Syntactic check of an identifier value for its kind."""
    if kind is IdentifierKind.EIRCODE_KEY:
        return bool(_ROUTING_KEY.match(value))
    if kind is IdentifierKind.MOBILE:
        return bool(_MOBILE.match(value))
    if kind is IdentifierKind.META_ID:
        return bool(value)
    return bool(_DIGITS.match(value))


class FieldClass(str, enum.Enum):
    PII = "PII"
    QUASI_IDENTIFIER = "QUASI_IDENTIFIER"
    CLINICAL = "CLINICAL"
    ADMINISTRATIVE = "ADMINISTRATIVE"
    AGGREGATE = "AGGREGATE"


class ValueType(str, enum.Enum):
    STRING = "STRING"
    INT = "INT"
    DATE = "DATE"
    DECIMAL = "DECIMAL"
    ENUM = "ENUM"


# Column names that are PII wherever they appear.
ALWAYS_PII = frozenset({"name", "dob", "mobile", "address"})


def parse_value(value_type: ValueType, text: str, allowed: Sequence[str] = ()) -> Any:
    """Parse one non-empty CSV cell. Raises ValueError on bad input."""
    if value_type is ValueType.INT:
        if not re.fullmatch(r"-?[0-9]+", text):
            raise ValueError(f"not an integer: {text!r}")
        return int(text)
    if value_type is ValueType.DECIMAL:
        return float(text)
    if value_type is ValueType.DATE:
        return dt.date.fromisoformat(text)
    if value_type is ValueType.ENUM and allowed and text not in allowed:
        raise ValueError(f"{text!r} not in {list(allowed)}")
    return text


def format_value(value: Any) -> str:
    """Inverse of :func:`parse_value`; ``None`` becomes the empty cell."""
    if value is None:
        return ""
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, float):
        return repr(round(value, 6))
    return str(value)


@dataclass(frozen=True)
class Column:
    name: str
    value_type: ValueType
    field_class: FieldClass
    nullable: bool = False
    values: tuple[str, ...] = ()
    note: str = ""

    def parse(self, text: str) -> Any:
        if text == "":
            if not self.nullable:
                raise ValueError("empty value in non-nullable column")
            return None
        return parse_value(self.value_type, text, self.values)


@dataclass(frozen=True)
class SchemaDescriptor:
    system: System
    columns: tuple[Column, ...]
    primary_identifier: IdentifierKind
    primary_column: str

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"{self.system.value}: duplicate column names")
        if self.primary_column not in names:
            raise SchemaMismatch(f"{self.system.value}: primary column {self.primary_column!r} missing")
        if self.column(self.primary_column).nullable:
            raise SchemaMismatch(f"{self.system.value}: primary column must be non-nullable")
        for c in self.columns:
            if c.name in ALWAYS_PII and c.field_class is not FieldClass.PII:
                raise SchemaMismatch(f"{self.system.value}.{c.name} must be classed PII")

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise UnknownColumn(f"{self.system.value} has no column {name!r}")

    def index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise UnknownColumn(f"{self.system.value} has no column {name!r}") from None

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            entry: dict[str, Any] = {
                "name": c.name,
                "type": c.value_type.value,
                "field_class": c.field_class.value,
                "nullable": c.nullable,
            }
            if c.values:
                entry["values"] = list(c.values)
            if c.note:
                entry["note"] = c.note
            cols.append(entry)
        return {
            "system": self.system.value,
            "primary_identifier": self.primary_identifier.value,
            "primary_column": self.primary_column,
            "columns": cols,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SchemaDescriptor":
        try:
            columns = tuple(
                Column(
                    name=c["name"],
                    value_type=ValueType(c["type"]),
                    field_class=FieldClass(c["field_class"]),
                    nullable=bool(c.get("nullable", False)),
                    values=tuple(c.get("values", ())),
                    note=c.get("note", ""),
                )
                for c in doc["columns"]
            )
            return cls(
                system=System(doc["system"]),
                columns=columns,
                primary_identifier=IdentifierKind(doc["primary_identifier"]),
                primary_column=doc["primary_column"],
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SpecSyntax(f"malformed schema descriptor: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def load(cls, path: str | Path) -> "SchemaDescriptor":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SpecSyntax(f"{path}: {exc}") from exc
        return cls.from_dict(doc)


def shipped_path(*parts: str) -> Path:
    """Path of a data file shipped inside the package."""
    return Path(str(resources.files("fedlink").joinpath("data", *parts)))


@cache
def default_descriptor(system: System) -> SchemaDescriptor:
    return SchemaDescriptor.load(shipped_path("schemas", f"{system.stem}.schema"))


def classify_field(column_name: str, system: System | str) -> FieldClass:
    """Declared class of a column; the PII sidecar columns count as registered for every system."""
    if not isinstance(system, System):
        system = System.parse(system)
    descriptor = default_descriptor(system)
    if column_name in ALWAYS_PII and column_name not in descriptor.column_names:
        return FieldClass.PII
    return descriptor.column(column_name).field_class


@dataclass(frozen=True)
class ResultColumn:
    name: str
    value_type: ValueType
    field_class: FieldClass


# Every column a dispatched query may produce, with its class.
_RC = [
    ("source_system", ValueType.ENUM, FieldClass.ADMINISTRATIVE),
    ("record_id", ValueType.STRING, FieldClass.ADMINISTRATIVE),
    ("event_date", ValueType.DATE, FieldClass.ADMINISTRATIVE),
    ("mrn", ValueType.STRING, FieldClass.ADMINISTRATIVE),
    ("ihi", ValueType.STRING, FieldClass.ADMINISTRATIVE),
    ("cdm_id", ValueType.STRING, FieldClass.ADMINISTRATIVE),
    ("pcrs_id", ValueType.STRING, FieldClass.ADMINISTRATIVE),
    ("rs_id", ValueType.STRING, FieldClass.ADMINISTRATIVE),
    ("name", ValueType.STRING, FieldClass.PII),
    ("dob", ValueType.DATE, FieldClass.PII),
    ("mobile", ValueType.STRING, FieldClass.PII),
    ("address", ValueType.STRING, FieldClass.PII),
    ("sex", ValueType.ENUM, FieldClass.QUASI_IDENTIFIER),
    ("age", ValueType.INT, FieldClass.QUASI_IDENTIFIER),
    ("eircode_key", ValueType.STRING, FieldClass.QUASI_IDENTIFIER),
    ("area", ValueType.STRING, FieldClass.QUASI_IDENTIFIER),
    ("item", ValueType.STRING, FieldClass.CLINICAL),
    ("detail", ValueType.STRING, FieldClass.CLINICAL),
    ("conditions", ValueType.STRING, FieldClass.CLINICAL),
    ("diabetes_type", ValueType.ENUM, FieldClass.CLINICAL),
    ("admission_date", ValueType.DATE, FieldClass.ADMINISTRATIVE),
    ("diagnosis_code", ValueType.STRING, FieldClass.CLINICAL),
    ("diagnosis_desc", ValueType.STRING, FieldClass.CLINICAL),
    ("procedure", ValueType.STRING, FieldClass.CLINICAL),
    ("rs_status", ValueType.ENUM, FieldClass.CLINICAL),
    ("screening_date", ValueType.DATE, FieldClass.ADMINISTRATIVE),
    ("retinopathy_grade", ValueType.ENUM, FieldClass.CLINICAL),
    ("sbp", ValueType.INT, FieldClass.CLINICAL),
    ("dbp", ValueType.INT, FieldClass.CLINICAL),
    ("hypertension", ValueType.ENUM, FieldClass.CLINICAL),
    ("medications", ValueType.STRING, FieldClass.CLINICAL),
    ("medication", ValueType.STRING, FieldClass.CLINICAL),
    ("medication_class", ValueType.ENUM, FieldClass.CLINICAL),
    ("scheme", ValueType.ENUM, FieldClass.ADMINISTRATIVE),
    ("hospital_admissions", ValueType.INT, FieldClass.CLINICAL),
    ("hospital_amputations", ValueType.INT, FieldClass.CLINICAL),
    ("bmi", ValueType.DECIMAL, FieldClass.CLINICAL),
    ("family_history", ValueType.ENUM, FieldClass.CLINICAL),
    ("activity_per_week", ValueType.INT, FieldClass.CLINICAL),
    ("nafld", ValueType.ENUM, FieldClass.CLINICAL),
    ("ethnicity_risk", ValueType.ENUM, FieldClass.CLINICAL),
    ("matched_factors", ValueType.STRING, FieldClass.CLINICAL),
    ("matched_cvd", ValueType.STRING, FieldClass.CLINICAL),
    ("antecedent", ValueType.STRING, FieldClass.CLINICAL),
    ("in_hipe", ValueType.ENUM, FieldClass.ADMINISTRATIVE),
    ("in_cdm", ValueType.ENUM, FieldClass.ADMINISTRATIVE),
    ("in_pcrs", ValueType.ENUM, FieldClass.ADMINISTRATIVE),
    ("in_rs", ValueType.ENUM, FieldClass.ADMINISTRATIVE),
    ("row_count", ValueType.INT, FieldClass.AGGREGATE),
]
RESULT_COLUMNS: dict[str, ResultColumn] = {n: ResultColumn(n, t, c) for n, t, c in _RC}


def result_columns(names: Iterable[str]) -> tuple[ResultColumn, ...]:
    return tuple(RESULT_COLUMNS[n] for n in names)


@dataclass(frozen=True)
class ResultTable:
    """A tabular query result; ``name`` is ``result_value`` unless persisted as an asset."""

    columns: tuple[ResultColumn, ...]
    rows: tuple[tuple, ...]
    provenance: frozenset[System]
    name: str = "result_value"
    created_at: dt.datetime = field(default_factory=lambda: dt.datetime.now(dt.timezone.utc))
    asset_id: str | None = None
    condition_type: str | None = None
    params: str | None = None

    def __post_init__(self):
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaMismatch(f"row {i} has {len(row)} values, expected {width}")
        if not self.provenance or not set(self.provenance) <= set(SYSTEMS):
            raise SchemaMismatch("provenance must be a nonempty subset of the four systems")

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        i = self.column_names.index(name)
        return [r[i] for r in self.rows]

    def records(self) -> list[dict]:
        names = self.column_names
        return [dict(zip(names, r)) for r in self.rows]

    def same_content(self, other: "ResultTable") -> bool:
        """Equality ignoring timestamps and naming."""
        return (
            self.columns == other.columns
            and self.rows == other.rows
            and self.provenance == other.provenance
        )

    def cells(self) -> Iterable[str]:
        for row in self.rows:
            for v in row:
                yield format_value(v)
