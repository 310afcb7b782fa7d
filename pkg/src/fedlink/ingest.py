"""Local schema layer: load the four source systems as immutable, read-only datasets.

Each system is a headered UTF-8 CSV described by a ``.schema`` descriptor, with
personal details held apart in a ``<system>_pii.csv`` sidecar.  Nothing here
writes back to a loaded source.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterator, Mapping

from .errors import CellTypeError, DuplicateIdentifier, SchemaMismatch
from .model import (
    SYSTEMS,
    FieldClass,
    SchemaDescriptor,
    System,
    default_descriptor,
    format_value,
)

PII_COLUMNS = ("id", "name", "dob", "sex", "mobile", "address", "eircode_key")


@dataclass(frozen=True)
class PiiRecord:
    name: str
    dob: dt.date | None
    sex: str | None
    mobile: str | None
    address: str | None
    eircode_key: str | None

    def pii_strings(self) -> list[str]:
        """Values of the PII-class fields (name, dob, mobile, address) as they would print."""
        return [format_value(v) for v in (self.name, self.dob, self.mobile, self.address) if v]


@dataclass(frozen=True)
class PiiStore:
    system: System
    entries: Mapping[str, PiiRecord]

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, identifier: str) -> PiiRecord | None:
        return self.entries.get(identifier)

    def pii_values(self) -> set[str]:
        out: set[str] = set()
        for rec in self.entries.values():
            out.update(rec.pii_strings())
        return out


@dataclass(frozen=True)
class SourceDataset:
    descriptor: SchemaDescriptor
    rows: tuple[tuple, ...]
    pii: PiiStore | None = None
    origin_path: str = ""

    @property
    def system(self) -> System:
        return self.descriptor.system

    def __len__(self) -> int:
        return len(self.rows)

    @cached_property
    def _key_index(self) -> int:
        return self.descriptor.index(self.descriptor.primary_column)

    def key(self, row: tuple) -> str:
        return row[self._key_index]

    def records(self) -> Iterator[dict[str, Any]]:
        names = self.descriptor.column_names
        for row in self.rows:
            yield dict(zip(names, row))

    @cached_property
    def by_id(self) -> Mapping[str, tuple[tuple, ...]]:
        """Primary identifier -> rows in file order (several for multi-episode HIPE patients)."""
        index: dict[str, list[tuple]] = {}
        for row in self.rows:
            index.setdefault(self.key(row), []).append(row)
        return MappingProxyType({k: tuple(v) for k, v in index.items()})

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self.by_id)

    def records_for(self, identifier: str) -> list[dict[str, Any]]:
        names = self.descriptor.column_names
        return [dict(zip(names, row)) for row in self.by_id.get(identifier, ())]


def _uniqueness_key(descriptor: SchemaDescriptor, row: tuple) -> tuple:
    key = [row[descriptor.index(descriptor.primary_column)]]
    if descriptor.system is System.HIPE:
        key.append(row[descriptor.index("admission_date")])
    return tuple(key)


def load_pii(system: System, path: str | Path) -> PiiStore:
    entries: dict[str, PiiRecord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != PII_COLUMNS:
            raise SchemaMismatch(f"{path}: PII header must be {','.join(PII_COLUMNS)}")
        for lineno, cells in enumerate(reader, start=1):
            if len(cells) != len(PII_COLUMNS):
                raise SchemaMismatch(f"{path}: row {lineno} has {len(cells)} cells")
            ident, name, dob, sex, mobile, address, eir = cells
            if ident in entries:
                raise DuplicateIdentifier(f"{path}: duplicate PII entry {ident!r}")
            try:
                dob_value = dt.date.fromisoformat(dob) if dob else None
            except ValueError as exc:
                raise CellTypeError(f"{path}: row {lineno}, column dob: {exc}", lineno, "dob") from exc
            entries[ident] = PiiRecord(name, dob_value, sex or None, mobile or None,
                                       address or None, eir or None)
    return PiiStore(system, MappingProxyType(entries))


def load_source(
    descriptor_path: str | Path | SchemaDescriptor,
    data_path: str | Path,
    pii_path: str | Path | None = None,
) -> SourceDataset:
    """Load and validate one source; any malformed row aborts the load."""
    if isinstance(descriptor_path, SchemaDescriptor):
        descriptor = descriptor_path
    else:
        descriptor = SchemaDescriptor.load(descriptor_path)
    columns = descriptor.columns
    rows: list[tuple] = []
    seen: set[tuple] = set()
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != descriptor.column_names:
            raise SchemaMismatch(
                f"{data_path}: header {header} does not match {descriptor.system.value} descriptor"
            )
        for lineno, cells in enumerate(reader, start=1):
            if len(cells) != len(columns):
                raise SchemaMismatch(f"{data_path}: row {lineno} has {len(cells)} cells, expected {len(columns)}")
            values = []
            for col, text in zip(columns, cells):
                try:
                    values.append(col.parse(text))
                except ValueError as exc:
                    raise CellTypeError(
                        f"{data_path}: row {lineno}, column {col.name}: {exc}", lineno, col.name
                    ) from exc
            row = tuple(values)
            ukey = _uniqueness_key(descriptor, row)
            if ukey in seen:
                raise DuplicateIdentifier(f"{data_path}: duplicate identifier {ukey} at row {lineno}")
            seen.add(ukey)
            rows.append(row)

    pii = None
    if pii_path is not None:
        pii = load_pii(descriptor.system, pii_path)
        known = {r[descriptor.index(descriptor.primary_column)] for r in rows}
        stray = [k for k in pii.entries if k not in known]
        if stray:
            raise SchemaMismatch(f"{pii_path}: PII entries for unknown identifiers {stray[:3]}")
    return SourceDataset(descriptor, tuple(rows), pii, str(data_path))


def scan(dataset: SourceDataset, predicate: Mapping[str, Any] | None = None) -> list[dict[str, Any]]:
    """Rows matching every ``column == value`` conjunct, in file order, PII columns excluded."""
    predicate = dict(predicate or {})
    descriptor = dataset.descriptor
    for name in predicate:
        descriptor.index(name)  # raises UnknownColumn
    visible = [i for i, c in enumerate(descriptor.columns) if c.field_class is not FieldClass.PII]
    names = descriptor.column_names
    checks = [(descriptor.index(k), v) for k, v in predicate.items()]
    out = []
    for row in dataset.rows:
        if all(row[i] == v or format_value(row[i]) == str(v) for i, v in checks):
            out.append({names[i]: row[i] for i in visible})
    return out


def descriptor_for(system: System, schema_dir: str | Path | None = None) -> SchemaDescriptor:
    if schema_dir is not None:
        path = Path(schema_dir) / f"{system.stem}.schema"
        if path.exists():
            return SchemaDescriptor.load(path)
    return default_descriptor(system)


def load_directory(data_dir: str | Path, schema_dir: str | Path | None = None) -> dict[System, SourceDataset]:
    """Load all four systems from ``data_dir`` (``<system>.csv`` plus optional ``<system>_pii.csv``)."""
    data_dir = Path(data_dir)
    if schema_dir is None and (data_dir / "schemas").is_dir():
        schema_dir = data_dir / "schemas"
    out = {}
    for system in SYSTEMS:
        pii = data_dir / f"{system.stem}_pii.csv"
        out[system] = load_source(
            descriptor_for(system, schema_dir),
            data_dir / f"{system.stem}.csv",
            pii if pii.exists() else None,
        )
    return out


def write_rows(path: str | Path, header: tuple[str, ...], rows) -> int:
    """Write a headered CSV deterministically (``\\n`` line endings); returns the row count."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            n += 1
    return n


def write_dataset(dataset: SourceDataset, path: str | Path) -> int:
    return write_rows(path, dataset.descriptor.column_names, dataset.rows)


def write_pii(store: PiiStore, path: str | Path) -> int:
    rows = (
        (k, r.name, r.dob, r.sex, r.mobile, r.address, r.eircode_key)
        for k, r in store.entries.items()
    )
    return write_rows(path, PII_COLUMNS, rows)


__all__ = [
    "PII_COLUMNS", "PiiRecord", "PiiStore", "SourceDataset",
    "load_directory", "load_pii", "load_source", "scan", "write_dataset", "write_pii",
]
