"""Global schema layer: the Digital Health Record (DHR) asset catalog.

An asset is a named, persisted ``result_value`` for a fixed condition type and
parameter string.  The catalog lives in ``<root>/catalog.conf`` (INI) and each
materialized table in ``<root>/<asset_id>.csv``.  Catalog writes go through a
file lock so concurrent processes never interleave updates.
"""

from __future__ import annotations

import configparser
import datetime as dt
import io
import shutil
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from filelock import FileLock

from .dispatch import ParamList, execute, get_condition_type, read_result_csv, result_csv
from .errors import AccessDenied, BadParams, DuplicateAssetId, InvalidConfig, UnknownAssetId
from .federation import Federation
from .governance import Role, check_access, redact
from .model import RESULT_COLUMNS, SYSTEMS, ResultTable, System, ValueType, parse_value, shipped_path

CATALOG_FILE = "catalog.conf"


def _catalog_header() -> str:
    """The comment block of the shipped catalog, kept when the catalog is rewritten."""
    lines = shipped_path(CATALOG_FILE).read_text(encoding="utf-8").splitlines(keepends=True)
    head = []
    for line in lines:
        if not line.startswith("#"):
            break
        head.append(line)
    return "".join(head) + "\n"


def _systems_text(systems: Iterable[System]) -> str:
    return ", ".join(s.value for s in SYSTEMS if s in set(systems))


@dataclass(frozen=True)
class AssetDefinition:
    asset_id: str
    title: str
    source_systems: frozenset[System]
    condition_type: str
    fixed_params: str
    owner_role: str = "analyst"
    note: str = ""

    def validate(self) -> "AssetDefinition":
        """Check the condition type and parameters; returns the definition with the canonical type name."""
        ct = get_condition_type(self.condition_type)
        ct.parse(ParamList.parse(self.fixed_params).values)
        if self.source_systems and set(self.source_systems) != set(ct.systems):
            raise BadParams(
                f"{self.asset_id}: declared systems {_systems_text(self.source_systems)} but "
                f"{ct.name} touches {_systems_text(ct.systems)}"
            )
        return replace(self, condition_type=ct.name, source_systems=frozenset(ct.systems))


@dataclass(frozen=True)
class CatalogEntry:
    definition: AssetDefinition
    materialized_at: dt.datetime | None = None
    materialized_role: str | None = None
    stale: bool = False

    @property
    def materialized(self) -> bool:
        return self.materialized_at is not None


@dataclass(frozen=True)
class MaterializedAsset:
    definition: AssetDefinition
    table: ResultTable
    materialized_at: dt.datetime
    stale: bool = False


def _entry_from_section(asset_id: str, sec: configparser.SectionProxy) -> CatalogEntry:
    try:
        systems = frozenset(System.parse(s) for s in sec.get("source_systems", "").split(",") if s.strip())
        d = AssetDefinition(asset_id, sec["title"], systems, sec["condition_type"], sec["params"],
                            sec.get("owner_role", "analyst"), sec.get("note", ""))
        at = sec.get("materialized_at")
        return CatalogEntry(d, dt.datetime.fromisoformat(at) if at else None,
                            sec.get("materialized_role") or None, sec.getboolean("stale", False))
    except (KeyError, ValueError) as exc:
        raise InvalidConfig(f"catalog entry {asset_id}: {exc}") from None


def _section_for(entry: CatalogEntry) -> dict[str, str]:
    d = entry.definition
    out = {"title": d.title, "condition_type": d.condition_type, "params": d.fixed_params,
           "owner_role": d.owner_role, "source_systems": _systems_text(d.source_systems)}
    if d.note:
        out["note"] = d.note
    if entry.materialized_at is not None:
        out["materialized_at"] = entry.materialized_at.isoformat()
        out["materialized_role"] = entry.materialized_role or ""
        out["stale"] = "true" if entry.stale else "false"
    return out


def _parse_cell(value_type: ValueType, text: str):
    return None if text == "" else parse_value(value_type, text)


class AssetStore:
    """Catalog plus persisted tables under one directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.catalog_path = self.root / CATALOG_FILE
        self._lock = FileLock(str(self.root / (CATALOG_FILE + ".lock")))

    def _ensure(self) -> None:
        if not self.catalog_path.exists():
            self.root.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(shipped_path(CATALOG_FILE), self.catalog_path)

    def _read(self) -> dict[str, CatalogEntry]:
        self._ensure()
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read(self.catalog_path, encoding="utf-8")
        except configparser.Error as exc:
            raise InvalidConfig(f"{self.catalog_path}: {exc}") from None
        return {name: _entry_from_section(name, cp[name]) for name in cp.sections()}

    def _write(self, entries: dict[str, CatalogEntry]) -> None:
        cp = configparser.ConfigParser(interpolation=None)
        for asset_id in sorted(entries):
            cp[asset_id] = _section_for(entries[asset_id])
        buf = io.StringIO()
        cp.write(buf)
        tmp = self.catalog_path.with_suffix(".tmp")
        tmp.write_text(_catalog_header() + buf.getvalue(), encoding="utf-8")
        tmp.replace(self.catalog_path)

    def table_path(self, asset_id: str) -> Path:
        return self.root / f"{asset_id}.csv"

    # -- catalog operations --

    def list_assets(self) -> list[CatalogEntry]:
        with self._lock:
            return [e for _, e in sorted(self._read().items())]

    def get(self, asset_id: str) -> CatalogEntry:
        with self._lock:
            entries = self._read()
        if asset_id not in entries:
            raise UnknownAssetId(f"no asset {asset_id!r}")
        return entries[asset_id]

    def define_asset(self, definition: AssetDefinition) -> CatalogEntry:
        definition = definition.validate()
        with self._lock:
            entries = self._read()
            if definition.asset_id in entries:
                raise DuplicateAssetId(f"asset {definition.asset_id!r} already defined")
            entries[definition.asset_id] = CatalogEntry(definition)
            self._write(entries)
        return entries[definition.asset_id]

    def delete_asset(self, asset_id: str) -> None:
        with self._lock:
            entries = self._read()
            if asset_id not in entries:
                raise UnknownAssetId(f"no asset {asset_id!r}")
            del entries[asset_id]
            self._write(entries)
            self.table_path(asset_id).unlink(missing_ok=True)

    def materialize(self, asset_id: str, role: Role, fed: Federation) -> MaterializedAsset:
        """Run the bound query, redact it for ``role`` and persist it, replacing any earlier table."""
        entry = self.get(asset_id)
        d = entry.definition
        decision = check_access(role, d.condition_type)
        if not decision:
            raise AccessDenied(f"{role.name} may not materialize {asset_id}: {decision.reason}")
        table = redact(execute(fed, d.condition_type, d.fixed_params), role)
        now = dt.datetime.now(dt.timezone.utc)
        table = replace(table, name=asset_id, asset_id=asset_id, created_at=now)
        with self._lock:
            entries = self._read()
            if asset_id not in entries:
                raise UnknownAssetId(f"asset {asset_id!r} was deleted during materialization")
            self.table_path(asset_id).write_text(result_csv(table, role), encoding="utf-8", newline="")
            entries[asset_id] = CatalogEntry(d, now, role.name, False)
            self._write(entries)
        return MaterializedAsset(d, table, now, False)

    def load(self, asset_id: str) -> MaterializedAsset:
        """Read a persisted asset table back as a typed ResultTable."""
        entry = self.get(asset_id)
        path = self.table_path(asset_id)
        if not entry.materialized or not path.exists():
            raise UnknownAssetId(f"asset {asset_id!r} has not been materialized")
        meta, names, rows = read_result_csv(path)
        columns = tuple(RESULT_COLUMNS[n] for n in names)
        typed = tuple(tuple(_parse_cell(c.value_type, v) for c, v in zip(columns, r)) for r in rows)
        provenance = frozenset(System(s) for s in meta.get("provenance", "").split(",") if s)
        table = ResultTable(columns, typed, provenance, name=asset_id, created_at=entry.materialized_at,
                            asset_id=asset_id, condition_type=meta.get("condition_type"),
                            params=meta.get("params"))
        return MaterializedAsset(entry.definition, table, entry.materialized_at, entry.stale)

    def mark_stale(self, systems: Iterable[System]) -> list[str]:
        """Flag every materialized asset touching any of ``systems``; returns the flagged ids."""
        systems = set(systems)
        flagged = []
        with self._lock:
            entries = self._read()
            for asset_id, e in entries.items():
                if e.materialized and e.definition.source_systems & systems and not e.stale:
                    entries[asset_id] = replace(e, stale=True)
                    flagged.append(asset_id)
            if flagged:
                self._write(entries)
        return sorted(flagged)


__all__ = ["AssetDefinition", "AssetStore", "CatalogEntry", "MaterializedAsset"]
