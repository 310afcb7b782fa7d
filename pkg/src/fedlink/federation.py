"""Read-only engine index: loaded sources plus the meta-record set that joins them."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, Mapping

from .ingest import PiiRecord, SourceDataset, load_directory
from .linkage import LinkageConfig, MetaRecordSet, PatientMetaRecord, build_meta_records
from .model import SYSTEM_ID_KIND, SYSTEMS, System

# Order in which a person's demographics are taken when they appear in several systems.
DEMOGRAPHIC_ORDER = (System.CDM, System.PCRS, System.RETINA_SCREEN, System.HIPE)

META_FILE = "meta_records.csv"


@dataclass(frozen=True)
class Federation:
    sources: Mapping[System, SourceDataset]
    meta: MetaRecordSet
    data_dir: Path | None = None

    @cached_property
    def _records(self) -> dict[System, dict[str, list[dict[str, Any]]]]:
        out: dict[System, dict[str, list[dict[str, Any]]]] = {}
        for system, ds in self.sources.items():
            names = ds.descriptor.column_names
            out[system] = {k: [dict(zip(names, r)) for r in rows] for k, rows in ds.by_id.items()}
        return out

    def rows(self, system: System) -> Iterator[dict[str, Any]]:
        """All rows of one system as dicts, file order."""
        ds = self.sources[system]
        names = ds.descriptor.column_names
        for r in ds.rows:
            yield dict(zip(names, r))

    def records_of(self, person: PatientMetaRecord | None, system: System) -> list[dict[str, Any]]:
        if person is None:
            return []
        ident = person.identifiers.get(SYSTEM_ID_KIND[system])
        if ident is None or system not in self._records:
            return []
        return self._records[system].get(ident, [])

    def person_of(self, system: System, identifier: str) -> PatientMetaRecord | None:
        return self.meta.for_record(system, identifier)

    def pii(self, system: System, identifier: str) -> PiiRecord | None:
        store = self.sources[system].pii
        return store.get(identifier) if store is not None else None

    def anchor(self, person: PatientMetaRecord) -> tuple[System, dict[str, Any]] | None:
        """First system (demographic order) holding a record for the person, with that record."""
        for system in DEMOGRAPHIC_ORDER:
            recs = self.records_of(person, system)
            if recs:
                return system, recs[0]
        return None

    def systems_of(self, person: PatientMetaRecord) -> set[System]:
        return {s for s in SYSTEMS if self.records_of(person, s)}


def load_federation(
    data_dir: str | Path,
    meta_path: str | Path | None = None,
    config: LinkageConfig | None = None,
) -> Federation:
    """Load all four sources; read persisted meta-records if present, else link now."""
    data_dir = Path(data_dir)
    sources = load_directory(data_dir)
    if meta_path is None and (data_dir / META_FILE).exists():
        meta_path = data_dir / META_FILE
    if meta_path is not None:
        meta = MetaRecordSet.read_csv(meta_path)
    else:
        meta = build_meta_records(sources, config=config)
    return Federation(sources, meta, data_dir)


__all__ = ["DEMOGRAPHIC_ORDER", "Federation", "META_FILE", "load_federation"]
