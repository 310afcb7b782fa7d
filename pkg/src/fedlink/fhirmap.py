"""FHIR schema layer: declarative mapping of source rows onto a small typed resource graph.

A mapping spec is a JSON document per system.  Each entry is one of four
mapping types:

* ``ONE_TO_ONE``   copy one column to one resource path
* ``MANY_TO_ONE``  combine several columns with a named combiner
* ``INDIRECT``     write a fixed default value
* ``LOOKUP``       resolve an identifier column to a meta-record id

Resource ids are ``<namespace>/<KIND>/<record key>``; a record key is the
primary identifier (HIPE episodes append the admission date so that repeated
episodes stay distinct).  Every non-patient node carries a ``patient``
reference to the PATIENT node of the same record.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .errors import ArityViolation, CombinerMissing, FedlinkError, LookupMiss, SpecSyntax, UnknownColumn
from .ingest import SourceDataset
from .linkage import MetaRecordSet
from .model import SYSTEM_ID_KIND, IdentifierKind, SchemaDescriptor, System, default_descriptor, format_value, shipped_path
from .vocab import AREAS


class MappingType(str, enum.Enum):
    ONE_TO_ONE = "ONE_TO_ONE"
    MANY_TO_ONE = "MANY_TO_ONE"
    INDIRECT = "INDIRECT"
    LOOKUP = "LOOKUP"


class ResourceKind(str, enum.Enum):
    PATIENT = "PATIENT"
    ENCOUNTER = "ENCOUNTER"
    CONDITION = "CONDITION"
    PROCEDURE = "PROCEDURE"
    MEDICATION_DISPENSE = "MEDICATION_DISPENSE"
    OBSERVATION = "OBSERVATION"
    DIAGNOSTIC_REPORT = "DIAGNOSTIC_REPORT"


_KIND_ORDER = {k: i for i, k in enumerate(ResourceKind)}
REFERENCE_SUFFIXES = ("subject", "patient", "other", "beneficiary")
UNRESOLVED = "unresolved"


def _concat_with_space(values: Sequence[Any]) -> str:
    return " ".join(format_value(v) for v in values if v is not None)


def _full_address(values: Sequence[Any]) -> str:
    parts = []
    for v in values:
        if v is None:
            continue
        text = format_value(v)
        parts.append(f"{text} ({AREAS[text]})" if text in AREAS else text)
    return ", ".join(parts)


def _code_plus_display(values: Sequence[Any]) -> dict:
    code, *rest = values
    return {"code": format_value(code), "display": " ".join(format_value(v) for v in rest)}


COMBINERS: Mapping[str, Callable[[Sequence[Any]], Any]] = {
    "concat_with_space": _concat_with_space,
    "full_address": _full_address,
    "code_plus_display": _code_plus_display,
}


@dataclass(frozen=True)
class MappingEntry:
    mapping_type: MappingType
    source_attrs: tuple[str, ...]
    resource_kind: ResourceKind
    target_path: str
    combiner: str | None = None
    default_value: Any = None
    identifier_kind: IdentifierKind | None = None

    def __post_init__(self):
        n = len(self.source_attrs)
        mt = self.mapping_type
        where = f"{mt.value} -> {self.resource_kind.value}.{self.target_path}"
        if mt is MappingType.ONE_TO_ONE and n != 1:
            raise ArityViolation(f"{where}: ONE_TO_ONE takes exactly 1 source attribute, got {n}")
        if mt is MappingType.MANY_TO_ONE:
            if n < 2:
                raise ArityViolation(f"{where}: MANY_TO_ONE takes at least 2 source attributes, got {n}")
            if not self.combiner:
                raise ArityViolation(f"{where}: MANY_TO_ONE requires a combiner")
        elif self.combiner:
            raise ArityViolation(f"{where}: only MANY_TO_ONE entries take a combiner")
        if mt is MappingType.INDIRECT:
            if n != 0:
                raise ArityViolation(f"{where}: INDIRECT takes no source attributes")
            if self.default_value is None:
                raise ArityViolation(f"{where}: INDIRECT requires a default_value")
        elif self.default_value is not None:
            raise ArityViolation(f"{where}: only INDIRECT entries take a default_value")
        if mt is MappingType.LOOKUP:
            if n != 1:
                raise ArityViolation(f"{where}: LOOKUP takes exactly 1 identifier column")
            if self.target_path.rsplit(".", 1)[-1] not in REFERENCE_SUFFIXES:
                raise ArityViolation(f"{where}: LOOKUP must target a reference path")

    def applies_to(self, record: Mapping[str, Any]) -> bool:
        return all(record.get(a) is not None for a in self.source_attrs)


@dataclass(frozen=True)
class MappingSpec:
    system: System
    namespace: str
    entries: tuple[MappingEntry, ...]
    unmapped: tuple[str, ...] = ()

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.resource_kind, e.target_path)
            if key in seen:
                raise SpecSyntax(f"duplicate target {e.resource_kind.value}.{e.target_path}")
            seen.add(key)

    def validate_against(self, descriptor: SchemaDescriptor) -> None:
        names = set(descriptor.column_names)
        used = {a for e in self.entries for a in e.source_attrs}
        for col in sorted((used | set(self.unmapped)) - names):
            raise UnknownColumn(f"{self.system.value} mapping references unknown column {col!r}")
        missing = [c for c in descriptor.column_names if c not in used and c not in self.unmapped]
        if missing:
            raise SpecSyntax(f"{self.system.value} columns neither mapped nor listed as unmapped: {missing}")

    def types_used(self) -> set[MappingType]:
        return {e.mapping_type for e in self.entries}


def _parse_entry(doc: Mapping, system: System, descriptor: SchemaDescriptor) -> MappingEntry:
    try:
        mt = MappingType(doc["mapping_type"])
        kind = ResourceKind(doc["resource_kind"])
        target = doc["target_path"]
    except KeyError as exc:
        raise SpecSyntax(f"mapping entry missing field {exc}") from None
    except ValueError as exc:
        raise SpecSyntax(str(exc)) from None
    if not isinstance(target, str) or not target:
        raise SpecSyntax("target_path must be a nonempty string")
    attrs = doc.get("source_attrs", [])
    if not isinstance(attrs, list) or not all(isinstance(a, str) for a in attrs):
        raise SpecSyntax("source_attrs must be a list of column names")
    combiner = doc.get("combiner")
    if combiner is not None and combiner not in COMBINERS:
        raise CombinerMissing(f"unknown combiner {combiner!r}")
    ident = doc.get("identifier_kind")
    if mt is MappingType.LOOKUP and ident is None and attrs:
        col = attrs[0]
        if col == descriptor.primary_column:
            ident = SYSTEM_ID_KIND[system].value
        elif col in ("ihi", "mobile"):
            ident = col.upper()
    try:
        ident_kind = IdentifierKind(ident) if ident else None
    except ValueError:
        raise SpecSyntax(f"unknown identifier kind {ident!r}") from None
    extra = set(doc) - {"mapping_type", "source_attrs", "resource_kind", "target_path",
                        "combiner", "default_value", "identifier_kind", "note"}
    if extra:
        raise SpecSyntax(f"unknown entry fields {sorted(extra)}")
    return MappingEntry(mt, tuple(attrs), kind, target, combiner, doc.get("default_value"), ident_kind)


def parse_mapping_spec(path: str | Path, descriptor: SchemaDescriptor | None = None) -> MappingSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecSyntax(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise SpecSyntax(f"{path}: expected an object with an 'entries' list")
    try:
        system = System.parse(doc["system"])
    except (KeyError, ValueError) as exc:
        raise SpecSyntax(f"{path}: bad or missing system ({exc})") from None
    descriptor = descriptor or default_descriptor(system)
    entries = tuple(_parse_entry(e, system, descriptor) for e in doc["entries"])
    spec = MappingSpec(system, doc.get("namespace", system.stem), entries, tuple(doc.get("unmapped", ())))
    spec.validate_against(descriptor)
    return spec


def shipped_spec(system: System) -> MappingSpec:
    return parse_mapping_spec(shipped_path("mappings", f"{system.stem}.map"))


@dataclass(frozen=True)
class ResourceNode:
    resource_id: str
    kind: ResourceKind
    attributes: Mapping[str, Any]
    references: Mapping[str, str]

    def to_json(self) -> str:
        return json.dumps(
            {"resource_id": self.resource_id, "kind": self.kind.value,
             "attributes": dict(self.attributes), "references": dict(self.references)},
            sort_keys=True, ensure_ascii=False,
        )


def unresolved_marker(kind: IdentifierKind, value: str) -> str:
    return f"{UNRESOLVED}:{kind.value}:{value}"


def is_unresolved(ref: str) -> bool:
    return ref.startswith(UNRESOLVED + ":")


def _json_value(v: Any) -> Any:
    if isinstance(v, (int, float, str, dict)) or v is None:
        return v
    return format_value(v)


def record_key(system: System, record: Mapping[str, Any], descriptor: SchemaDescriptor) -> str:
    key = str(record[descriptor.primary_column])
    if system is System.HIPE:
        key += "_" + format_value(record["admission_date"])
    return key


def apply_mapping(
    record: Mapping[str, Any],
    spec: MappingSpec,
    meta: MetaRecordSet | None,
    descriptor: SchemaDescriptor | None = None,
    *,
    strict: bool = False,
) -> list[ResourceNode]:
    """Map one source record to its resource nodes (PATIENT first, then by kind).

    A LOOKUP whose identifier is absent from ``meta`` yields an
    ``unresolved:<KIND>:<value>`` reference, or raises ``LookupMiss`` when
    ``strict`` is set.
    """
    descriptor = descriptor or default_descriptor(spec.system)
    pid = str(record[descriptor.primary_column])
    rkey = record_key(spec.system, record, descriptor)
    attrs: dict[ResourceKind, dict[str, Any]] = {}
    refs: dict[ResourceKind, dict[str, str]] = {}
    content: set[ResourceKind] = {ResourceKind.PATIENT}
    for e in spec.entries:
        if not e.applies_to(record):
            continue
        values = [record[a] for a in e.source_attrs]
        if e.mapping_type is MappingType.ONE_TO_ONE:
            attrs.setdefault(e.resource_kind, {})[e.target_path] = _json_value(values[0])
            content.add(e.resource_kind)
        elif e.mapping_type is MappingType.MANY_TO_ONE:
            fn = COMBINERS.get(e.combiner or "")
            if fn is None:
                raise CombinerMissing(f"unknown combiner {e.combiner!r}")
            attrs.setdefault(e.resource_kind, {})[e.target_path] = fn(values)
            content.add(e.resource_kind)
        elif e.mapping_type is MappingType.INDIRECT:
            attrs.setdefault(e.resource_kind, {})[e.target_path] = e.default_value
        else:
            kind = e.identifier_kind or SYSTEM_ID_KIND[spec.system]
            value = format_value(values[0])
            hit = meta.resolve(kind, value) if meta is not None else None
            if hit is None:
                if strict:
                    raise LookupMiss(f"{kind.value} {value} is not in any meta-record")
                ref = unresolved_marker(kind, value)
            else:
                ref = hit.meta_id
            refs.setdefault(e.resource_kind, {})[e.target_path] = ref

    patient_id = f"{spec.namespace}/{ResourceKind.PATIENT.value}/{pid}"
    nodes = []
    for kind in sorted(content, key=_KIND_ORDER.__getitem__):
        r = dict(refs.get(kind, {}))
        if kind is ResourceKind.PATIENT:
            rid = patient_id
        else:
            rid = f"{spec.namespace}/{kind.value}/{rkey}"
            r["patient"] = patient_id
        nodes.append(ResourceNode(rid, kind, attrs.get(kind, {}), r))
    return nodes


def applied_entries(record: Mapping[str, Any], spec: MappingSpec) -> list[MappingEntry]:
    """Entries that write something for ``record`` given which node kinds it produces."""
    content = {ResourceKind.PATIENT}
    content |= {
        e.resource_kind for e in spec.entries
        if e.mapping_type in (MappingType.ONE_TO_ONE, MappingType.MANY_TO_ONE) and e.applies_to(record)
    }
    return [e for e in spec.entries if e.resource_kind in content and e.applies_to(record)]


@dataclass
class MappingReport:
    system: System
    rows: int = 0
    rows_mapped: int = 0
    rows_failed: int = 0
    by_type: Counter = field(default_factory=Counter)
    by_kind: Counter = field(default_factory=Counter)
    lookups: int = 0
    lookup_misses: int = 0
    errors: list[str] = field(default_factory=list)

    @property
    def lookup_miss_rate(self) -> float:
        return self.lookup_misses / self.lookups if self.lookups else 0.0

    def to_dict(self) -> dict:
        return {
            "system": self.system.value, "rows": self.rows, "rows_mapped": self.rows_mapped,
            "rows_failed": self.rows_failed,
            "by_type": {t.value: self.by_type.get(t, 0) for t in MappingType},
            "by_kind": {k.value: self.by_kind.get(k, 0) for k in ResourceKind},
            "lookups": self.lookups, "lookup_misses": self.lookup_misses,
            "lookup_miss_rate": round(self.lookup_miss_rate, 6), "errors": list(self.errors),
        }


@dataclass
class ResourceGraph:
    nodes: dict[str, ResourceNode] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes.values())

    def of_kind(self, kind: ResourceKind) -> list[ResourceNode]:
        return [n for n in self.nodes.values() if n.kind is kind]

    def write_ndres(self, path: str | Path) -> int:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for node in self.nodes.values():
                fh.write(node.to_json() + "\n")
        return len(self.nodes)

    @classmethod
    def read_ndres(cls, path: str | Path) -> "ResourceGraph":
        graph = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            node = ResourceNode(d["resource_id"], ResourceKind(d["kind"]), d["attributes"], d["references"])
            graph.nodes[node.resource_id] = node
        return graph


def map_dataset(
    dataset: SourceDataset, spec: MappingSpec, meta: MetaRecordSet | None
) -> tuple[ResourceGraph, MappingReport]:
    """Map every row; PATIENT nodes are deduplicated by id (first row wins).

    Row-level failures are recorded in the report instead of aborting.
    """
    if spec.system is not dataset.system:
        raise SpecSyntax(f"{spec.system.value} spec applied to {dataset.system.value} data")
    descriptor = dataset.descriptor
    report = MappingReport(dataset.system)
    keyed: list[tuple[tuple, ResourceNode]] = []
    seen: set[str] = set()
    for lineno, record in enumerate(dataset.records(), start=1):
        report.rows += 1
        try:
            nodes = apply_mapping(record, spec, meta, descriptor)
        except FedlinkError as exc:
            report.rows_failed += 1
            report.errors.append(f"row {lineno}: {exc}")
            continue
        report.rows_mapped += 1
        for e in applied_entries(record, spec):
            report.by_type[e.mapping_type] += 1
        rkey = record_key(dataset.system, record, descriptor)
        for node in nodes:
            if node.resource_id in seen:
                continue
            seen.add(node.resource_id)
            report.by_kind[node.kind] += 1
            for path, ref in node.references.items():
                if path == "patient" and node.kind is not ResourceKind.PATIENT:
                    continue
                report.lookups += 1
                report.lookup_misses += is_unresolved(ref)
            keyed.append(((rkey, _KIND_ORDER[node.kind]), node))
    keyed.sort(key=lambda t: t[0])
    graph = ResourceGraph({n.resource_id: n for _, n in keyed})
    return graph, report


__all__ = [
    "COMBINERS", "MappingEntry", "MappingReport", "MappingSpec", "MappingType", "ResourceGraph",
    "ResourceKind", "ResourceNode", "apply_mapping", "applied_entries", "is_unresolved",
    "map_dataset", "parse_mapping_spec", "shipped_spec",
]
