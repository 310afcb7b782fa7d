"""Record linkage into anonymized Patient Meta-Records.

Two passes over the loaded sources:

1. deterministic: records sharing an IHI (CDM/PCRS) or a recorded mobile number
   are merged with confidence 1.0;
2. fuzzy: remaining cross-system candidate pairs that share a blocking key are
   scored with a weighted linear model over quasi-identifiers from the PII
   sidecars; pairs at or above ``match_threshold`` are merged, pairs in
   ``[review_threshold, match_threshold)`` are exported for review only.

The resulting meta-records hold identifiers only, never names, dates of birth
or addresses.
"""

from __future__ import annotations

import configparser
import csv
import datetime as dt
import enum
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import IdentifierConflict, InvalidConfig, UnknownIdentifier
from .ingest import PiiRecord, SourceDataset
from .model import SYSTEM_ID_KIND, SYSTEMS, IdentifierKind, System
from .synthgen import GroundTruthLink

RecordKey = tuple[System, str]
_SYS_ORDER = {s: i for i, s in enumerate(SYSTEMS)}


class LinkMethod(str, enum.Enum):
    DETERMINISTIC = "DETERMINISTIC"
    FUZZY = "FUZZY"


@dataclass(frozen=True)
class Link:
    left: RecordKey
    right: RecordKey
    method: LinkMethod
    confidence: float

    @property
    def system_pair(self) -> tuple[System, System]:
        return (self.left[0], self.right[0])


@dataclass(frozen=True)
class PatientMetaRecord:
    meta_id: str
    identifiers: Mapping[IdentifierKind, str]
    links: tuple[Link, ...] = ()
    confidence: float | None = None

    @property
    def min_confidence(self) -> float:
        if self.confidence is not None:
            return self.confidence
        return min((lk.confidence for lk in self.links), default=1.0)

    @property
    def record_keys(self) -> tuple[RecordKey, ...]:
        return tuple(
            (s, self.identifiers[k]) for s, k in SYSTEM_ID_KIND.items() if k in self.identifiers
        )

    def get(self, kind: IdentifierKind) -> str | None:
        return self.identifiers.get(kind)


META_COLUMNS = ("meta_id", "mrn", "ihi", "cdm_id", "pcrs_id", "rs_id", "mobile", "min_confidence")
_META_KINDS = (
    IdentifierKind.MRN, IdentifierKind.IHI, IdentifierKind.CDM_ID,
    IdentifierKind.PCRS_ID, IdentifierKind.RS_ID, IdentifierKind.MOBILE,
)


@dataclass(frozen=True)
class MetaRecordSet:
    records: tuple[PatientMetaRecord, ...]
    review: tuple[Link, ...] = ()
    conflicts: tuple[Link, ...] = ()

    def __post_init__(self):
        ids = [m.meta_id for m in self.records]
        if len(set(ids)) != len(ids):
            raise IdentifierConflict("meta_id values must be unique")
        index: dict[tuple[IdentifierKind, str], PatientMetaRecord] = {}
        for m in self.records:
            for kind, value in m.identifiers.items():
                if (kind, value) in index:
                    raise IdentifierConflict(f"{kind.value} {value} appears in two meta-records")
                index[(kind, value)] = m
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_by_id", {m.meta_id: m for m in self.records})

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def resolve(self, kind: IdentifierKind, value: str) -> PatientMetaRecord | None:
        return self._index.get((kind, value))

    def for_record(self, system: System, identifier: str) -> PatientMetaRecord | None:
        return self._index.get((SYSTEM_ID_KIND[system], identifier))

    def get(self, meta_id: str) -> PatientMetaRecord | None:
        return self._by_id.get(meta_id)

    def __contains__(self, meta_id: str) -> bool:
        return meta_id in self._by_id

    def linked_only(self) -> "MetaRecordSet":
        """Only meta-records that actually join two or more source records."""
        return MetaRecordSet(tuple(m for m in self.records if len(m.record_keys) > 1), self.review)

    def partition(self) -> set[frozenset[RecordKey]]:
        return {frozenset(m.record_keys) for m in self.records}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(META_COLUMNS)
            for m in self.records:
                w.writerow([m.meta_id, *(m.identifiers.get(k, "") for k in _META_KINDS),
                            f"{m.min_confidence:.4f}"])

    def write_review_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("left_system", "left_id", "right_system", "right_id", "score"))
            for lk in self.review:
                w.writerow((lk.left[0].value, lk.left[1], lk.right[0].value, lk.right[1],
                            f"{lk.confidence:.4f}"))

    @classmethod
    def read_csv(cls, path: str | Path) -> "MetaRecordSet":
        records = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader, ()))
            if header != META_COLUMNS:
                raise InvalidConfig(f"{path}: expected columns {','.join(META_COLUMNS)}")
            for row in reader:
                idents = {k: v for k, v in zip(_META_KINDS, row[1:7]) if v}
                records.append(PatientMetaRecord(row[0], MappingProxyType(idents),
                                                 confidence=float(row[7])))
        return cls(tuple(records))


@dataclass(frozen=True)
class LinkageConfig:
    blocking_keys: tuple[str, ...] = ("dob_year+eircode_key", "sex+dob")
    name_weight: float = 0.5
    dob_weight: float = 0.1
    sex_weight: float = 0.1
    eircode_weight: float = 0.1
    mobile_weight: float = 0.2
    match_threshold: float = 0.85
    review_threshold: float = 0.70

    _BLOCK_FIELDS = frozenset({"dob_year", "dob", "sex", "eircode_key", "name_initials", "mobile"})

    def __post_init__(self):
        weights = self.weights
        if any(w < 0 for w in weights.values()):
            raise InvalidConfig("weights must be nonnegative")
        if not math.isclose(sum(weights.values()), 1.0, abs_tol=1e-9):
            raise InvalidConfig(f"weights sum to {sum(weights.values())}, expected 1")
        if not 0.0 <= self.review_threshold <= self.match_threshold <= 1.0:
            raise InvalidConfig("need 0 <= review_threshold <= match_threshold <= 1")
        for key in self.blocking_keys:
            parts = key.split("+")
            if not all(p in self._BLOCK_FIELDS for p in parts):
                raise InvalidConfig(f"unknown blocking key {key!r}")

    @property
    def weights(self) -> dict[str, float]:
        return {
            "name": self.name_weight, "dob": self.dob_weight, "sex": self.sex_weight,
            "eircode_key": self.eircode_weight, "mobile": self.mobile_weight,
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "LinkageConfig":
        parser = configparser.ConfigParser()
        if not parser.read(path, encoding="utf-8"):
            raise InvalidConfig(f"cannot read linkage config {path}")
        kwargs: dict = {}
        try:
            if parser.has_section("linkage"):
                sec = parser["linkage"]
                for key in ("match_threshold", "review_threshold"):
                    if key in sec:
                        kwargs[key] = sec.getfloat(key)
                if "blocking_keys" in sec:
                    kwargs["blocking_keys"] = tuple(
                        k.strip() for k in sec["blocking_keys"].split(",") if k.strip()
                    )
            if parser.has_section("weights"):
                for key, value in parser["weights"].items():
                    attr = {"eircode_key": "eircode_weight"}.get(key, f"{key}_weight")
                    kwargs[attr] = float(value)
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class PiiView:
    """The quasi-identifiers of one source record as seen by the linker."""

    key: RecordKey
    name: str | None = None
    dob: dt.date | None = None
    sex: str | None = None
    eircode_key: str | None = None
    mobile: str | None = None

    @classmethod
    def of(cls, key: RecordKey, pii: PiiRecord | None, row: Mapping | None = None) -> "PiiView":
        row = row or {}
        if pii is None:
            return cls(key, sex=row.get("sex"), eircode_key=row.get("eircode_key"))
        return cls(key, pii.name, pii.dob, pii.sex or row.get("sex"),
                   pii.eircode_key or row.get("eircode_key"), pii.mobile)

    def block_value(self, field_name: str):
        if field_name == "dob_year":
            return self.dob.year if self.dob else None
        if field_name == "name_initials":
            return "".join(w[0] for w in self.name.split()).lower() if self.name else None
        return getattr(self, field_name)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def name_similarity(a: str, b: str) -> float:
    """1 - edit distance / longer length, case-insensitive."""
    a, b = a.lower(), b.lower()
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def score_pair(a: PiiView, b: PiiView, config: LinkageConfig | None = None) -> float:
    """Weighted similarity in [0, 1]; fields missing on either side drop out and the rest renormalize."""
    config = config or LinkageConfig()
    weights = config.weights
    total = 0.0
    acc = 0.0
    for name, w in weights.items():
        va, vb = getattr(a, name), getattr(b, name)
        if va is None or vb is None or w == 0.0:
            continue
        sim = name_similarity(va, vb) if name == "name" else float(va == vb)
        total += w
        acc += w * sim
    return acc / total if total else 0.0


def _record_views(sources: Mapping[System, SourceDataset], pii_stores=None) -> dict[RecordKey, PiiView]:
    views = {}
    for system in SYSTEMS:
        ds = sources.get(system)
        if ds is None:
            continue
        store = (pii_stores or {}).get(system) or ds.pii
        for ident, rows in ds.by_id.items():
            row = dict(zip(ds.descriptor.column_names, rows[0]))
            pii = store.get(ident) if store is not None else None
            views[(system, ident)] = PiiView.of((system, ident), pii, row)
    return views


def _record_ihis(sources: Mapping[System, SourceDataset]) -> dict[RecordKey, str]:
    out = {}
    for system, ds in sources.items():
        if "ihi" not in ds.descriptor.column_names:
            continue
        i = ds.descriptor.index("ihi")
        for ident, rows in ds.by_id.items():
            values = {r[i] for r in rows if r[i]}
            if len(values) > 1:
                raise IdentifierConflict(f"{system.value} {ident} carries several IHIs {sorted(values)}")
            if values:
                out[(system, ident)] = values.pop()
    return out


class _Clusters:
    """Union-find over record keys that tracks per-cluster systems, IHIs and mobiles."""

    def __init__(self, keys: Iterable[RecordKey], ihis: Mapping, views: Mapping):
        self.parent: dict[RecordKey, RecordKey] = {}
        self.members: dict[RecordKey, list[RecordKey]] = {}
        self.ihis: dict[RecordKey, set[str]] = {}
        self.mobiles: dict[RecordKey, set[str]] = {}
        for k in keys:
            self.parent[k] = k
            self.members[k] = [k]
            self.ihis[k] = {ihis[k]} if k in ihis else set()
            m = views[k].mobile if k in views else None
            self.mobiles[k] = {m} if m else set()
        self.links: dict[RecordKey, list[Link]] = {k: [] for k in self.parent}

    def find(self, k: RecordKey) -> RecordKey:
        root = k
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[k] != root:
            self.parent[k], k = root, self.parent[k]
        return root

    def compatible(self, ra: RecordKey, rb: RecordKey) -> bool:
        sys_a = {s for s, _ in self.members[ra]}
        if any(s in sys_a for s, _ in self.members[rb]):
            return False
        if self.ihis[ra] and self.ihis[rb] and self.ihis[ra] != self.ihis[rb]:
            return False
        if self.mobiles[ra] and self.mobiles[rb] and self.mobiles[ra] != self.mobiles[rb]:
            return False
        return True

    def union(self, a: RecordKey, b: RecordKey, link: Link | None) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if _key_order(rb) < _key_order(ra):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.members[ra].extend(self.members.pop(rb))
        self.ihis[ra] |= self.ihis.pop(rb)
        self.mobiles[ra] |= self.mobiles.pop(rb)
        self.links[ra].extend(self.links.pop(rb))
        if link is not None:
            self.links[ra].append(link)
        return True

    def check(self) -> None:
        for root, members in self.members.items():
            systems = [s for s, _ in members]
            if len(systems) != len(set(systems)):
                raise IdentifierConflict(f"one person would hold two records in a system: {sorted(members, key=_key_order)}")
            if len(self.ihis[root]) > 1:
                raise IdentifierConflict(f"IHIs {sorted(self.ihis[root])} clustered together")
            if len(self.mobiles[root]) > 1:
                raise IdentifierConflict(
                    f"IHI/mobile conflict: mobiles {sorted(self.mobiles[root])} clustered together"
                )


def _key_order(k: RecordKey) -> tuple[int, str]:
    return (_SYS_ORDER[k[0]], k[1])


def _ordered(a: RecordKey, b: RecordKey) -> tuple[RecordKey, RecordKey]:
    return (a, b) if _key_order(a) <= _key_order(b) else (b, a)


def _deterministic(clusters: _Clusters, ihis: Mapping, views: Mapping, prior: MetaRecordSet | None) -> None:
    if prior is not None:
        for m in prior:
            keys = [k for k in m.record_keys if k in clusters.parent]
            for a, b in zip(keys, keys[1:]):
                clusters.union(a, b, Link(*_ordered(a, b), LinkMethod.DETERMINISTIC, 1.0))
    for attr_map in (ihis, {k: v.mobile for k, v in views.items() if v.mobile}):
        groups: dict[str, list[RecordKey]] = {}
        for k in sorted(attr_map, key=_key_order):
            groups.setdefault(attr_map[k], []).append(k)
        for keys in groups.values():
            for a, b in zip(keys, keys[1:]):
                clusters.union(a, b, Link(*_ordered(a, b), LinkMethod.DETERMINISTIC, 1.0))
    clusters.check()


def _to_meta_set(clusters: _Clusters, ihis, views, review=(), conflicts=()) -> MetaRecordSet:
    roots = sorted(clusters.members, key=lambda r: min(_key_order(k) for k in clusters.members[r]))
    records = []
    for n, root in enumerate(roots, start=1):
        idents: dict[IdentifierKind, str] = {}
        for system, ident in sorted(clusters.members[root], key=_key_order):
            idents[SYSTEM_ID_KIND[system]] = ident
        if clusters.ihis[root]:
            idents[IdentifierKind.IHI] = next(iter(clusters.ihis[root]))
        if clusters.mobiles[root]:
            idents[IdentifierKind.MOBILE] = next(iter(clusters.mobiles[root]))
        ordered = {k: idents[k] for k in _META_KINDS if k in idents}
        records.append(PatientMetaRecord(f"PMR{n:07d}", MappingProxyType(ordered),
                                         tuple(clusters.links[root])))
    return MetaRecordSet(tuple(records), tuple(review), tuple(conflicts))


def link_deterministic(sources: Mapping[System, SourceDataset], pii_stores=None) -> MetaRecordSet:
    """Merge records sharing an IHI or a recorded mobile; no quasi-identifier comparison."""
    views = _record_views(sources, pii_stores)
    ihis = _record_ihis(sources)
    clusters = _Clusters(views, ihis, views)
    _deterministic(clusters, ihis, views, None)
    return _to_meta_set(clusters, ihis, views)


def candidate_pairs(views: Mapping[RecordKey, PiiView], config: LinkageConfig) -> set[tuple[RecordKey, RecordKey]]:
    """Cross-system pairs sharing at least one blocking key value."""
    pairs: set[tuple[RecordKey, RecordKey]] = set()
    for key in config.blocking_keys:
        parts = key.split("+")
        blocks: dict[tuple, list[RecordKey]] = {}
        for k, v in views.items():
            value = tuple(v.block_value(p) for p in parts)
            if any(x is None for x in value):
                continue
            blocks.setdefault(value, []).append(k)
        for members in blocks.values():
            for a, b in itertools.combinations(members, 2):
                if a[0] != b[0]:
                    pairs.add(_ordered(a, b))
    return pairs


def build_meta_records(
    sources: Mapping[System, SourceDataset],
    pii_stores=None,
    config: LinkageConfig | None = None,
    *,
    fuzzy: bool = True,
    prior: MetaRecordSet | None = None,
) -> MetaRecordSet:
    """Deterministic pass then blocked fuzzy pass; every source record ends in exactly one meta-record.

    A fuzzy match that would put two records of one system (or two different
    IHIs / mobiles) into the same meta-record is not merged; it is reported in
    ``MetaRecordSet.conflicts`` instead.
    """
    config = config or LinkageConfig()
    views = _record_views(sources, pii_stores)
    ihis = _record_ihis(sources)
    clusters = _Clusters(views, ihis, views)
    _deterministic(clusters, ihis, views, prior)
    review: list[Link] = []
    conflicts: list[Link] = []
    if fuzzy:
        scored = []
        for a, b in candidate_pairs(views, config):
            if clusters.find(a) == clusters.find(b):
                continue
            s = score_pair(views[a], views[b], config)
            if s >= config.review_threshold:
                scored.append((s, a, b))
        scored.sort(key=lambda t: (-t[0], _key_order(t[1]), _key_order(t[2])))
        for s, a, b in scored:
            if s < config.match_threshold:
                review.append(Link(a, b, LinkMethod.FUZZY, s))
                continue
            ra, rb = clusters.find(a), clusters.find(b)
            if ra == rb:
                continue
            if clusters.compatible(ra, rb):
                clusters.union(a, b, Link(a, b, LinkMethod.FUZZY, s))
            else:
                conflicts.append(Link(a, b, LinkMethod.FUZZY, s))
    return _to_meta_set(clusters, ihis, views, review, conflicts)


@dataclass(frozen=True)
class LinkageQuality:
    precision: float
    recall: float
    f1: float
    true_positives: int = 0
    predicted_pairs: int = 0
    true_pairs: int = 0

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


_TRUTH_FIELDS = {
    IdentifierKind.MRN: "mrn", IdentifierKind.IHI: "ihi", IdentifierKind.CDM_ID: "cdm_id",
    IdentifierKind.PCRS_ID: "pcrs_id", IdentifierKind.RS_ID: "rs_id", IdentifierKind.MOBILE: "mobile",
}


def evaluate_linkage(meta: MetaRecordSet | Iterable[PatientMetaRecord], truth: Iterable[GroundTruthLink]) -> LinkageQuality:
    """Pairwise precision/recall/F1 over cross-system record pairs, at the person level."""
    truth = list(truth)
    owner: dict[tuple[IdentifierKind, str], int] = {}
    true_pairs = 0
    for t in truth:
        for kind, attr in _TRUTH_FIELDS.items():
            v = getattr(t, attr)
            if v:
                owner[(kind, v)] = t.person_id
        present = sum(1 for s in SYSTEMS if t.system_id(s))
        true_pairs += present * (present - 1) // 2

    predicted = tp = 0
    for m in meta:
        for kind, value in m.identifiers.items():
            if (kind, value) not in owner:
                raise UnknownIdentifier(f"{kind.value} {value} of {m.meta_id} is not in the ground truth")
        persons = [owner[(SYSTEM_ID_KIND[s], ident)] for s, ident in m.record_keys]
        for pa, pb in itertools.combinations(persons, 2):
            predicted += 1
            tp += pa == pb
    precision = tp / predicted if predicted else 1.0
    recall = tp / true_pairs if true_pairs else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return LinkageQuality(precision, recall, f1, tp, predicted, true_pairs)


__all__ = [
    "Link", "LinkMethod", "LinkageConfig", "LinkageQuality", "MetaRecordSet", "PatientMetaRecord",
    "PiiView", "build_meta_records", "candidate_pairs", "evaluate_linkage", "levenshtein",
    "link_deterministic", "name_similarity", "score_pair",
]
