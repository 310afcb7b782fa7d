"""Seeded synthetic population across HIPE, CDM, PCRS and Retina Screen.

Every output is a pure function of :class:`GeneratorConfig`.  Alongside the four
datasets and their PII sidecars the generator emits a ground-truth link table
naming, for every synthetic person, the identifier they hold in each system.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from types import MappingProxyType

import numpy as np

from . import vocab
from .errors import InvalidConfig
from .ingest import PiiRecord, PiiStore, SourceDataset, write_dataset, write_pii, write_rows
from .model import SYSTEMS, System, default_descriptor

REFERENCE_DATE = dt.date(2024, 1, 1)

# Well-known sample identifiers, planted on suitable persons so example queries return rows.
SAMPLE_MRN = "10164260"
SAMPLE_IHI = "10043"
SAMPLE_MOBILE = "8382643256"

CVD_FLAGS = ("heart_failure", "ischaemic_heart_disease", "cerebrovascular_disease", "atrial_fibrillation")


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 42
    population: int = 10_000
    hipe_rate: float = 0.35
    cdm_rate: float = 0.80
    pcrs_rate: float = 0.60
    rs_rate: float = 0.75
    ihi_coverage: float = 0.70
    mobile_recording_rate: float = 0.50
    corruption_rate: float = 0.05
    diabetes_type1_rate: float = 0.03
    diabetes_type2_rate: float = 0.25
    hypertension_rate: float = 0.30
    cvd_rates: tuple[tuple[str, float], ...] = (
        ("heart_failure", 0.05),
        ("ischaemic_heart_disease", 0.08),
        ("cerebrovascular_disease", 0.04),
        ("atrial_fibrillation", 0.06),
    )
    asthma_rate: float = 0.08
    copd_rate: float = 0.06
    amputation_rate: float = 0.04
    foot_ulcer_share: float = 0.85
    rs_nonattendance_rate: float = 0.25
    age_min: int = 0
    age_max: int = 99

    _FRACTIONS = (
        "hipe_rate", "cdm_rate", "pcrs_rate", "rs_rate", "ihi_coverage", "mobile_recording_rate",
        "corruption_rate", "diabetes_type1_rate", "diabetes_type2_rate", "hypertension_rate",
        "asthma_rate", "copd_rate", "amputation_rate", "foot_ulcer_share", "rs_nonattendance_rate",
    )

    def __post_init__(self):
        if isinstance(self.cvd_rates, dict):
            object.__setattr__(self, "cvd_rates", tuple(sorted(self.cvd_rates.items())))
        if not isinstance(self.population, int) or self.population < 1:
            raise InvalidConfig("population must be an integer >= 1")
        for name in self._FRACTIONS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name}={value} is not a fraction in [0, 1]")
        for name, value in self.cvd_rates:
            if name not in CVD_FLAGS:
                raise InvalidConfig(f"unknown cvd condition {name!r}")
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"cvd rate {name}={value} is not a fraction in [0, 1]")
        if not 0 <= self.age_min <= self.age_max <= 110:
            raise InvalidConfig("need 0 <= age_min <= age_max <= 110")

    @property
    def cvd(self) -> dict[str, float]:
        rates = dict.fromkeys(CVD_FLAGS, 0.0)
        rates.update(dict(self.cvd_rates))
        return rates

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cvd_rates"] = dict(self.cvd_rates)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path: str | Path) -> "GeneratorConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise InvalidConfig(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class GroundTruthLink:
    person_id: int
    mrn: str | None = None
    ihi: str | None = None
    cdm_id: str | None = None
    pcrs_id: str | None = None
    rs_id: str | None = None
    mobile: str | None = None

    def system_id(self, system: System) -> str | None:
        return {
            System.HIPE: self.mrn,
            System.CDM: self.cdm_id,
            System.PCRS: self.pcrs_id,
            System.RETINA_SCREEN: self.rs_id,
        }[system]


GROUND_TRUTH_COLUMNS = ("person_id", "mrn", "ihi", "cdm_id", "pcrs_id", "rs_id", "mobile")


@dataclass(frozen=True)
class Bundle:
    config: GeneratorConfig
    datasets: MappingProxyType  # System -> SourceDataset (PII sidecar attached)
    truth: tuple[GroundTruthLink, ...]

    def __getitem__(self, system: System) -> SourceDataset:
        return self.datasets[system]

    @property
    def pii_stores(self) -> dict[System, PiiStore]:
        return {s: d.pii for s, d in self.datasets.items() if d.pii is not None}


@dataclass
class _Person:
    pid: int
    sex: str
    age: int
    dob: dt.date
    name: str
    area: str
    address: str
    mobile: str = ""
    ihi: str | None = None
    diabetes_type: str | None = None
    duration: int | None = None
    hba1c: float | None = None
    retinopathy: bool = False
    hypertensive: bool = False
    hypertension_dx: bool = False
    sbp: int = 120
    dbp: int = 80
    asthma: bool = False
    copd: bool = False
    cvd: dict = field(default_factory=dict)
    bmi: float = 25.0
    family_history: str = "none"
    ethnicity_risk: bool = False
    nafld: bool = False
    activity: int = 3
    amputation: bool = False
    antecedent: str | None = None
    in_hipe: bool = False
    in_cdm: bool = False
    in_pcrs: bool = False
    in_rs: bool = False
    attended: bool = False
    ids: dict = field(default_factory=dict)


def _tf(flag: bool) -> str:
    return vocab.TRUE if flag else vocab.FALSE


def _unique_ids(rng: np.random.Generator, count: int, low: int, high: int, reserved=()) -> list[str]:
    """``count`` distinct integers in [low, high] as strings, avoiding ``reserved``."""
    high = max(high, low + 10 * count + len(reserved))
    taken = {int(r) for r in reserved}
    out: list[str] = []
    while len(out) < count:
        for v in rng.integers(low, high + 1, size=count - len(out)).tolist():
            if v not in taken:
                taken.add(v)
                out.append(str(v))
    return out


def _random_date(rng: np.random.Generator, start: dt.date, end: dt.date) -> dt.date:
    return start + dt.timedelta(days=int(rng.integers(0, (end - start).days + 1)))


def _draw_people(rng: np.random.Generator, cfg: GeneratorConfig) -> list[_Person]:
    n = cfg.population
    area_keys = list(vocab.AREAS)
    people = []
    for pid in range(n):
        sex = "F" if rng.random() < 0.5 else "M"
        age = int(np.clip(round(rng.normal(52, 19)), cfg.age_min, cfg.age_max))
        # born between Jan 2 and Dec 31 of (ref.year - age - 1) => exactly `age` on the reference date
        year = REFERENCE_DATE.year - age - 1
        start = dt.date(year, 1, 2)
        dob = start + dt.timedelta(days=int(rng.integers(0, (dt.date(year, 12, 31) - start).days + 1)))
        pool = vocab.FEMALE_NAMES if sex == "F" else vocab.MALE_NAMES
        given, middle = rng.choice(len(pool), size=2, replace=False).tolist()
        surname = vocab.SURNAMES[int(rng.integers(len(vocab.SURNAMES)))]
        area = area_keys[int(rng.integers(len(area_keys)))]
        street = vocab.STREETS[int(rng.integers(len(vocab.STREETS)))]
        address = f"{int(rng.integers(1, 200))} {street}, {vocab.AREAS[area]}"
        people.append(_Person(pid, sex, age, dob, f"{pool[given]} {pool[middle]} {surname}",
                              area, address))

    for p in people:
        adult = p.age >= 18
        u = rng.random()
        if u < cfg.diabetes_type1_rate:
            p.diabetes_type = "1"
        elif adult and u < cfg.diabetes_type1_rate + cfg.diabetes_type2_rate:
            p.diabetes_type = "2"
        if p.diabetes_type:
            onset = 1 if p.diabetes_type == "1" else 30
            p.duration = int(rng.integers(0, max(1, min(40, p.age - onset)) + 1))
            p.hba1c = round(float(np.clip(rng.normal(58, 12), 35, 120)), 1)
        r_retino = rng.random()
        p.retinopathy = bool(p.diabetes_type) and r_retino < vocab.retinopathy_risk(p.duration or 0)

        p_htn = min(1.0, cfg.hypertension_rate * (1.5 if p.diabetes_type else 1.0))
        p.hypertensive = adult and rng.random() < p_htn
        if p.hypertensive:
            sbp, dbp = rng.normal(148, 12), rng.normal(91, 8)
        else:
            sbp, dbp = rng.normal(124, 9), rng.normal(77, 6)
        p.sbp = int(np.clip(round(sbp), 90, 220))
        p.dbp = int(np.clip(round(dbp), 50, 130))
        p.hypertension_dx = p.hypertensive and rng.random() < 0.8
        r_asthma, r_copd = rng.random(), rng.random()
        p.asthma = r_asthma < cfg.asthma_rate
        p.copd = p.age >= 35 and r_copd < cfg.copd_rate
        cvd_u = rng.random(len(CVD_FLAGS))
        p.cvd = {name: adult and bool(u_ < cfg.cvd[name]) for name, u_ in zip(CVD_FLAGS, cvd_u)}
        p.bmi = round(float(np.clip(rng.normal(27.5, 4.8), 16, 55)), 1)
        parent = rng.random() < (0.4 if p.diabetes_type else 0.2)
        sibling = rng.random() < (0.2 if p.diabetes_type else 0.1)
        p.family_history = {(False, False): "none", (True, False): "parent",
                            (False, True): "sibling", (True, True): "both"}[(parent, sibling)]
        p.ethnicity_risk = rng.random() < 0.08
        p.nafld = rng.random() < (0.25 if p.bmi >= 30 else 0.08)
        p.activity = int(rng.integers(0, 8))
        r_amp, r_ante, r_kind = rng.random(), rng.random(), rng.random()
        p.amputation = bool(p.diabetes_type) and r_amp < cfg.amputation_rate
        if p.amputation:
            if r_ante < cfg.foot_ulcer_share:
                p.antecedent = vocab.AMPUTATION_ANTECEDENTS[0]
            else:
                p.antecedent = vocab.AMPUTATION_ANTECEDENTS[1 + int(r_kind < 0.5)]

        cdm_condition = (
            bool(p.diabetes_type) or p.hypertension_dx or p.asthma or p.copd or any(p.cvd.values())
        )
        enrol = rng.random(5)
        p.in_hipe = enrol[0] < cfg.hipe_rate
        p.in_cdm = adult and cdm_condition and enrol[1] < cfg.cdm_rate
        p.in_pcrs = enrol[2] < cfg.pcrs_rate
        p.in_rs = bool(p.diabetes_type) and p.age >= 12 and enrol[3] < cfg.rs_rate
        p.attended = p.in_rs and enrol[4] >= cfg.rs_nonattendance_rate
        p.ihi = "" if rng.random() < cfg.ihi_coverage else None
    return people


def _assign_ids(rng: np.random.Generator, people: list[_Person]) -> None:
    n = len(people)
    mobiles = _unique_ids(rng, n, 8_000_000_000, 8_999_999_999, reserved=[SAMPLE_MOBILE])
    for p, m in zip(people, mobiles):
        p.mobile = m

    ihi_holders = [p for p in people if p.ihi is not None]
    for p, v in zip(ihi_holders, _unique_ids(rng, len(ihi_holders), 10_000, 99_999, reserved=[SAMPLE_IHI])):
        p.ihi = v

    spec = (
        (System.HIPE, "in_hipe", 10_000_000, 99_999_999, [SAMPLE_MRN]),
        (System.CDM, "in_cdm", 2_000_000, 2_999_999, []),
        (System.PCRS, "in_pcrs", 3_000_000, 3_999_999, []),
        (System.RETINA_SCREEN, "in_rs", 4_000_000, 4_999_999, []),
    )
    for system, flag, low, high, reserved in spec:
        members = [p for p in people if getattr(p, flag)]
        for p, v in zip(members, _unique_ids(rng, len(members), low, high, reserved)):
            p.ids[system] = v

    def first(pred):
        return next((p for p in people if pred(p)), None)

    def everywhere(p):
        return p.in_hipe and p.in_cdm and p.in_pcrs and p.in_rs

    target = first(everywhere) or first(lambda p: p.in_hipe)
    if target is not None:
        target.ids[System.HIPE] = SAMPLE_MRN
    target = (first(lambda p: p.ihi and p.in_cdm and p.in_pcrs and p.in_rs)
              or first(lambda p: p.ihi and (p.in_cdm or p.in_pcrs))
              or first(lambda p: p.ihi))
    if target is not None:
        target.ihi = SAMPLE_IHI
    target = first(lambda p: p.in_rs) or people[0]
    target.mobile = SAMPLE_MOBILE


def _hipe_rows(rng: np.random.Generator, p: _Person, salt: str) -> list[tuple]:
    events: list[tuple[tuple[str, str], str | None]] = []
    if p.amputation:
        events.append((vocab.DIAGNOSES["foot_ulcer"], vocab.AMPUTATION_PROCEDURE))
    draws = rng.random(9)
    if p.retinopathy and draws[0] < 0.6:
        events.append((vocab.DIAGNOSES["retinopathy"], None))
    for i, name in enumerate(CVD_FLAGS):
        if p.cvd[name] and draws[1 + i] < 0.5:
            events.append((vocab.DIAGNOSES[name], None))
    if p.hypertensive and draws[5] < 0.2:
        events.append((vocab.DIAGNOSES["hypertension"], None))
    if p.diabetes_type and draws[6] < 0.3:
        events.append((vocab.DIAGNOSES["type1" if p.diabetes_type == "1" else "type2"], None))
    if (p.asthma or p.copd) and draws[7] < 0.3:
        events.append((vocab.DIAGNOSES["copd" if p.copd else "asthma"], None))
    if not events or draws[8] < 0.3:
        events.append((vocab.ACUTE_DIAGNOSES[int(rng.integers(len(vocab.ACUTE_DIAGNOSES)))], None))
    events = events[:5]

    window = (dt.date(2023, 12, 31) - dt.date(2019, 1, 1)).days
    days = sorted(rng.choice(window, size=len(events), replace=False).tolist())
    mrn = p.ids[System.HIPE]
    token = hashlib.sha256((salt + mrn).encode()).hexdigest()[:16]
    rows = []
    for ((code, desc), procedure), day in zip(events, days):
        admitted = dt.date(2019, 1, 1) + dt.timedelta(days=day)
        los = int(rng.integers(0, 15)) + (5 if procedure else 0)
        rows.append((
            mrn, token, admitted, admitted + dt.timedelta(days=los),
            "Emergency" if rng.random() < 0.7 else "Elective",
            vocab.HOSPITALS[int(rng.integers(len(vocab.HOSPITALS)))],
            "Dr " + vocab.CONSULTANT_SURNAMES[int(rng.integers(len(vocab.CONSULTANT_SURNAMES)))],
            p.age, p.sex, p.area, code, desc, procedure, los,
        ))
    return rows


def _cdm_row(rng: np.random.Generator, p: _Person) -> tuple:
    return (
        p.ids[System.CDM], p.ihi, p.age, p.sex, p.area,
        _random_date(rng, dt.date(2023, 1, 1), dt.date(2023, 12, 31)),
        p.diabetes_type, p.duration, p.hba1c,
        _tf(p.hypertension_dx), p.sbp, p.dbp, _tf(p.asthma), _tf(p.copd),
        *(_tf(p.cvd[c]) for c in CVD_FLAGS),
        p.bmi, p.family_history, _tf(p.ethnicity_risk), _tf(p.nafld), p.activity,
        _tf(p.amputation), p.antecedent,
    )


def _medications(rng: np.random.Generator, p: _Person) -> str | None:
    draws = rng.random(4)
    meds: list[str] = []
    if p.diabetes_type == "1":
        meds.append("Insulin glargine")
    elif p.diabetes_type == "2":
        meds.append("Metformin")
        if draws[0] < 0.5:
            meds.append(vocab.T2_DRUGS[int(rng.integers(len(vocab.T2_DRUGS)))])
    if p.hypertension_dx or p.hypertensive:
        picks = rng.choice(len(vocab.BP_DRUGS), size=1 + int(draws[1] < 0.4), replace=False)
        meds.extend(vocab.BP_DRUGS[i] for i in sorted(picks.tolist()))
    if any(p.cvd.values()) or (p.diabetes_type and p.age >= 40 and draws[2] < 0.6):
        meds.append("Atorvastatin")
    if p.cvd["atrial_fibrillation"]:
        meds.append("Apixaban")
    if p.cvd["heart_failure"]:
        meds.append("Bisoprolol")
    if p.asthma:
        meds.append("Salbutamol")
    if p.copd:
        meds.append("Tiotropium")
    return vocab.MED_SEPARATOR.join(meds) if meds else None


def _pcrs_row(rng: np.random.Generator, p: _Person) -> tuple:
    if p.diabetes_type and rng.random() < 0.6:
        scheme = "LTI"
    else:
        scheme = ("GMS", "GPVC", "DPS")[int(rng.choice(3, p=[0.6, 0.25, 0.15]))]
    meds = _medications(rng, p)
    claims = int(rng.integers(1, 60))
    return (
        p.ids[System.PCRS], p.ihi, p.age, p.sex, p.area, scheme, meds, claims,
        _random_date(rng, dt.date(2023, 1, 1), dt.date(2023, 12, 31)),
        round(claims * float(rng.uniform(15, 80)), 2),
    )


def _rs_row(rng: np.random.Generator, p: _Person) -> tuple:
    if p.attended:
        screened = _random_date(rng, dt.date(2022, 1, 1), dt.date(2023, 12, 31))
        grade = "R0" if not p.retinopathy else ("R1", "R2", "R3")[int(rng.choice(3, p=[0.6, 0.3, 0.1]))]
    else:
        screened, grade = None, None
    return (p.ids[System.RETINA_SCREEN], p.age, p.sex, p.area, p.diabetes_type,
            _tf(p.attended), screened, grade)


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def edit_name(rng: np.random.Generator, name: str) -> str:
    """One random single-character edit (substitute, delete, insert or swap) at a letter position."""
    positions = [i for i, ch in enumerate(name) if ch.isalpha()]
    i = positions[int(rng.integers(len(positions)))]
    kind = int(rng.integers(4))
    letter = _LETTERS[int(rng.integers(26))]
    if kind == 0:
        out = name[:i] + letter + name[i + 1:]
    elif kind == 1:
        out = name[:i] + name[i + 1:]
    elif kind == 2:
        out = name[:i] + letter + name[i:]
    else:
        j = i + 1 if i + 1 < len(name) else i - 1
        a, b = sorted((i, j))
        out = name[:a] + name[b] + name[a] + name[b + 1:]
    if out == name:
        repl = "x" if name[i].lower() != "x" else "q"
        out = name[:i] + repl + name[i + 1:]
    return out


def _corrupt(rng: np.random.Generator, rec: PiiRecord, rate: float) -> PiiRecord:
    if rng.random() >= rate:
        return rec
    options = ["name"]
    if rec.dob is not None and rec.dob.day <= 12 and rec.dob.day != rec.dob.month:
        options.append("dob")
    if rec.mobile:
        options.append("mobile")
    kind = options[int(rng.integers(len(options)))]
    if kind == "name":
        return PiiRecord(edit_name(rng, rec.name), rec.dob, rec.sex, rec.mobile, rec.address, rec.eircode_key)
    if kind == "dob":
        swapped = dt.date(rec.dob.year, rec.dob.day, rec.dob.month)
        return PiiRecord(rec.name, swapped, rec.sex, rec.mobile, rec.address, rec.eircode_key)
    return PiiRecord(rec.name, rec.dob, rec.sex, None, rec.address, rec.eircode_key)


def generate(config: GeneratorConfig | None = None) -> Bundle:
    cfg = config or GeneratorConfig()
    rng = np.random.default_rng(cfg.seed)
    salt = rng.bytes(8).hex()
    people = _draw_people(rng, cfg)
    _assign_ids(rng, people)

    rows: dict[System, list[tuple]] = {s: [] for s in SYSTEMS}
    pii: dict[System, dict[str, PiiRecord]] = {s: {} for s in SYSTEMS}
    membership = (
        (System.HIPE, "in_hipe"), (System.CDM, "in_cdm"),
        (System.PCRS, "in_pcrs"), (System.RETINA_SCREEN, "in_rs"),
    )
    for p in people:
        for system, flag in membership:
            if not getattr(p, flag):
                continue
            if system is System.HIPE:
                rows[system].extend(_hipe_rows(rng, p, salt))
            elif system is System.CDM:
                rows[system].append(_cdm_row(rng, p))
            elif system is System.PCRS:
                rows[system].append(_pcrs_row(rng, p))
            else:
                rows[system].append(_rs_row(rng, p))
            recorded = system is System.RETINA_SCREEN or rng.random() < cfg.mobile_recording_rate
            rec = PiiRecord(p.name, p.dob, p.sex, p.mobile if recorded else None, p.address, p.area)
            pii[system][p.ids[system]] = _corrupt(rng, rec, cfg.corruption_rate)

    datasets = {}
    for system in SYSTEMS:
        descriptor = default_descriptor(system)
        if system is System.HIPE:
            ordered = sorted(rows[system], key=lambda r: (r[0], r[2]))
        else:
            ordered = sorted(rows[system], key=lambda r: r[0])
        store = PiiStore(system, MappingProxyType(dict(sorted(pii[system].items()))))
        datasets[system] = SourceDataset(descriptor, tuple(ordered), store, f"<generated:{system.stem}>")

    truth = tuple(
        GroundTruthLink(
            person_id=p.pid,
            mrn=p.ids.get(System.HIPE),
            ihi=p.ihi,
            cdm_id=p.ids.get(System.CDM),
            pcrs_id=p.ids.get(System.PCRS),
            rs_id=p.ids.get(System.RETINA_SCREEN),
            mobile=p.mobile,
        )
        for p in people
    )
    return Bundle(cfg, MappingProxyType(datasets), truth)


def write_ground_truth(truth, path: str | Path) -> int:
    return write_rows(path, GROUND_TRUTH_COLUMNS, (
        (t.person_id, t.mrn, t.ihi, t.cdm_id, t.pcrs_id, t.rs_id, t.mobile) for t in truth
    ))


def read_ground_truth(path: str | Path) -> list[GroundTruthLink]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(GroundTruthLink(
                person_id=int(row["person_id"]),
                **{k: (row[k] or None) for k in GROUND_TRUTH_COLUMNS[1:]},
            ))
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_bundle(bundle: Bundle, out_dir: str | Path) -> dict:
    """Write the four data files, four PII sidecars and ``ground_truth.csv``; returns the manifest.

    The manifest is also saved as ``manifest.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for system in SYSTEMS:
        ds = bundle[system]
        path = out / f"{system.stem}.csv"
        files.append((path, write_dataset(ds, path)))
        path = out / f"{system.stem}_pii.csv"
        files.append((path, write_pii(ds.pii, path)))
    path = out / "ground_truth.csv"
    files.append((path, write_ground_truth(bundle.truth, path)))
    manifest = {
        "config": bundle.config.to_dict(),
        "config_hash": bundle.config.digest(),
        "files": [{"path": p.name, "rows": n, "sha256": _sha256(p)} for p, n in files],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
