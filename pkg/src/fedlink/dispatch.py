"""Query processing layer: 18 condition types dispatched over the federation.

``dispatch(fed, "F4_rs_uptake", "Type 2 diabetes", role)`` parses the
comma-separated parameters, runs the join plan across the sources through the
meta-records, redacts the result for the role and returns it as the
``result_value`` table.  Unknown condition types give a :class:`Notice`
instead of an exception.

Parameters are bound as values and never interpolated into any query text.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import vocab
from .errors import AccessDenied, BadParams, UnknownConditionType
from .federation import Federation
from .governance import Role, check_access, redact
from .linkage import PatientMetaRecord
from .model import (
    SYSTEM_ID_KIND,
    SYSTEMS,
    IdentifierKind,
    ResultTable,
    System,
    format_value,
    result_columns,
    valid_identifier,
)

HIPE, CDM, PCRS, RS = System.HIPE, System.CDM, System.PCRS, System.RETINA_SCREEN
NOTICE_TEXT = "Check selected function"
MAX_AREAS = 3
DEFAULT_MIN_AGE = 45


@dataclass(frozen=True)
class Notice:
    """Outcome of an unrecognised condition type; carries no table."""

    message: str = NOTICE_TEXT
    condition_type: str = ""


@dataclass(frozen=True)
class ParamList:
    raw: str
    values: tuple[str, ...]

    @classmethod
    def parse(cls, raw: str) -> "ParamList":
        values = tuple(" ".join(v.split()) for v in (raw or "").split(","))
        values = tuple(v for v in values if v)
        if not values:
            raise BadParams("at least one parameter value is required")
        return cls(raw, values)


@dataclass(frozen=True)
class ConditionType:
    name: str
    title: str
    param_help: str
    systems: frozenset[System]
    columns: tuple[str, ...]
    parse: Callable[[tuple[str, ...]], Any]
    run: Callable[[Federation, Any], list[tuple]]


# --- parameter parsers ---------------------------------------------------------------------


def _exactly(n: int, values: Sequence[str], what: str) -> None:
    if len(values) != n:
        raise BadParams(f"expected {what}, got {len(values)} value(s)")


def _identifier(kind: IdentifierKind) -> Callable[[tuple[str, ...]], str]:
    def parse(values):
        _exactly(1, values, f"one {kind.value} value")
        if not valid_identifier(kind, values[0]):
            raise BadParams(f"{values[0]!r} is not a valid {kind.value}")
        return values[0]
    return parse


def _routing_key(text: str) -> str:
    if not valid_identifier(IdentifierKind.EIRCODE_KEY, text):
        raise BadParams(f"{text!r} is not an Eircode routing key (3 characters, upper case)")
    return text


def _area_name(text: str) -> str:
    key = vocab.AREA_BY_NAME.get(text.lower())
    if key is None:
        raise BadParams(f"unknown area name {text!r}")
    return key


def _areas(values: Sequence[str], to_key: Callable[[str], str]) -> tuple[str, ...]:
    if not values:
        raise BadParams("at least one area is required")
    if len(values) > MAX_AREAS:
        raise BadParams(f"at most {MAX_AREAS} areas per query, got {len(values)}")
    return tuple(dict.fromkeys(to_key(v) for v in values))


def _parse_f2(values):
    return _areas(values, _routing_key), None


def _area_age(to_key):
    def parse(values):
        ages = [v for v in values if re.fullmatch(r"[+-]?[0-9.]+", v)]
        if len(ages) > 1:
            raise BadParams("at most one minimum age")
        min_age = DEFAULT_MIN_AGE
        if ages:
            if not re.fullmatch(r"[0-9]+", ages[0]):
                raise BadParams(f"minimum age must be a nonnegative integer, got {ages[0]!r}")
            min_age = int(ages[0])
        return _areas([v for v in values if v not in ages], to_key), min_age
    return parse


def _condition(text: str) -> str:
    name = vocab.canonical_condition(text)
    if name is None:
        raise BadParams(f"unknown condition {text!r}; known: {', '.join(vocab.CONDITIONS)}")
    return name


def _parse_condition(values):
    _exactly(1, values, "one condition")
    return _condition(values[0])


DIABETES_CONDITIONS = ("Type 2 diabetes", "Type 1 diabetes", "Diabetes")


def _parse_diabetes_condition(values):
    name = _parse_condition(values)
    if name not in DIABETES_CONDITIONS:
        raise BadParams(f"condition must be one of {', '.join(DIABETES_CONDITIONS)}")
    return name


def _parse_diabetes_type(values):
    _exactly(1, values, "one diabetes type")
    if values[0] not in ("1", "2"):
        raise BadParams(f"diabetes type must be 1 or 2, got {values[0]!r}")
    return values[0]


def _parse_factors(values):
    out: list[str] = []
    for v in values:
        names = vocab.canonical_factors(v)
        if names is None:
            raise BadParams(f"unknown risk factor {v!r}")
        out.extend(names)
    return tuple(f for f in vocab.RISK_FACTORS if f in out)


def _parse_cvd(values):
    out = []
    for v in values:
        name = vocab.canonical_cvd(v)
        if name is None:
            raise BadParams(f"unknown cardiovascular disease {v!r}")
        out.append(name)
    return tuple(c for c in vocab.CVD if c in out)


_ANTECEDENTS = {a.lower(): a for a in vocab.AMPUTATION_ANTECEDENTS}


def _parse_antecedent(values):
    _exactly(1, values, "one antecedent")
    name = _ANTECEDENTS.get(values[0].lower())
    if name is None:
        raise BadParams(f"unknown antecedent {values[0]!r}; known: {', '.join(vocab.AMPUTATION_ANTECEDENTS)}")
    return name


def _gender(text: str) -> str:
    g = text.upper()
    if g not in ("M", "F"):
        raise BadParams(f"gender must be M or F, got {text!r}")
    return g


def _parse_gender(values):
    _exactly(1, values, "one gender")
    return _gender(values[0])


def _parse_gender_eir(values):
    if len(values) < 2:
        raise BadParams("expected a gender followed by 1-3 routing keys")
    return _gender(values[0]), _areas(values[1:], _routing_key)


def _parse_activity(values):
    _exactly(3, values, "condition, gender, activity bound")
    cond, gender, bound = values
    if not re.fullmatch(r"[0-9]+", bound):
        raise BadParams(f"activity bound must be a nonnegative integer, got {bound!r}")
    return _condition(cond), _gender(gender), int(bound)


# --- join plans --------------------------------------------------------------------------


def _pii_fields(fed: Federation, system: System, ident: str) -> tuple:
    p = fed.pii(system, ident)
    return (p.name, p.mobile, p.address) if p else (None, None, None)


def _ident(person: PatientMetaRecord | None, kind: IdentifierKind) -> str | None:
    return person.identifiers.get(kind) if person is not None else None


def _event_rows(fed: Federation, person: PatientMetaRecord | None, systems: Sequence[System]) -> list[tuple]:
    rows = []
    for system in SYSTEMS:
        if system not in systems:
            continue
        for rec in fed.records_of(person, system):
            if system is HIPE:
                rid, date, item, detail = rec["mrn"], rec["admission_date"], rec["diagnosis_desc"], rec["procedure"]
            elif system is CDM:
                rid, date = rec["cdm_id"], rec["review_date"]
                item, detail = "CDM review", vocab.cdm_conditions(rec) or None
            elif system is PCRS:
                rid, date, item, detail = rec["pcrs_id"], rec["last_claim_date"], rec["scheme"], rec["medications"]
            else:
                rid, date, item = rec["rs_id"], rec["screening_date"], "RetinaScreen"
                detail = rec["retinopathy_grade"] if rec["attended"] == vocab.TRUE else "did not attend"
            name, mobile, address = _pii_fields(fed, system, rid)
            rows.append((system.value, rid, date, name, mobile, address,
                         rec["sex"], rec["age"], rec["eircode_key"], item, detail))
    return rows


F1_COLUMNS = ("source_system", "record_id", "event_date", "name", "mobile", "address",
              "sex", "age", "eircode_key", "item", "detail")


def _f1(kind: IdentifierKind, systems: Sequence[System]):
    def run(fed: Federation, key: str) -> list[tuple]:
        return _event_rows(fed, fed.meta.resolve(kind, key), systems)
    return run


F2_COLUMNS = ("cdm_id", "name", "sex", "address", "age", "eircode_key", "area")


def _run_demographics(fed: Federation, args) -> list[tuple]:
    areas, min_age = args
    rows = []
    for rec in fed.rows(CDM):
        if rec["eircode_key"] not in areas:
            continue
        if min_age is not None and rec["age"] < min_age:
            continue
        p = fed.pii(CDM, rec["cdm_id"])
        rows.append((rec["cdm_id"], p.name if p else None, rec["sex"], p.address if p else None,
                     rec["age"], rec["eircode_key"], vocab.AREAS.get(rec["eircode_key"])))
    return rows


def _cdm_cohort(fed: Federation, keep: Callable[[dict], bool]):
    for rec in fed.rows(CDM):
        if keep(rec):
            yield rec, fed.person_of(CDM, rec["cdm_id"])


def _name(fed: Federation, system: System, ident: str) -> str | None:
    p = fed.pii(system, ident)
    return p.name if p else None


F4_COLUMNS = ("cdm_id", "mrn", "rs_id", "name", "sex", "age", "eircode_key", "diabetes_type",
              "admission_date", "hospital_admissions", "rs_status")


def _run_f4(fed: Federation, condition: str) -> list[tuple]:
    pred = vocab.CONDITIONS[condition]
    rows = []
    for rec, person in _cdm_cohort(fed, lambda r: vocab.is_diabetic(r) and pred(r)):
        episodes = [e for e in fed.records_of(person, HIPE) if e["diagnosis_code"] == vocab.RETINOPATHY_CODE]
        if not episodes:
            continue
        screens = fed.records_of(person, RS)
        if any(s["attended"] == vocab.TRUE for s in screens):
            continue
        rows.append((
            rec["cdm_id"], _ident(person, IdentifierKind.MRN), _ident(person, IdentifierKind.RS_ID),
            _name(fed, CDM, rec["cdm_id"]), rec["sex"], rec["age"], rec["eircode_key"], rec["diabetes_type"],
            min(e["admission_date"] for e in episodes), len(episodes),
            "did not attend" if screens else "not enrolled",
        ))
    return rows


F5_RS_COLUMNS = ("rs_id", "name", "sex", "age", "eircode_key", "diabetes_type", "screening_date", "retinopathy_grade")


def _run_f5_rs(fed: Federation, dtype: str) -> list[tuple]:
    return [
        (rec["rs_id"], _name(fed, RS, rec["rs_id"]), rec["sex"], rec["age"], rec["eircode_key"],
         rec["diabetes_type"], rec["screening_date"], rec["retinopathy_grade"])
        for rec in fed.rows(RS)
        if rec["diabetes_type"] == dtype and rec["attended"] == vocab.TRUE
    ]


F5_HOSP_COLUMNS = ("mrn", "cdm_id", "name", "sex", "age", "eircode_key", "diabetes_type",
                   "admission_date", "diagnosis_code", "diagnosis_desc", "procedure")


def _run_f5_hospital(fed: Federation, dtype: str) -> list[tuple]:
    rows = []
    for ep in fed.rows(HIPE):
        person = fed.person_of(HIPE, ep["mrn"])
        cdm = fed.records_of(person, CDM)
        if not cdm or cdm[0]["diabetes_type"] != dtype:
            continue
        rows.append((ep["mrn"], cdm[0]["cdm_id"], _name(fed, HIPE, ep["mrn"]), ep["sex"], ep["age"],
                     ep["eircode_key"], dtype, ep["admission_date"], ep["diagnosis_code"],
                     ep["diagnosis_desc"], ep["procedure"]))
    return rows


F6_COLUMNS = ("cdm_id", "mrn", "pcrs_id", "rs_id", "name", "sex", "age", "eircode_key", "diabetes_type",
              "sbp", "dbp", "hypertension", "medications", "hospital_admissions", "retinopathy_grade")


def _f6_cohort(fed: Federation, condition: str):
    pred = vocab.CONDITIONS[condition]
    return _cdm_cohort(fed, lambda r: pred(r) and vocab.hypertensive(r))


def _run_f6(fed: Federation, condition: str) -> list[tuple]:
    rows = []
    for rec, person in _f6_cohort(fed, condition):
        pcrs = fed.records_of(person, PCRS)
        rs = fed.records_of(person, RS)
        rows.append((
            rec["cdm_id"], _ident(person, IdentifierKind.MRN), _ident(person, IdentifierKind.PCRS_ID),
            _ident(person, IdentifierKind.RS_ID), _name(fed, CDM, rec["cdm_id"]), rec["sex"], rec["age"],
            rec["eircode_key"], rec["diabetes_type"], rec["sbp"], rec["dbp"], rec["hypertension"],
            pcrs[0]["medications"] if pcrs else None, len(fed.records_of(person, HIPE)),
            rs[0]["retinopathy_grade"] if rs else None,
        ))
    return rows


F7_COLUMNS = ("cdm_id", "name", "sex", "age", "eircode_key", "bmi", "family_history",
              "activity_per_week", "nafld", "ethnicity_risk", "matched_factors")


def _run_f7(fed: Federation, factors: tuple[str, ...]) -> list[tuple]:
    rows = []
    for rec in fed.rows(CDM):
        matched = [f for f in factors if vocab.RISK_FACTORS[f](rec)]
        if matched:
            rows.append((rec["cdm_id"], _name(fed, CDM, rec["cdm_id"]), rec["sex"], rec["age"],
                         rec["eircode_key"], rec["bmi"], rec["family_history"], rec["activity_per_week"],
                         rec["nafld"], rec["ethnicity_risk"], vocab.MED_SEPARATOR.join(matched)))
    return rows


F8_COLUMNS = ("cdm_id", "name", "sex", "age", "eircode_key", "diabetes_type", "matched_cvd")


def _run_f8(fed: Federation, diseases: tuple[str, ...]) -> list[tuple]:
    rows = []
    for rec in fed.rows(CDM):
        if not vocab.is_diabetic(rec):
            continue
        matched = [d for d in diseases if rec[vocab.CVD[d]] == vocab.TRUE]
        if matched:
            rows.append((rec["cdm_id"], _name(fed, CDM, rec["cdm_id"]), rec["sex"], rec["age"],
                         rec["eircode_key"], rec["diabetes_type"], vocab.MED_SEPARATOR.join(matched)))
    return rows


F9_COLUMNS = ("cdm_id", "mrn", "name", "sex", "age", "eircode_key", "diabetes_type", "antecedent",
              "hospital_admissions", "hospital_amputations")


def _f9(hipe_only: bool):
    def run(fed: Federation, antecedent: str) -> list[tuple]:
        rows = []
        keep = lambda r: (vocab.is_diabetic(r) and r["amputation"] == vocab.TRUE
                          and r["amputation_antecedent"] == antecedent)
        for rec, person in _cdm_cohort(fed, keep):
            episodes = fed.records_of(person, HIPE)
            if hipe_only and not episodes:
                continue
            amputations = sum(1 for e in episodes if e["procedure"] == vocab.AMPUTATION_PROCEDURE)
            rows.append((rec["cdm_id"], _ident(person, IdentifierKind.MRN), _name(fed, CDM, rec["cdm_id"]),
                         rec["sex"], rec["age"], rec["eircode_key"], rec["diabetes_type"], antecedent,
                         len(episodes), amputations))
        return rows
    return run


F10_COLUMNS = ("mrn", "cdm_id", "pcrs_id", "rs_id", "name", "sex", "age", "eircode_key",
               "in_hipe", "in_cdm", "in_pcrs", "in_rs")


def _person_rows(fed: Federation, keep: Callable[[dict], bool]) -> list[tuple]:
    rows = []
    for person in fed.meta:
        found = fed.anchor(person)
        if found is None:
            continue
        system, rec = found
        if not keep(rec):
            continue
        ids = person.identifiers
        present = fed.systems_of(person)
        rows.append((
            ids.get(IdentifierKind.MRN), ids.get(IdentifierKind.CDM_ID), ids.get(IdentifierKind.PCRS_ID),
            ids.get(IdentifierKind.RS_ID), _name(fed, system, ids[SYSTEM_ID_KIND[system]]),
            rec["sex"], rec["age"], rec["eircode_key"],
            *(vocab.TRUE if s in present else vocab.FALSE for s in SYSTEMS),
        ))
    return rows


def _run_f10(fed: Federation, gender: str) -> list[tuple]:
    return _person_rows(fed, lambda r: r["sex"] == gender)


def _run_f11(fed: Federation, args) -> list[tuple]:
    gender, areas = args
    return _person_rows(fed, lambda r: r["sex"] == gender and r["eircode_key"] in areas)


F12_COLUMNS = ("cdm_id", "pcrs_id", "name", "sex", "age", "eircode_key", "area", "scheme",
               "medication", "medication_class")


def _run_f12(fed: Federation, condition: str) -> list[tuple]:
    rows = []
    for rec, person in _f6_cohort(fed, condition):
        for claim in fed.records_of(person, PCRS):
            for med in (claim["medications"] or "").split(vocab.MED_SEPARATOR):
                if not med:
                    continue
                rows.append((rec["cdm_id"], claim["pcrs_id"], _name(fed, CDM, rec["cdm_id"]), rec["sex"],
                             rec["age"], rec["eircode_key"], vocab.AREAS.get(rec["eircode_key"]),
                             claim["scheme"], med, vocab.MEDICATION_CLASS.get(med, "other")))
    return rows


F13_COLUMNS = ("cdm_id", "mrn", "name", "sex", "age", "eircode_key", "conditions", "activity_per_week",
               "bmi", "hospital_admissions")


def _run_f13(fed: Federation, args) -> list[tuple]:
    condition, gender, bound = args
    pred = vocab.CONDITIONS[condition]
    rows = []
    keep = lambda r: pred(r) and r["sex"] == gender and r["activity_per_week"] < bound
    for rec, person in _cdm_cohort(fed, keep):
        rows.append((rec["cdm_id"], _ident(person, IdentifierKind.MRN), _name(fed, CDM, rec["cdm_id"]),
                     rec["sex"], rec["age"], rec["eircode_key"], vocab.cdm_conditions(rec) or None,
                     rec["activity_per_week"], rec["bmi"], len(fed.records_of(person, HIPE))))
    return rows


def _ct(name, title, param_help, systems, columns, parse, run) -> ConditionType:
    return ConditionType(name, title, param_help, frozenset(systems), tuple(columns), parse, run)


ALL = (HIPE, CDM, PCRS, RS)
_REGISTRY = (
    _ct("F1_mrn", "Patient profile by MRN", "MRN", ALL, F1_COLUMNS,
        _identifier(IdentifierKind.MRN), _f1(IdentifierKind.MRN, ALL)),
    _ct("F1_id", "Patient profile by IHI", "IHI", (CDM, PCRS, RS), F1_COLUMNS,
        _identifier(IdentifierKind.IHI), _f1(IdentifierKind.IHI, (CDM, PCRS, RS))),
    _ct("F1_mobile", "Patient profile by mobile number", "mobile", (CDM, PCRS, RS), F1_COLUMNS,
        _identifier(IdentifierKind.MOBILE), _f1(IdentifierKind.MOBILE, (CDM, PCRS, RS))),
    _ct("F2_eir", "Patients by Eircode routing key", "1-3 routing keys", (CDM,), F2_COLUMNS,
        _parse_f2, _run_demographics),
    _ct("F3_eir_age_data", "Patients by routing key and minimum age", "1-3 routing keys[, min age]",
        (CDM,), F2_COLUMNS, _area_age(_routing_key), _run_demographics),
    _ct("F3_eirdesc_age_data", "Patients by area name and minimum age", "1-3 area names[, min age]",
        (CDM,), F2_COLUMNS, _area_age(_area_name), _run_demographics),
    _ct("F4_rs_uptake", "Retinopathy admissions without RetinaScreen attendance", "condition",
        (RS, CDM, HIPE), F4_COLUMNS, _parse_condition, _run_f4),
    _ct("F5_rs_diab_type", "RetinaScreen attendees by diabetes type", "1 or 2", (RS,), F5_RS_COLUMNS,
        _parse_diabetes_type, _run_f5_rs),
    _ct("F5_Hospital_diabetes", "Hospital admissions by diabetes type", "1 or 2", (CDM, HIPE),
        F5_HOSP_COLUMNS, _parse_diabetes_type, _run_f5_hospital),
    _ct("F6_Hypertension", "Diabetes with hypertension", "diabetes condition", ALL, F6_COLUMNS,
        _parse_diabetes_condition, _run_f6),
    _ct("F7_diab_risk", "Diabetes risk factors", "risk factors", (CDM,), F7_COLUMNS,
        _parse_factors, _run_f7),
    _ct("F8_cvd", "Diabetes with cardiovascular disease", "cardiovascular diseases", (CDM,), F8_COLUMNS,
        _parse_cvd, _run_f8),
    _ct("F9_all_amp", "Diabetic amputations", "antecedent", (CDM, HIPE), F9_COLUMNS,
        _parse_antecedent, _f9(hipe_only=False)),
    _ct("F9_hipe_amp", "Diabetic amputations registered in hospital", "antecedent", (CDM, HIPE),
        F9_COLUMNS, _parse_antecedent, _f9(hipe_only=True)),
    _ct("F10_system_gender", "Patients by gender across systems", "M or F", ALL, F10_COLUMNS,
        _parse_gender, _run_f10),
    _ct("F11_gender_eir", "Patients by gender and routing key", "gender, 1-3 routing keys", ALL,
        F10_COLUMNS, _parse_gender_eir, _run_f11),
    _ct("F12_medication", "Medication of diabetic hypertensive patients", "diabetes condition",
        (CDM, PCRS), F12_COLUMNS, _parse_diabetes_condition, _run_f12),
    _ct("F13_activity", "Physical activity by condition and gender", "condition, gender, bound",
        (CDM, HIPE), F13_COLUMNS, _parse_activity, _run_f13),
)

REGISTRY: Mapping[str, ConditionType] = {ct.name: ct for ct in _REGISTRY}
CONDITION_TYPES: tuple[str, ...] = tuple(REGISTRY)
ALIASES: Mapping[str, str] = {
    "F3_eir_above45_data": "F3_eir_age_data",
    "F3_eirdesc_above45_data": "F3_eirdesc_age_data",
}
_LOOKUP = {k.lower(): k for k in CONDITION_TYPES} | {k.lower(): v for k, v in ALIASES.items()}


def canonical_type(name: str) -> str:
    try:
        return _LOOKUP[name.strip().lower()]
    except (KeyError, AttributeError):
        raise UnknownConditionType(f"unknown condition type {name!r}") from None


def get_condition_type(name: str) -> ConditionType:
    return REGISTRY[canonical_type(name)]


def execute(fed: Federation, condition_type: str, raw_params: str) -> ResultTable:
    """Run a condition type without governance; the unredacted ``result_value``."""
    ct = get_condition_type(condition_type)
    args = ct.parse(ParamList.parse(raw_params).values)
    rows = ct.run(fed, args)
    return ResultTable(result_columns(ct.columns), tuple(rows), ct.systems,
                       condition_type=ct.name, params=raw_params)


def dispatch(fed: Federation, condition_type: str, raw_params: str, role: Role) -> ResultTable | Notice:
    try:
        name = canonical_type(condition_type)
    except UnknownConditionType:
        return Notice(NOTICE_TEXT, condition_type)
    decision = check_access(role, name)
    if not decision:
        raise AccessDenied(f"{role.name}: {decision.reason}")
    return redact(execute(fed, name, raw_params), role)


@dataclass
class Session:
    """One role's conversation with the engine; holds at most one ``result_value``."""

    fed: Federation
    role: Role
    result_value: ResultTable | None = None
    notices: list[Notice] = field(default_factory=list)

    def run(self, condition_type: str, raw_params: str) -> ResultTable | Notice:
        self.result_value = None
        outcome = dispatch(self.fed, condition_type, raw_params, self.role)
        if isinstance(outcome, Notice):
            self.notices.append(outcome)
        else:
            self.result_value = outcome
        return outcome


# --- rendering ---------------------------------------------------------------------------


def result_csv(table: ResultTable, role: Role | str | None = None) -> str:
    """CSV text with a ``#`` comment header carrying type, parameters, provenance and role."""
    buf = io.StringIO()
    provenance = ",".join(s.value for s in SYSTEMS if s in table.provenance)
    buf.write(f"# condition_type: {table.condition_type or ''}\n")
    buf.write(f"# params: {' '.join((table.params or '').split())}\n")
    buf.write(f"# provenance: {provenance}\n")
    if role is not None:
        buf.write(f"# role: {role if isinstance(role, str) else role.name}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.column_names)
    for row in table.rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_result_csv(table: ResultTable, path: str | Path, role: Role | str | None = None) -> None:
    Path(path).write_text(result_csv(table, role), encoding="utf-8", newline="")


def read_result_csv(path: str | Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Inverse of :func:`write_result_csv` at the text level: (header comments, columns, rows)."""
    meta, lines = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# ") and not lines:
            k, _, v = line[2:].partition(": ")
            meta[k] = v
        else:
            lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader, [])
    return meta, columns, [r for r in reader]


def render_table(table: ResultTable, limit: int | None = None, max_width: int = 32) -> str:
    """Fixed-width text rendering; deterministic for a given table."""
    def cell(v):
        s = format_value(v)
        return s if len(s) <= max_width else s[: max_width - 1] + "~"

    rows = table.rows if limit is None else table.rows[:limit]
    body = [[cell(v) for v in r] for r in rows]
    names = list(table.column_names)
    widths = [max([len(n)] + [len(r[i]) for r in body]) for i, n in enumerate(names)]
    fmt = lambda cells: " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(names), "-+-".join("-" * w for w in widths)]
    lines += [fmt(r) for r in body]
    footer = f"({len(table)} row{'s' if len(table) != 1 else ''}"
    if limit is not None and len(table) > limit:
        footer += f", first {limit} shown"
    lines.append(footer + ")")
    return "\n".join(lines)


__all__ = [
    "ALIASES", "CONDITION_TYPES", "ConditionType", "NOTICE_TEXT", "Notice", "ParamList", "REGISTRY",
    "Session", "canonical_type", "dispatch", "execute", "get_condition_type", "read_result_csv",
    "render_table", "result_csv", "write_result_csv",
]
