"""Brute-force reference implementation of the condition types, for tests only.

Rows are grouped by the generator's ground-truth person id instead of going
through meta-records, and each condition is recomputed with plain loops.
Parameter parsing and output column lists are shared with :mod:`dispatch`;
the join logic is not.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping

from . import vocab
from .dispatch import ParamList, get_condition_type
from .ingest import SourceDataset
from .model import SYSTEMS, ResultTable, System, format_value, result_columns
from .synthgen import GroundTruthLink

HIPE, CDM, PCRS, RS = System.HIPE, System.CDM, System.PCRS, System.RETINA_SCREEN
_PRIMARY = {HIPE: "mrn", CDM: "cdm_id", PCRS: "pcrs_id", RS: "rs_id"}
_ORDER = (CDM, PCRS, RS, HIPE)


class _World:
    def __init__(self, sources: Mapping[System, SourceDataset], truth: Iterable[GroundTruthLink]):
        self.sources = sources
        owner = {}
        for t in truth:
            for system in SYSTEMS:
                ident = t.system_id(system)
                if ident:
                    owner[(system, ident)] = t.person_id
        self.rows = {s: list(sources[s].records()) for s in SYSTEMS}
        self.person = {}
        self.by_person = {s: defaultdict(list) for s in SYSTEMS}
        for s in SYSTEMS:
            for r in self.rows[s]:
                pid = owner[(s, r[_PRIMARY[s]])]
                self.person[(s, r[_PRIMARY[s]])] = pid
                self.by_person[s][pid].append(r)
        self.people = sorted({pid for pid in self.person.values()})

    def recs(self, pid, system):
        return self.by_person[system].get(pid, []) if pid is not None else []

    def first_id(self, pid, system):
        rs = self.recs(pid, system)
        return rs[0][_PRIMARY[system]] if rs else None

    def pii(self, system, ident):
        store = self.sources[system].pii
        return store.get(ident) if store is not None else None

    def name(self, system, ident):
        p = self.pii(system, ident)
        return p.name if p else None


def _persons_with_key(w: _World, kind: str, key: str) -> list:
    hits = set()
    if kind == "MRN":
        hits = {w.person[(HIPE, r["mrn"])] for r in w.rows[HIPE] if r["mrn"] == key}
    elif kind == "IHI":
        for s in (CDM, PCRS):
            hits |= {w.person[(s, r[_PRIMARY[s]])] for r in w.rows[s] if r["ihi"] == key}
    else:
        for s in SYSTEMS:
            store = w.sources[s].pii
            for ident, rec in (store.entries.items() if store else ()):
                if rec.mobile == key:
                    hits.add(w.person[(s, ident)])
    return sorted(hits)


def _f1(w, kind, systems, key):
    out = []
    for pid in _persons_with_key(w, kind, key):
        for s in SYSTEMS:
            if s not in systems:
                continue
            for r in w.recs(pid, s):
                ident = r[_PRIMARY[s]]
                p = w.pii(s, ident)
                if s is HIPE:
                    extra = (r["admission_date"], r["diagnosis_desc"], r["procedure"])
                elif s is CDM:
                    extra = (r["review_date"], "CDM review", vocab.cdm_conditions(r) or None)
                elif s is PCRS:
                    extra = (r["last_claim_date"], r["scheme"], r["medications"])
                else:
                    extra = (r["screening_date"], "RetinaScreen",
                             r["retinopathy_grade"] if r["attended"] == "true" else "did not attend")
                out.append((s.value, ident, extra[0], p and p.name, p and p.mobile, p and p.address,
                            r["sex"], r["age"], r["eircode_key"], extra[1], extra[2]))
    return out


def _demo(w, args):
    areas, min_age = args
    out = []
    for r in w.rows[CDM]:
        ok_area = False
        for a in areas:
            if r["eircode_key"] == a:
                ok_area = True
        if ok_area and (min_age is None or r["age"] >= min_age):
            p = w.pii(CDM, r["cdm_id"])
            out.append((r["cdm_id"], p.name, r["sex"], p.address, r["age"], r["eircode_key"],
                        vocab.AREAS.get(r["eircode_key"])))
    return out


def _f4(w, condition):
    out = []
    for r in w.rows[CDM]:
        if not (vocab.is_diabetic(r) and vocab.CONDITIONS[condition](r)):
            continue
        pid = w.person[(CDM, r["cdm_id"])]
        dates = [e["admission_date"] for e in w.recs(pid, HIPE) if e["diagnosis_code"] == "H36.0"]
        if not dates:
            continue
        screens = w.recs(pid, RS)
        attended = [s for s in screens if s["attended"] == "true"]
        if attended:
            continue
        out.append((r["cdm_id"], w.first_id(pid, HIPE), w.first_id(pid, RS), w.name(CDM, r["cdm_id"]),
                    r["sex"], r["age"], r["eircode_key"], r["diabetes_type"], sorted(dates)[0], len(dates),
                    "did not attend" if screens else "not enrolled"))
    return out


def _f5_rs(w, dtype):
    return [(r["rs_id"], w.name(RS, r["rs_id"]), r["sex"], r["age"], r["eircode_key"], r["diabetes_type"],
             r["screening_date"], r["retinopathy_grade"])
            for r in w.rows[RS] if r["diabetes_type"] == dtype and r["attended"] == "true"]


def _f5_hosp(w, dtype):
    out = []
    for e in w.rows[HIPE]:
        pid = w.person[(HIPE, e["mrn"])]
        for c in w.recs(pid, CDM):
            if c["diabetes_type"] == dtype:
                out.append((e["mrn"], c["cdm_id"], w.name(HIPE, e["mrn"]), e["sex"], e["age"], e["eircode_key"],
                            dtype, e["admission_date"], e["diagnosis_code"], e["diagnosis_desc"], e["procedure"]))
    return out


def _hyper(r):
    return r["hypertension"] == "true" or r["sbp"] >= 140 or r["dbp"] >= 90


def _f6(w, condition):
    out = []
    for r in w.rows[CDM]:
        if not (vocab.CONDITIONS[condition](r) and _hyper(r)):
            continue
        pid = w.person[(CDM, r["cdm_id"])]
        pcrs, rs = w.recs(pid, PCRS), w.recs(pid, RS)
        out.append((r["cdm_id"], w.first_id(pid, HIPE), w.first_id(pid, PCRS), w.first_id(pid, RS),
                    w.name(CDM, r["cdm_id"]), r["sex"], r["age"], r["eircode_key"], r["diabetes_type"],
                    r["sbp"], r["dbp"], r["hypertension"], pcrs[0]["medications"] if pcrs else None,
                    len(w.recs(pid, HIPE)), rs[0]["retinopathy_grade"] if rs else None))
    return out


def _f7(w, factors):
    out = []
    for r in w.rows[CDM]:
        hit = [f for f in factors if vocab.RISK_FACTORS[f](r)]
        if hit:
            out.append((r["cdm_id"], w.name(CDM, r["cdm_id"]), r["sex"], r["age"], r["eircode_key"], r["bmi"],
                        r["family_history"], r["activity_per_week"], r["nafld"], r["ethnicity_risk"], "; ".join(hit)))
    return out


def _f8(w, diseases):
    out = []
    for r in w.rows[CDM]:
        if r["diabetes_type"] not in ("1", "2"):
            continue
        hit = [d for d in diseases if r[vocab.CVD[d]] == "true"]
        if hit:
            out.append((r["cdm_id"], w.name(CDM, r["cdm_id"]), r["sex"], r["age"], r["eircode_key"],
                        r["diabetes_type"], "; ".join(hit)))
    return out


def _f9(w, antecedent, hipe_only):
    out = []
    for r in w.rows[CDM]:
        if r["diabetes_type"] not in ("1", "2") or r["amputation"] != "true":
            continue
        if r["amputation_antecedent"] != antecedent:
            continue
        pid = w.person[(CDM, r["cdm_id"])]
        eps = w.recs(pid, HIPE)
        if hipe_only and len(eps) == 0:
            continue
        amps = len([e for e in eps if e["procedure"] == vocab.AMPUTATION_PROCEDURE])
        out.append((r["cdm_id"], w.first_id(pid, HIPE), w.name(CDM, r["cdm_id"]), r["sex"], r["age"],
                    r["eircode_key"], r["diabetes_type"], antecedent, len(eps), amps))
    return out


def _people(w, gender, areas=None):
    out = []
    for pid in w.people:
        anchor = next(((s, w.recs(pid, s)[0]) for s in _ORDER if w.recs(pid, s)), None)
        s, r = anchor
        if r["sex"] != gender or (areas is not None and r["eircode_key"] not in areas):
            continue
        flags = tuple("true" if w.recs(pid, x) else "false" for x in SYSTEMS)
        out.append((w.first_id(pid, HIPE), w.first_id(pid, CDM), w.first_id(pid, PCRS), w.first_id(pid, RS),
                    w.name(s, r[_PRIMARY[s]]), r["sex"], r["age"], r["eircode_key"], *flags))
    return out


def _f12(w, condition):
    out = []
    for r in w.rows[CDM]:
        if not (vocab.CONDITIONS[condition](r) and _hyper(r)):
            continue
        pid = w.person[(CDM, r["cdm_id"])]
        for claim in w.recs(pid, PCRS):
            if not claim["medications"]:
                continue
            for med in claim["medications"].split("; "):
                out.append((r["cdm_id"], claim["pcrs_id"], w.name(CDM, r["cdm_id"]), r["sex"], r["age"],
                            r["eircode_key"], vocab.AREAS.get(r["eircode_key"]), claim["scheme"], med,
                            vocab.MEDICATION_CLASS.get(med, "other")))
    return out


def _f13(w, args):
    condition, gender, bound = args
    out = []
    for r in w.rows[CDM]:
        if vocab.CONDITIONS[condition](r) and r["sex"] == gender and r["activity_per_week"] < bound:
            pid = w.person[(CDM, r["cdm_id"])]
            out.append((r["cdm_id"], w.first_id(pid, HIPE), w.name(CDM, r["cdm_id"]), r["sex"], r["age"],
                        r["eircode_key"], vocab.cdm_conditions(r) or None, r["activity_per_week"], r["bmi"],
                        len(w.recs(pid, HIPE))))
    return out


_ALL = tuple(SYSTEMS)
_PLANS = {
    "F1_mrn": lambda w, a: _f1(w, "MRN", _ALL, a),
    "F1_id": lambda w, a: _f1(w, "IHI", (CDM, PCRS, RS), a),
    "F1_mobile": lambda w, a: _f1(w, "MOBILE", (CDM, PCRS, RS), a),
    "F2_eir": _demo,
    "F3_eir_age_data": _demo,
    "F3_eirdesc_age_data": _demo,
    "F4_rs_uptake": _f4,
    "F5_rs_diab_type": _f5_rs,
    "F5_Hospital_diabetes": _f5_hosp,
    "F6_Hypertension": _f6,
    "F7_diab_risk": _f7,
    "F8_cvd": _f8,
    "F9_all_amp": lambda w, a: _f9(w, a, False),
    "F9_hipe_amp": lambda w, a: _f9(w, a, True),
    "F10_system_gender": lambda w, a: _people(w, a),
    "F11_gender_eir": lambda w, a: _people(w, a[0], a[1]),
    "F12_medication": _f12,
    "F13_activity": _f13,
}


class Oracle:
    """Reusable oracle over one bundle (grouping is done once)."""

    def __init__(self, sources: Mapping[System, SourceDataset], truth: Iterable[GroundTruthLink]):
        self._w = _World(sources, truth)

    def join(self, condition_type: str, raw_params: str) -> ResultTable:
        ct = get_condition_type(condition_type)
        args = ct.parse(ParamList.parse(raw_params).values)
        rows = _PLANS[ct.name](self._w, args)
        return ResultTable(result_columns(ct.columns), tuple(rows), ct.systems,
                           condition_type=ct.name, params=raw_params)


def oracle_join(condition_type: str, raw_params: str, sources: Mapping[System, SourceDataset],
                truth: Iterable[GroundTruthLink]) -> ResultTable:
    return Oracle(sources, truth).join(condition_type, raw_params)


def row_multiset(table: ResultTable) -> list[tuple]:
    """Order-insensitive comparison key for a table's rows."""
    return sorted(tuple(format_value(v) for v in r) for r in table.rows)


__all__ = ["Oracle", "oracle_join", "row_multiset"]
