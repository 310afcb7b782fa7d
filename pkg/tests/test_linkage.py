import datetime as dt
import itertools

import pytest
from hypothesis import assume, given, strategies as st

from fedlink.errors import IdentifierConflict, InvalidConfig, UnknownIdentifier
from fedlink.ingest import SourceDataset
from fedlink.linkage import (
    LinkageConfig,
    LinkMethod,
    MetaRecordSet,
    PatientMetaRecord,
    PiiView,
    _record_views,
    build_meta_records,
    candidate_pairs,
    evaluate_linkage,
    levenshtein,
    link_deterministic,
    name_similarity,
    score_pair,
)
from fedlink.model import SYSTEM_ID_KIND, SYSTEMS, IdentifierKind, System
from fedlink.synthgen import SAMPLE_IHI, GeneratorConfig, generate

KEY_A = (System.CDM, "1")
KEY_B = (System.PCRS, "2")


def view(key=KEY_A, **kw):
    base = dict(name="Aoife Byrne", dob=dt.date(1960, 3, 14), sex="F", eircode_key="F52", mobile="0871234567")
    base.update(kw)
    return PiiView(key, **base)


# -- scoring ---------------------------------------------------------------------------------

def test_identical_records_score_one():
    assert score_pair(view(), view(KEY_B)) == 1.0


def test_disjoint_records_score_zero():
    other = view(KEY_B, name="zzzz", dob=dt.date(1999, 1, 1), sex="M", eircode_key="D01", mobile="0990000000")
    assert score_pair(view(), other) == 0.0


def test_one_typo_scores_above_match_threshold():
    cfg = LinkageConfig()
    name = "Aoife Byrne"
    typo = "Aoife Byrme"
    sim = 1 - 1 / len(name)
    expected = cfg.name_weight * sim + (1 - cfg.name_weight)
    got = score_pair(view(), view(KEY_B, name=typo), cfg)
    assert got == pytest.approx(expected)
    assert got >= cfg.match_threshold


def test_missing_fields_renormalize():
    a = view(mobile=None)
    b = view(KEY_B, mobile=None)
    assert score_pair(a, b) == 1.0
    c = view(KEY_B, mobile=None, sex="M")
    assert score_pair(a, c) == pytest.approx(0.7 / 0.8)


def test_no_shared_fields_scores_zero():
    assert score_pair(PiiView(KEY_A), PiiView(KEY_B)) == 0.0


def test_levenshtein_basics():
    assert levenshtein("", "abc") == 3
    assert levenshtein("kitten", "sitting") == 3
    assert name_similarity("ANNE", "anne") == 1.0


_views = st.builds(
    PiiView,
    key=st.just(KEY_A),
    name=st.one_of(st.none(), st.text(alphabet="abcde ", min_size=1, max_size=10)),
    dob=st.one_of(st.none(), st.dates(dt.date(1930, 1, 1), dt.date(2010, 1, 1))),
    sex=st.one_of(st.none(), st.sampled_from(["M", "F"])),
    eircode_key=st.one_of(st.none(), st.sampled_from(["F52", "F93", "D01"])),
    mobile=st.one_of(st.none(), st.sampled_from(["0871111111", "0872222222"])),
)


@given(_views, _views)
def test_score_symmetric_and_bounded(a, b):
    s = score_pair(a, b)
    assert 0.0 <= s <= 1.0
    assert s == pytest.approx(score_pair(b, a))


@given(_views, st.sampled_from(["name", "dob", "sex", "eircode_key", "mobile"]))
def test_corrupting_a_field_never_raises_score(a, field):
    """Start from a perfect match; perturb one present field on one side."""
    assume(getattr(a, field) is not None)
    b = PiiView(KEY_B, a.name, a.dob, a.sex, a.eircode_key, a.mobile)
    bad = {"name": (a.name or "") + "q", "dob": dt.date(1900, 1, 1), "sex": "X",
           "eircode_key": "Z99", "mobile": "0000000000"}[field]
    c = PiiView(KEY_B, **{**{f: getattr(b, f) for f in ("name", "dob", "sex", "eircode_key", "mobile")},
                          field: bad})
    assert score_pair(a, c) <= score_pair(a, b)


# -- config -----------------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(match_threshold=0.6, review_threshold=0.7),
    dict(match_threshold=1.2),
    dict(name_weight=0.6),
    dict(name_weight=-0.1, mobile_weight=0.8),
    dict(blocking_keys=("dob_year+shoe_size",)),
])
def test_invalid_linkage_config(kw):
    with pytest.raises(InvalidConfig):
        LinkageConfig(**kw)


def test_linkage_config_file(tmp_path):
    path = tmp_path / "link.conf"
    path.write_text("[linkage]\nmatch_threshold = 0.9\nreview_threshold = 0.6\n"
                    "blocking_keys = sex+dob\n[weights]\nname = 0.4\nmobile = 0.3\n")
    cfg = LinkageConfig.from_file(path)
    assert cfg.match_threshold == 0.9 and cfg.blocking_keys == ("sex+dob",)
    assert cfg.weights["name"] == 0.4


# -- deterministic pass -----------------------------------------------------------------------

def _subset(ds, ids):
    return SourceDataset(ds.descriptor, tuple(r for r in ds.rows if ds.key(r) in ids), None)


def test_shared_ihi_links_cdm_and_pcrs(clean_bundle):
    (t,) = [t for t in clean_bundle.truth if t.ihi == SAMPLE_IHI]
    sources = {
        System.CDM: _subset(clean_bundle[System.CDM], {t.cdm_id}),
        System.PCRS: _subset(clean_bundle[System.PCRS], {t.pcrs_id}),
    }
    meta = link_deterministic(sources)
    (m,) = meta.records
    assert m.get(IdentifierKind.CDM_ID) == t.cdm_id
    assert m.get(IdentifierKind.PCRS_ID) == t.pcrs_id
    assert m.get(IdentifierKind.IHI) == SAMPLE_IHI
    assert all(lk.method is LinkMethod.DETERMINISTIC and lk.confidence == 1.0 for lk in m.links)


def test_disjoint_identifiers_do_not_merge(clean_bundle):
    cdm = clean_bundle[System.CDM]
    pcrs = clean_bundle[System.PCRS]
    cdm_ihis = {r["ihi"] for r in cdm.records() if r["ihi"]}
    a = _subset(cdm, set(cdm.ids[:5]))
    b = _subset(pcrs, {r["pcrs_id"] for r in pcrs.records() if r["ihi"] and r["ihi"] not in cdm_ihis})
    meta = link_deterministic({System.CDM: a, System.PCRS: b})
    assert len(meta) == len(a) + len(b)


def test_full_ihi_coverage_gives_one_record_per_person():
    b = generate(GeneratorConfig(seed=42, population=1500, ihi_coverage=1.0, mobile_recording_rate=1.0,
                                 corruption_rate=0.0))
    meta = link_deterministic(b.datasets)
    enrolled = [t for t in b.truth if any(t.system_id(s) for s in SYSTEMS)]
    assert len(meta) == len(enrolled)
    assert evaluate_linkage(meta, b.truth).f1 == 1.0


def test_record_with_two_ihis_conflicts(clean_bundle):
    pcrs = clean_bundle[System.PCRS]
    i = pcrs.descriptor.index("ihi")
    rows = list(pcrs.rows[:2])
    rows[1] = tuple(pcrs.rows[0][:1]) + rows[1][1:]  # same pcrs_id, second row
    rows[0] = rows[0][:i] + ("111",) + rows[0][i + 1:]
    rows[1] = rows[1][:i] + ("222",) + rows[1][i + 1:]
    bad = SourceDataset(pcrs.descriptor, tuple(rows), None)
    with pytest.raises(IdentifierConflict):
        link_deterministic({System.PCRS: bad})


# -- full linkage -----------------------------------------------------------------------------

def test_clean_data_perfect(clean_bundle, clean_meta):
    q = evaluate_linkage(clean_meta, clean_bundle.truth)
    assert (q.precision, q.recall, q.f1) == (1.0, 1.0, 1.0)


def test_deterministic_only_baseline(clean_bundle):
    q = evaluate_linkage(link_deterministic(clean_bundle.datasets), clean_bundle.truth)
    assert q.precision == 1.0
    assert q.recall < 1.0


def test_noisy_data_bounds(noisy_bundle):
    q = evaluate_linkage(build_meta_records(noisy_bundle.datasets), noisy_bundle.truth)
    assert q.precision >= 0.98
    assert q.recall >= 0.95


def test_every_record_in_exactly_one_meta_record(clean_bundle, clean_meta):
    seen = [k for m in clean_meta for k in m.record_keys]
    assert len(seen) == len(set(seen))
    expected = {(s, i) for s in SYSTEMS for i in clean_bundle[s].ids}
    assert set(seen) == expected


def test_single_system_input(clean_bundle):
    rs = clean_bundle[System.RETINA_SCREEN]
    meta = build_meta_records({System.RETINA_SCREEN: rs})
    assert len(meta) == len(rs)
    assert not any(lk.method is LinkMethod.FUZZY for m in meta for lk in m.links)
    assert not meta.review


def test_meta_ids_unique_and_stable(clean_bundle, clean_meta):
    ids = [m.meta_id for m in clean_meta]
    assert len(ids) == len(set(ids))
    again = build_meta_records(clean_bundle.datasets)
    assert [m.meta_id for m in again] == ids
    assert again.partition() == clean_meta.partition()


def test_idempotent_on_own_output(noisy_bundle):
    first = build_meta_records(noisy_bundle.datasets)
    second = build_meta_records(noisy_bundle.datasets, prior=first)
    assert second.partition() == first.partition()


def test_blocking_sound_on_clean_data(clean_bundle):
    cfg = LinkageConfig()
    views = _record_views(clean_bundle.datasets)
    pairs = candidate_pairs(views, cfg)
    pairs |= {(b, a) for a, b in pairs}
    for t in clean_bundle.truth:
        keys = [(s, t.system_id(s)) for s in SYSTEMS if t.system_id(s) and (s, t.system_id(s)) in views]
        with_pii = [k for k in keys if views[k].dob is not None]
        for a, b in itertools.combinations(with_pii, 2):
            assert (a, b) in pairs


def test_review_band(noisy_bundle):
    cfg = LinkageConfig()
    meta = build_meta_records(noisy_bundle.datasets, config=cfg)
    for lk in meta.review:
        assert cfg.review_threshold <= lk.confidence < cfg.match_threshold
        assert meta.for_record(*lk.left) is not meta.for_record(*lk.right)


def test_confidences(clean_meta):
    for m in clean_meta:
        assert 0.0 <= m.min_confidence <= 1.0
        for lk in m.links:
            if lk.method is LinkMethod.DETERMINISTIC:
                assert lk.confidence == 1.0


# -- persistence and anonymity ------------------------------------------------------------------

def test_meta_csv_round_trip(tmp_path, clean_meta):
    path = tmp_path / "meta.csv"
    clean_meta.write_csv(path)
    back = MetaRecordSet.read_csv(path)
    assert [(m.meta_id, dict(m.identifiers)) for m in back] == [
        (m.meta_id, dict(m.identifiers)) for m in clean_meta
    ]
    assert [round(m.min_confidence, 4) for m in back] == [round(m.min_confidence, 4) for m in clean_meta]


def test_meta_file_holds_no_pii(tmp_path, noisy_bundle):
    meta = build_meta_records(noisy_bundle.datasets)
    path = tmp_path / "meta.csv"
    meta.write_csv(path)
    cells = {c for line in path.read_text().splitlines() for c in line.split(",")}
    for store in noisy_bundle.pii_stores.values():
        for rec in store.entries.values():
            for value in (rec.name, rec.dob.isoformat() if rec.dob else None, rec.address):
                if value:
                    assert value not in cells


def test_duplicate_identifier_across_meta_records():
    a = PatientMetaRecord("PMR1", {IdentifierKind.IHI: "5"})
    b = PatientMetaRecord("PMR2", {IdentifierKind.IHI: "5"})
    with pytest.raises(IdentifierConflict):
        MetaRecordSet((a, b))


# -- evaluation -------------------------------------------------------------------------------

def test_empty_meta_convention(clean_bundle):
    q = evaluate_linkage(MetaRecordSet(()), clean_bundle.truth)
    assert q.precision == 1.0 and q.recall == 0.0


def test_unknown_identifier(clean_bundle):
    m = PatientMetaRecord("PMR9", {IdentifierKind.CDM_ID: "not-a-real-id"})
    with pytest.raises(UnknownIdentifier):
        evaluate_linkage(MetaRecordSet((m,)), clean_bundle.truth)


def test_wrong_merge_lowers_precision(clean_bundle):
    t1, t2 = [t for t in clean_bundle.truth if t.cdm_id and t.pcrs_id][:2]
    wrong = PatientMetaRecord("PMR1", {IdentifierKind.CDM_ID: t1.cdm_id, IdentifierKind.PCRS_ID: t2.pcrs_id})
    q = evaluate_linkage(MetaRecordSet((wrong,)), clean_bundle.truth)
    assert q.precision == 0.0 and q.predicted_pairs == 1


def test_system_id_kind_covers_all_systems():
    assert set(SYSTEM_ID_KIND) == set(SYSTEMS)
