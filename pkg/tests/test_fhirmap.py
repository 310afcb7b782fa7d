import json

import pytest

from fedlink.errors import ArityViolation, CombinerMissing, LookupMiss, SpecSyntax, UnknownColumn
from fedlink.fhirmap import (
    COMBINERS,
    MappingEntry,
    MappingType,
    ResourceGraph,
    ResourceKind,
    applied_entries,
    apply_mapping,
    is_unresolved,
    map_dataset,
    parse_mapping_spec,
    shipped_spec,
)
from fedlink.ingest import SourceDataset
from fedlink.linkage import MetaRecordSet, link_deterministic
from fedlink.model import SYSTEMS, System, default_descriptor, shipped_path
from fedlink.synthgen import SAMPLE_MRN


def _spec_doc(system=System.HIPE):
    return json.loads(shipped_path("mappings", f"{system.stem}.map").read_text())


def _write(tmp_path, doc):
    path = tmp_path / "x.map"
    path.write_text(json.dumps(doc))
    return path


@pytest.mark.parametrize("system", SYSTEMS)
def test_shipped_specs_parse_and_cover_columns(system):
    spec = shipped_spec(system)
    spec.validate_against(default_descriptor(system))
    assert spec.system is system


def test_hipe_spec_uses_all_four_types():
    assert shipped_spec(System.HIPE).types_used() == set(MappingType)


def test_shipped_specs_together_use_all_types():
    used = set().union(*(shipped_spec(s).types_used() for s in SYSTEMS))
    assert used == set(MappingType)


def test_indirect_without_default(tmp_path):
    doc = _spec_doc()
    doc["entries"].append({"mapping_type": "INDIRECT", "source_attrs": [], "resource_kind": "ENCOUNTER",
                           "target_path": "class"})
    with pytest.raises(ArityViolation):
        parse_mapping_spec(_write(tmp_path, doc))


def test_many_to_one_with_one_attr(tmp_path):
    doc = _spec_doc()
    doc["entries"].append({"mapping_type": "MANY_TO_ONE", "source_attrs": ["sex"], "resource_kind": "PATIENT",
                           "target_path": "extra", "combiner": "concat_with_space"})
    with pytest.raises(ArityViolation):
        parse_mapping_spec(_write(tmp_path, doc))


def test_lookup_must_target_reference():
    with pytest.raises(ArityViolation):
        MappingEntry(MappingType.LOOKUP, ("mrn",), ResourceKind.PATIENT, "gender")


def test_one_to_one_arity():
    with pytest.raises(ArityViolation):
        MappingEntry(MappingType.ONE_TO_ONE, ("a", "b"), ResourceKind.PATIENT, "x")


def test_unknown_combiner(tmp_path):
    doc = _spec_doc()
    doc["entries"].append({"mapping_type": "MANY_TO_ONE", "source_attrs": ["sex", "age"],
                           "resource_kind": "PATIENT", "target_path": "extra", "combiner": "eval"})
    with pytest.raises(CombinerMissing):
        parse_mapping_spec(_write(tmp_path, doc))


def test_unknown_column(tmp_path):
    doc = _spec_doc()
    doc["entries"].append({"mapping_type": "ONE_TO_ONE", "source_attrs": ["shoe_size"],
                           "resource_kind": "PATIENT", "target_path": "shoe"})
    with pytest.raises(UnknownColumn):
        parse_mapping_spec(_write(tmp_path, doc))


def test_unknown_resource_kind(tmp_path):
    doc = _spec_doc()
    doc["entries"][0]["resource_kind"] = "INVOICE"
    with pytest.raises(SpecSyntax):
        parse_mapping_spec(_write(tmp_path, doc))


def test_uncovered_column(tmp_path):
    doc = _spec_doc()
    doc["entries"] = [e for e in doc["entries"] if "sex" not in e.get("source_attrs", [])]
    doc["unmapped"] = [c for c in doc.get("unmapped", []) if c != "sex"]
    with pytest.raises(SpecSyntax):
        parse_mapping_spec(_write(tmp_path, doc))


def test_duplicate_target(tmp_path):
    doc = _spec_doc()
    doc["entries"].append(dict(doc["entries"][1]))
    with pytest.raises(SpecSyntax):
        parse_mapping_spec(_write(tmp_path, doc))


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.map"
    path.write_text("{not json")
    with pytest.raises(SpecSyntax):
        parse_mapping_spec(path)


def test_combiners():
    assert COMBINERS["concat_with_space"](["Anne", None, "Byrne"]) == "Anne Byrne"
    assert COMBINERS["code_plus_display"](["H36.0", "Diabetic", "retinopathy"]) == {
        "code": "H36.0", "display": "Diabetic retinopathy"}
    assert COMBINERS["full_address"](["1 Main St", "F52"]).startswith("1 Main St, F52")


def test_sample_mrn_row(clean_bundle, clean_meta):
    hipe = clean_bundle[System.HIPE]
    spec = shipped_spec(System.HIPE)
    person = clean_meta.for_record(System.HIPE, SAMPLE_MRN)
    for record in hipe.records_for(SAMPLE_MRN):
        nodes = apply_mapping(record, spec, clean_meta)
        kinds = {n.kind for n in nodes}
        assert {ResourceKind.ENCOUNTER, ResourceKind.CONDITION} <= kinds
        patient = next(n for n in nodes if n.kind is ResourceKind.PATIENT)
        assert person.meta_id in patient.references.values()
        for n in nodes:
            if n.kind is not ResourceKind.PATIENT:
                assert n.references["patient"] == patient.resource_id
                assert n.resource_id.startswith(f"{spec.namespace}/{n.kind.value}/{SAMPLE_MRN}_")


def test_missing_identifier_gives_marker(clean_bundle):
    record = next(clean_bundle[System.CDM].records())
    nodes = apply_mapping(record, shipped_spec(System.CDM), MetaRecordSet(()))
    refs = [r for n in nodes for r in n.references.values()]
    assert any(is_unresolved(r) for r in refs)
    with pytest.raises(LookupMiss):
        apply_mapping(record, shipped_spec(System.CDM), MetaRecordSet(()), strict=True)


def test_indirect_default_on_every_encounter(clean_bundle, clean_meta):
    graph, _ = map_dataset(clean_bundle[System.HIPE], shipped_spec(System.HIPE), clean_meta)
    encounters = graph.of_kind(ResourceKind.ENCOUNTER)
    assert encounters and all(n.attributes["status"] == "finished" for n in encounters)


def test_apply_mapping_deterministic(clean_bundle, clean_meta):
    spec = shipped_spec(System.PCRS)
    record = next(clean_bundle[System.PCRS].records())
    assert apply_mapping(record, spec, clean_meta) == apply_mapping(record, spec, clean_meta)


@pytest.mark.parametrize("system", SYSTEMS)
def test_coverage_counts(clean_bundle, clean_meta, system):
    """Applied entries are those with non-null sources (plus INDIRECT) on nodes the record produces."""
    spec = shipped_spec(system)
    for record in list(clean_bundle[system].records())[:200]:
        nodes = apply_mapping(record, spec, clean_meta)
        produced = {n.kind for n in nodes}
        applied = applied_entries(record, spec)
        expected = [e for e in spec.entries
                    if e.resource_kind in produced
                    and (e.mapping_type is MappingType.INDIRECT
                         or all(record[a] is not None for a in e.source_attrs))]
        assert applied == expected
        written = sum(len(n.attributes) + len(n.references) - (n.kind is not ResourceKind.PATIENT)
                      for n in nodes)
        assert written == len(applied)


@pytest.mark.parametrize("system", SYSTEMS)
def test_clean_run_resolves_every_lookup(clean_bundle, clean_meta, system):
    ds = clean_bundle[system]
    graph, report = map_dataset(ds, shipped_spec(system), clean_meta)
    assert report.rows == report.rows_mapped == len(ds)
    assert report.lookup_misses == 0 and report.lookups > 0
    for node in graph:
        for ref in node.references.values():
            assert ref in clean_meta or ref in graph.nodes


def test_empty_dataset():
    ds = SourceDataset(default_descriptor(System.CDM), ())
    graph, report = map_dataset(ds, shipped_spec(System.CDM), MetaRecordSet(()))
    assert len(graph) == 0
    d = report.to_dict()
    assert d["rows"] == d["rows_mapped"] == d["lookups"] == 0
    assert set(d["by_type"].values()) == {0}


def test_deterministic_only_miss_rate(clean_bundle):
    """With singleton clusters dropped, a patient's primary LOOKUP misses exactly when no shared
    identifier linked the record, so the per-patient miss rate is the unlinked fraction."""
    linked = link_deterministic(clean_bundle.datasets).linked_only()
    for system in SYSTEMS:
        ds = clean_bundle[system]
        spec = shipped_spec(system)
        (primary,) = [e for e in spec.entries if e.mapping_type is MappingType.LOOKUP
                      and e.resource_kind is ResourceKind.PATIENT
                      and e.source_attrs[0] == ds.descriptor.primary_column]
        graph, report = map_dataset(ds, spec, linked)
        patients = graph.of_kind(ResourceKind.PATIENT)
        missed = {n.resource_id.rsplit("/", 1)[1] for n in patients
                  if is_unresolved(n.references[primary.target_path])}
        unlinked = {i for i in ds.ids if linked.for_record(system, i) is None}
        assert missed == unlinked
        assert len(missed) / len(patients) == pytest.approx(len(unlinked) / len(ds.ids))
        assert 0 < report.lookup_miss_rate < 1


def test_ndres_round_trip(tmp_path, clean_bundle, clean_meta):
    graph, _ = map_dataset(clean_bundle[System.RETINA_SCREEN], shipped_spec(System.RETINA_SCREEN), clean_meta)
    path = tmp_path / "rs.ndres"
    graph.write_ndres(path)
    back = ResourceGraph.read_ndres(path)
    assert list(back.nodes) == list(graph.nodes)
    assert len(path.read_text().splitlines()) == len(graph)
    graph.write_ndres(tmp_path / "again.ndres")
    assert (tmp_path / "again.ndres").read_bytes() == path.read_bytes()


def test_spec_for_other_system_rejected(clean_bundle, clean_meta):
    with pytest.raises(SpecSyntax):
        map_dataset(clean_bundle[System.CDM], shipped_spec(System.PCRS), clean_meta)
