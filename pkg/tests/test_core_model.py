import datetime as dt

import pytest
from hypothesis import given, strategies as st

from fedlink.errors import SchemaMismatch, UnknownColumn
from fedlink.model import (
    ALWAYS_PII,
    RESULT_COLUMNS,
    SYSTEMS,
    Column,
    FieldClass,
    IdentifierKind,
    ResultTable,
    SchemaDescriptor,
    System,
    ValueType,
    classify_field,
    default_descriptor,
    format_value,
    parse_value,
    result_columns,
    valid_identifier,
)


def test_mobile_is_pii_in_retina_screen():
    assert classify_field("mobile", System.RETINA_SCREEN) is FieldClass.PII


def test_shipped_descriptor_classes():
    assert classify_field("diagnosis_code", System.HIPE) is FieldClass.CLINICAL
    assert classify_field("eircode_key", System.CDM) is FieldClass.QUASI_IDENTIFIER


def test_classify_accepts_system_name():
    assert classify_field("eircode_key", "CDM") is FieldClass.QUASI_IDENTIFIER


def test_unknown_column():
    with pytest.raises(UnknownColumn):
        classify_field("no_such_column", System.PCRS)


@pytest.mark.parametrize("system", SYSTEMS)
def test_field_class_totality(system):
    d = default_descriptor(system)
    for c in d.columns:
        assert classify_field(c.name, system) is c.field_class


@pytest.mark.parametrize("system", SYSTEMS)
def test_descriptor_file_round_trip(system, tmp_path):
    d = default_descriptor(system)
    path = tmp_path / f"{system.stem}.schema"
    path.write_text(d.dumps())
    assert SchemaDescriptor.load(path) == d


@pytest.mark.parametrize("system", SYSTEMS)
def test_primary_identifier_non_nullable(system):
    d = default_descriptor(system)
    assert not d.column(d.primary_column).nullable


_names = st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12).filter(
    lambda n: n not in ALWAYS_PII
)
_columns = st.lists(
    st.tuples(_names, st.sampled_from(list(ValueType)), st.sampled_from(list(FieldClass)), st.booleans()),
    min_size=1, max_size=8, unique_by=lambda t: t[0],
)


@given(system=st.sampled_from(SYSTEMS), cols=_columns)
def test_descriptor_round_trip_property(system, cols):
    columns = tuple(Column(n, t, c, nullable) for n, t, c, nullable in cols)
    primary = columns[0].name
    columns = (Column(primary, columns[0].value_type, columns[0].field_class, False),) + columns[1:]
    d = SchemaDescriptor(system, columns, IdentifierKind.MRN, primary)
    assert SchemaDescriptor.from_dict(d.to_dict()) == d


def test_duplicate_column_names_rejected():
    cols = (Column("a", ValueType.STRING, FieldClass.CLINICAL), Column("a", ValueType.INT, FieldClass.CLINICAL))
    with pytest.raises(SchemaMismatch):
        SchemaDescriptor(System.CDM, cols, IdentifierKind.CDM_ID, "a")


def test_nullable_primary_rejected():
    cols = (Column("cdm_id", ValueType.STRING, FieldClass.ADMINISTRATIVE, nullable=True),)
    with pytest.raises(SchemaMismatch):
        SchemaDescriptor(System.CDM, cols, IdentifierKind.CDM_ID, "cdm_id")


def test_name_must_be_pii():
    cols = (
        Column("cdm_id", ValueType.STRING, FieldClass.ADMINISTRATIVE),
        Column("name", ValueType.STRING, FieldClass.CLINICAL),
    )
    with pytest.raises(SchemaMismatch):
        SchemaDescriptor(System.CDM, cols, IdentifierKind.CDM_ID, "cdm_id")


@pytest.mark.parametrize(
    "kind,value,ok",
    [
        (IdentifierKind.EIRCODE_KEY, "F52", True),
        (IdentifierKind.EIRCODE_KEY, "D6W", True),
        (IdentifierKind.EIRCODE_KEY, "52F", False),
        (IdentifierKind.EIRCODE_KEY, "F52X", False),
        (IdentifierKind.MOBILE, "8382643256", True),
        (IdentifierKind.MOBILE, "838264325", True),
        (IdentifierKind.MOBILE, "83826", False),
        (IdentifierKind.MRN, "10164260", True),
        (IdentifierKind.IHI, "", False),
        (IdentifierKind.IHI, "10a43", False),
    ],
)
def test_identifier_syntax(kind, value, ok):
    assert valid_identifier(kind, value) is ok


@given(st.one_of(
    st.tuples(st.just(ValueType.INT), st.integers(-10**6, 10**6)),
    st.tuples(st.just(ValueType.DATE), st.dates(dt.date(1900, 1, 1), dt.date(2100, 1, 1))),
    st.tuples(st.just(ValueType.STRING), st.text(min_size=1).filter(lambda s: s.strip() == s and s)),
))
def test_value_round_trip(pair):
    vt, v = pair
    assert parse_value(vt, format_value(v)) == v


def test_result_table_arity_enforced():
    with pytest.raises(SchemaMismatch):
        ResultTable(result_columns(["sex", "age"]), (("F",),), frozenset({System.CDM}))


def test_result_table_provenance_nonempty():
    with pytest.raises(SchemaMismatch):
        ResultTable(result_columns(["sex"]), (), frozenset())


def test_result_table_defaults():
    t = ResultTable(result_columns(["sex", "age"]), (("F", 50), ("M", None)), frozenset({System.CDM}))
    assert t.name == "result_value"
    assert t.column("age") == [50, None]
    assert list(t.cells()) == ["F", "50", "M", ""]


def test_result_columns_pii_classes():
    for name in ALWAYS_PII:
        assert RESULT_COLUMNS[name].field_class is FieldClass.PII
