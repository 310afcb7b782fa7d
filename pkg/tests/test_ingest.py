import csv

import pytest

from fedlink.errors import CellTypeError, DuplicateIdentifier, SchemaMismatch, UnknownColumn
from fedlink.ingest import SourceDataset, load_directory, load_source, scan
from fedlink.model import SYSTEMS, FieldClass, System, default_descriptor, shipped_path
from fedlink.synthgen import SAMPLE_MRN


def _schema(system):
    return shipped_path("schemas", f"{system.stem}.schema")


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def loaded(clean_dir):
    return load_directory(clean_dir)


@pytest.mark.parametrize("system", SYSTEMS)
def test_row_count_matches_file(loaded, clean_dir, system):
    lines = _rows(clean_dir / f"{system.stem}.csv")
    assert len(loaded[system]) == len(lines) - 1
    assert loaded[system].pii is not None


def test_load_source_with_sidecar(clean_dir, clean_bundle):
    ds = load_source(_schema(System.HIPE), clean_dir / "hipe.csv", clean_dir / "hipe_pii.csv")
    assert ds.rows == clean_bundle[System.HIPE].rows
    assert set(ds.pii.entries) <= set(ds.ids)


def test_empty_headered_file(tmp_path):
    d = default_descriptor(System.CDM)
    path = tmp_path / "cdm.csv"
    path.write_text(",".join(d.column_names) + "\n")
    ds = load_source(_schema(System.CDM), path)
    assert len(ds) == 0 and ds.pii is None


def test_header_missing_column(tmp_path):
    d = default_descriptor(System.CDM)
    path = tmp_path / "cdm.csv"
    path.write_text(",".join(c for c in d.column_names if c != "ihi") + "\n")
    with pytest.raises(SchemaMismatch):
        load_source(_schema(System.CDM), path)


def test_bad_cell_reports_coordinates(tmp_path, clean_dir):
    rows = _rows(clean_dir / "cdm.csv")
    age = rows[0].index("age")
    rows[3][age] = "forty"
    path = tmp_path / "cdm.csv"
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    with pytest.raises(CellTypeError) as info:
        load_source(_schema(System.CDM), path)
    assert info.value.row == 3 and info.value.column == "age"
    assert isinstance(info.value, TypeError)


def test_short_row_rejected(tmp_path, clean_dir):
    rows = _rows(clean_dir / "pcrs.csv")
    rows[2] = rows[2][:-1]
    path = tmp_path / "pcrs.csv"
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    with pytest.raises(SchemaMismatch):
        load_source(_schema(System.PCRS), path)


def test_duplicate_identifier(tmp_path, clean_dir):
    rows = _rows(clean_dir / "retina_screen.csv")
    rows.append(rows[1])
    path = tmp_path / "rs.csv"
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    with pytest.raises(DuplicateIdentifier):
        load_source(_schema(System.RETINA_SCREEN), path)


def test_hipe_allows_repeat_mrn(loaded):
    hipe = loaded[System.HIPE]
    assert any(len(rows) > 1 for rows in hipe.by_id.values())
    keys = [(r["mrn"], r["admission_date"]) for r in hipe.records()]
    assert len(keys) == len(set(keys))


def test_stray_pii_entry_rejected(tmp_path, clean_dir):
    rows = _rows(clean_dir / "cdm_pii.csv")
    rows.append(["999999999"] + rows[1][1:])
    path = tmp_path / "cdm_pii.csv"
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    with pytest.raises(SchemaMismatch):
        load_source(_schema(System.CDM), clean_dir / "cdm.csv", path)


def test_scan_empty_predicate_returns_everything(loaded):
    for system in SYSTEMS:
        ds = loaded[system]
        got = scan(ds)
        assert len(got) == len(ds)
        assert [r[ds.descriptor.primary_column] for r in got] == [ds.key(r) for r in ds.rows]


def test_scan_rs_type_1(loaded):
    rs = loaded[System.RETINA_SCREEN]
    expected = [r for r in rs.records() if r["diabetes_type"] == "1"]
    got = scan(rs, {"diabetes_type": "1"})
    assert len(got) == len(expected) > 0
    assert all(r["diabetes_type"] == "1" for r in got)


def test_scan_sample_mrn(loaded):
    got = scan(loaded[System.HIPE], {"mrn": SAMPLE_MRN})
    assert got and all(r["mrn"] == SAMPLE_MRN for r in got)


def test_scan_no_match(loaded):
    assert scan(loaded[System.PCRS], {"scheme": "NO_SUCH"}) == []


def test_scan_unknown_column(loaded):
    with pytest.raises(UnknownColumn):
        scan(loaded[System.PCRS], {"nope": 1})


def test_scan_never_returns_pii_columns(loaded):
    for system in SYSTEMS:
        ds = loaded[system]
        pii_cols = {c.name for c in ds.descriptor.columns if c.field_class is FieldClass.PII}
        for row in scan(ds)[:50]:
            assert not pii_cols & set(row)


def test_no_mutating_interface():
    public = {n for n in dir(SourceDataset) if not n.startswith("_")}
    assert not {n for n in public if n.startswith(("set", "add", "remove", "update", "append", "delete"))}
    assert SourceDataset.__dataclass_params__.frozen
