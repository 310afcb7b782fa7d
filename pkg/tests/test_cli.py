import io
import shlex
import shutil
from pathlib import Path

import pytest

from fedlink import dispatch as dsp
from fedlink.cli import hoist_globals, main, parse_script, run_interactive
from fedlink.errors import ScriptSyntax
from sample_calls import SAMPLE_PARAMS

GOLDEN = Path(__file__).parent / "golden" / "repl_session.txt"
REPL_INPUT = "0\n1\n10164260\n16\nF,F93\nq\n"


def cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert cli("--data-dir", d, "synth", "--seed", 7, "--population", 600) == 0
    assert cli("--data-dir", d, "link") == 0
    return d


def test_pipeline(pipeline_dir, capsys):
    assert (pipeline_dir / "meta_records.csv").exists()
    assert (pipeline_dir / "meta_records.review.csv").exists()
    assert cli("--data-dir", pipeline_dir, "load") == 0
    assert "CDM\t" in capsys.readouterr().out
    assert cli("--data-dir", pipeline_dir, "link-eval") == 0
    assert "precision" in capsys.readouterr().out
    assert cli("--data-dir", pipeline_dir, "map") == 0
    assert len(list((pipeline_dir / "fhir").glob("*.ndres"))) == 4


def test_synth_rerun_identical(tmp_path):
    for name in ("a", "b"):
        assert cli("synth", "--seed", 3, "--population", 300, "--out", tmp_path / name) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_query_prints_and_exports(clean_dir, tmp_path, capsys):
    assert cli("--data-dir", clean_dir, "query", "--type", "F2_eir", "--params", "F52") == 0
    assert capsys.readouterr().out.startswith("sex | age")  # analyst: identifiers redacted
    out = tmp_path / "f2.csv"
    assert cli("--data-dir", clean_dir, "query", "--type", "F2_eir", "--params", "F52", "--out", out) == 0
    meta, cols, rows = dsp.read_result_csv(out)
    assert meta["condition_type"] == "F2_eir" and rows


def test_query_unknown_type_notice(clean_dir, capsys):
    assert cli("--data-dir", clean_dir, "query", "--type", "F99_nothing") == 1
    assert "NOTICE: Check selected function" in capsys.readouterr().out


@pytest.mark.parametrize("args,code", [
    (["--role", "policymaker", "query", "--type", "F1_mrn", "--params", "10164260"], 1),
    (["query", "--type", "F1_mrn", "--params", "10164260"], 1),  # analyst
    (["query", "--type", "F3_eir_age_data", "--params", "F52,D01,T12,K45"], 1),
    (["--role", "janitor", "load"], 1),
    (["query"], 1),
    (["map", "--system", "XX"], 1),
    (["asset", "delete", "asset99"], 1),
])
def test_user_error_exit_codes(clean_dir, tmp_path, args, code):
    assert cli("--data-dir", clean_dir, *args) == code


def test_missing_data_exit_2(tmp_path):
    assert cli("--data-dir", tmp_path / "nowhere", "load") == 2


def test_globals_after_subcommand(clean_dir, capsys):
    assert hoist_globals(["query", "--role", "clinician", "--type", "F2_eir"]) == [
        "--role", "clinician", "query", "--type", "F2_eir"]
    assert cli("query", "--type", "F1_mrn", "--params", "10164260", "--data-dir", clean_dir,
               "--role", "clinician") == 0
    assert "Anne" in capsys.readouterr().out


def _write_script(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


def test_batch_all_types(clean_dir, tmp_path, capsys):
    lines = ["# every function once"] + [
        f"{name} {shlex.quote(params)} out/{name}.csv" for name, params in SAMPLE_PARAMS]
    script = _write_script(tmp_path / "all.batch", lines)
    assert cli("--data-dir", clean_dir, "--role", "clinician", "batch", script) == 0
    assert len(list((tmp_path / "out").glob("*.csv"))) == 18
    assert capsys.readouterr().out.count(": ok ") == 18


def test_batch_empty_script(clean_dir, tmp_path):
    script = _write_script(tmp_path / "empty.batch", ["# nothing here", ""])
    assert cli("--data-dir", clean_dir, "batch", script) == 0


def test_batch_unknown_type(clean_dir, tmp_path, capsys):
    script = _write_script(tmp_path / "bad.batch", ["F2_eir F52 a.csv", "F42_nope x b.csv"])
    assert cli("--data-dir", clean_dir, "batch", script) != 0
    out = capsys.readouterr().out
    assert "line 2: NOTICE" in out and "line 1: ok" in out
    assert (tmp_path / "a.csv").exists() and not (tmp_path / "b.csv").exists()


def test_batch_syntax_error(clean_dir, tmp_path, capsys):
    script = _write_script(tmp_path / "syn.batch", ["F2_eir F52 a.csv", "", "F2_eir 'F52 b.csv"])
    assert cli("--data-dir", clean_dir, "batch", script) == 1
    assert "line 3" in capsys.readouterr().err
    with pytest.raises(ScriptSyntax, match="line 1"):
        parse_script("F2_eir F52")


def test_repl_golden(clean_fed, roles):
    out = io.StringIO()
    assert run_interactive(clean_fed, roles["clinician"], io.StringIO(REPL_INPUT), out) == 0
    assert out.getvalue() == GOLDEN.read_text()


def test_repl_reports_user_errors(clean_fed, roles):
    out = io.StringIO()
    run_interactive(clean_fed, roles["analyst"], io.StringIO("1\n10164260\n5\nF52,D01,T12,K45\n"), out)
    errors = [l for l in out.getvalue().splitlines() if l.startswith("ERROR:")]
    assert len(errors) == 2


def test_repl_export_matches_batch(clean_fed, clean_dir, roles, tmp_path):
    run_interactive(clean_fed, roles["clinician"], io.StringIO(REPL_INPUT), io.StringIO(), export_dir=tmp_path / "i")
    script = _write_script(tmp_path / "s.batch", ["F1_mrn 10164260 b/F1_mrn.csv", "F11_gender_eir F,F93 b/F11_gender_eir.csv"])
    assert cli("--data-dir", clean_dir, "--role", "clinician", "batch", script) == 0
    for name in ("F1_mrn", "F11_gender_eir"):
        assert (tmp_path / "i" / f"{name}.csv").read_bytes() == (tmp_path / "b" / f"{name}.csv").read_bytes()


def test_asset_commands(clean_dir, tmp_path, capsys):
    work = tmp_path / "data"
    shutil.copytree(clean_dir, work)
    d = ["--data-dir", work]
    assert cli(*d, "asset", "list") == 0
    assert len(capsys.readouterr().out.splitlines()) == 14
    assert cli(*d, "asset", "define", "--id", "mine", "--type", "F2_eir", "--params", "F52") == 0
    assert cli(*d, "asset", "define", "--id", "mine", "--type", "F2_eir", "--params", "F52") == 1
    assert cli(*d, "asset", "materialize", "mine", "asset02") == 0
    assert (work / "assets" / "mine.csv").exists()
    assert cli(*d, "load") == 0
    assert "stale\tmine" in capsys.readouterr().out
    assert cli(*d, "asset", "delete", "mine") == 0
    assert not (work / "assets" / "mine.csv").exists()
