import json
import subprocess
import sys

import jsonschema
import pytest

from xapp_cms.cli import main
from xapp_cms.harness import fixtures_dir
from xapp_cms.schemas import SCHEMAS

FIX = fixtures_dir()


def call(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_casestudy_a(capsys):
    code, out, _ = call(capsys, "casestudy", "A", "--method", "qacm")
    assert code == 0
    assert "p2" in out and "QACM" in out
    assert "x1" in out and "x2" in out


def test_unknown_subcommand(capsys):
    code, _, err = call(capsys, "frobnicate")
    assert code == 2
    assert "usage" in err


def test_missing_subcommand(capsys):
    assert call(capsys)[0] == 2


def test_help(capsys):
    code, out, _ = call(capsys, "--help")
    assert code == 0
    for sub in ("generate", "validate", "normalize", "fit", "detect", "mitigate", "run",
                "casestudy", "report"):
        assert sub in out


@pytest.fixture()
def curve_files(tmp_path, capsys):
    assert call(capsys, "generate", "--builtin", "-o", tmp_path)[0] == 0
    paths = []
    for x in ("x1", "x2"):
        out = tmp_path / f"{x}.curve"
        code, _, err = call(capsys, "normalize", tmp_path / f"{x}_p2.csv", "-o", out)
        assert code == 0, err
        paths.append(out)
    return paths


def test_generate_single(tmp_path, capsys):
    out = tmp_path / "x3.csv"
    code, _, _ = call(capsys, "generate", "--xapp", "x3", "--swept", "p1", "--min", -60,
                      "--max", 60, "--fixed", "p4=25", "-o", out)
    assert code == 0
    assert len(out.read_text().splitlines()) == 4 + 121
    code, out_text, _ = call(capsys, "validate", out)
    assert code == 0 and "rows=121" in out_text


def test_generate_noise_is_seeded(tmp_path, capsys):
    args = ["generate", "--xapp", "x1", "--swept", "p1", "--min", 0, "--max", 5,
            "--fixed", "p2=30", "--noise", 0.5, "--seed", 3]
    a = call(capsys, *args)[1]
    b = call(capsys, *args)[1]
    clean = call(capsys, *args[:-4])[1]
    assert a == b and a != clean


def test_generate_bad_fixed(capsys):
    assert call(capsys, "generate", "--xapp", "x1", "--swept", "p1", "--fixed", "p2")[0] == 2


def test_validate_reports_schema_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("# xapp: x1\n# swept_param: p1\n# kpis: k1\np1,p2\n1,2\n2,2\n")
    code, _, err = call(capsys, "validate", bad)
    assert code == 1
    assert "SchemaError" in err and "k1" in err and "[dataset]" in err


def test_mitigate_text_and_json(curve_files, capsys):
    code, out, _ = call(capsys, "mitigate", *curve_files, "--method", "qacm")
    assert code == 0 and "p2 = " in out
    code, out, _ = call(capsys, "mitigate", *curve_files, "--method", "eg", "--weights", "7,3",
                        "--json")
    assert code == 0
    record = json.loads(out)
    jsonschema.validate(record, SCHEMAS["mitigation"])
    assert record["method"] == "eg"


def test_mitigate_heuristic_matches_exact(curve_files, capsys):
    a = json.loads(call(capsys, "mitigate", *curve_files, "--json")[1])
    b = json.loads(call(capsys, "mitigate", *curve_files, "--method", "qacm-heuristic",
                        "--json")[1])
    assert (a["p_opt"], a["objective"]) == (b["p_opt"], b["objective"])


def test_mitigate_zero_weights(curve_files, capsys):
    code, _, err = call(capsys, "mitigate", *curve_files, "--weights", "0,0")
    assert code == 1
    assert "WeightError" in err


def test_mitigate_negative_weights_is_usage_error(curve_files, capsys):
    assert call(capsys, "mitigate", *curve_files, "--weights=-1,2")[0] == 2


def test_fit_report(capsys):
    code, out, _ = call(capsys, "fit", "--builtin", "--json")
    assert code == 0
    rows = json.loads(out)
    jsonschema.validate(rows, SCHEMAS["fit"])
    assert {r["split"] for r in rows} == {"full", "holdout"}
    code, out, _ = call(capsys, "fit", "--builtin")
    assert "EVS" in out and "holdout" in out


def test_detect_lists_cases(capsys):
    code, out, _ = call(capsys, "detect", FIX / "case_D.json")
    assert code == 0
    assert "direct conflict over p1" in out
    assert "implicit conflict over p1: x1, x2, x3, x5" in out


def test_detect_continues_from_stores(tmp_path, capsys):
    stores = tmp_path / "stores.json"
    call(capsys, "detect", FIX / "case_D.json", "--stores-out", stores)
    code, out, _ = call(capsys, "detect", FIX / "case_D.json", "--stores", stores)
    assert code == 0
    assert "indirect conflict over p1" in out and "implicit" not in out


def test_run_output_validates(tmp_path, capsys):
    out = tmp_path / "log.jsonl"
    code, text, _ = call(capsys, "run", FIX / "case_C.json", "-o", out, "--summary")
    assert code == 0 and "indirect" in text
    lines = out.read_text().splitlines()
    assert lines
    for line in lines:
        jsonschema.validate(json.loads(line), SCHEMAS["runlog"])


def test_run_oracle_flags_are_exclusive(tmp_path, capsys):
    code = call(capsys, "run", FIX / "case_A.json", "--analytic", "--tables", "a.csv")[0]
    assert code == 2


def test_run_with_table_oracle(tmp_path, capsys):
    call(capsys, "generate", "--builtin", "-o", tmp_path)
    code, out, _ = call(capsys, "run", FIX / "case_A.json", "--tables",
                        tmp_path / "x1_p2.csv", tmp_path / "x2_p2.csv")
    assert code == 0
    assert any(json.loads(line)["type"] == "mitigation" for line in out.splitlines())


def test_casestudy_json_validates(capsys):
    for case in "ABCD":
        code, out, _ = call(capsys, "casestudy", case, "--json")
        assert code == 0
        jsonschema.validate(json.loads(out), SCHEMAS["casestudy"])


def test_casestudy_missing_fixture(tmp_path, capsys):
    code, _, err = call(capsys, "--fixtures", tmp_path, "casestudy", "A")
    assert code == 1 and "FixtureMissing" in err


def test_report_plot_data(tmp_path, capsys):
    code, out, _ = call(capsys, "report", "--plot-data", tmp_path / "plots")
    assert code == 0
    files = sorted(p.name for p in (tmp_path / "plots").iterdir())
    assert files == ["case_A.csv", "case_B.csv", "case_C.csv", "case_D.csv"]
    assert "case D" in out


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "xapp_cms", "casestudy", "B"],
                              capture_output=True, text=True)
    assert proc.returncode == 0
    assert "QACMP" in proc.stdout
