import csv
import io
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from dexobf.cli import main
from dexobf.model import app_to_dict, dumps, load_report, report_to_dict
from dexobf.synthetic import generate_corpus

from corpus_fixture import make_report
from grading_cases import SAMPLE_GRADLE, NO_FILES_GRADLE, SKELETON_APP

FIXTURES = Path(__file__).parent / "fixtures"
RUBRIC = {
    "must_keep": [{"class": "com.task.OpenClass", "member": "doStuff()"}],
    "must_obfuscate": [{"class": "com.task.SecretClass", "member": "doSecretStuff()"}],
}


def run(*argv):
    return main([str(a) for a in argv])


# -- scan

def test_scan_apk_writes_report(tmp_path, capsys):
    assert run("scan", FIXTURES / "hello.apk", "--main-package", "com.dev.app", "--out", tmp_path, "--workers", 1) == 0
    doc = json.loads((tmp_path / "hello.json").read_text())
    assert doc["app_id"] == "hello"
    assert doc["tool_markers"]["dexprotector_detected"] is False
    assert doc["main_package"]["debug_info_removed"] is False
    assert "hello.apk" in capsys.readouterr().out


def test_scan_stripped_apk(tmp_path):
    assert run("scan", FIXTURES / "hello-stripped.apk", "--main-package", "com.dev.app", "--out", tmp_path, "--workers", 1) == 0
    doc = json.loads((tmp_path / "hello-stripped.json").read_text())
    assert doc["main_package"]["debug_info_removed"] and doc["main_package"]["source_files_removed"]


def test_scan_json_model_matches_binary(tmp_path):
    models = tmp_path / "models"
    assert run("scan", FIXTURES / "hello.apk", "--main-package", "com.dev.app", "--save-model", models,
               "--out", tmp_path / "a", "--workers", 1) == 0
    assert run("scan", models / "hello.json", "--out", tmp_path / "b", "--workers", 1) == 0
    a = load_report((tmp_path / "a" / "hello.json").read_bytes())
    b = load_report((tmp_path / "b" / "hello.json").read_bytes())
    assert a == b


def test_scan_markers(tmp_path):
    assert run("scan", FIXTURES / "protected.dex", "--out", tmp_path, "--workers", 1) == 0
    markers = json.loads((tmp_path / "protected.json").read_text())["tool_markers"]
    assert markers["dexprotector_detected"] and markers["bangcle_detected"]


def test_scan_stdout_and_determinism(capsys):
    assert run("scan", FIXTURES / "hello.apk", "--workers", 1) == 0
    first = capsys.readouterr().out
    assert run("scan", FIXTURES / "hello.apk", "--workers", 1) == 0
    assert capsys.readouterr().out == first


def test_scan_workers_agree(tmp_path):
    paths = [FIXTURES / n for n in ("hello.apk", "hello-stripped.apk", "hello.dex", "protected.dex")]
    assert run("scan", *paths, "--out", tmp_path / "one", "--workers", 1) == 0
    assert run("scan", *paths, "--out", tmp_path / "many", "--workers", 3) == 0
    for f in (tmp_path / "one").iterdir():
        assert f.read_bytes() == (tmp_path / "many" / f.name).read_bytes()


def test_scan_missing_and_broken_inputs(tmp_path, capsys):
    assert run("scan", tmp_path / "nope.apk", "--workers", 1) == 1
    junk = tmp_path / "junk.dex"
    junk.write_bytes(b"dex\n035\0" + b"\0" * 20)
    assert run("scan", junk, FIXTURES / "hello.dex", "--out", tmp_path / "out", "--workers", 1) == 0
    errors = json.loads((tmp_path / "out" / "errors.json").read_text())
    assert [e["input"] for e in errors] == [str(junk)]
    assert "junk.dex: error:" in capsys.readouterr().err


def test_scan_bad_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"min_scope_size": 3,\n "oops"}')
    assert run("scan", FIXTURES / "hello.dex", "--config", cfg) == 1
    assert "cfg.json:2: malformed JSON" in capsys.readouterr().err
    cfg.write_text('{"match_threshold": 2.0}')
    assert run("scan", FIXTURES / "hello.dex", "--config", cfg) == 1


# -- corpus

def _write_reports(directory: Path, apps):
    directory.mkdir()
    for app_id, packages, main in apps:
        (directory / f"{app_id}.json").write_bytes(dumps(report_to_dict(make_report(app_id, packages, main))))


def test_corpus_eight_app_buckets(tmp_path):
    apps = [(f"h{i}", {"com.h.m": i < 1, "com.google.ads.x": True}, "com.h.m") for i in range(4)]
    apps += [(f"p{i}", {"com.p.m": i < 3}, "com.p.m") for i in range(4)]
    _write_reports(tmp_path / "reports", apps)
    meta = tmp_path / "meta.csv"
    lines = ["app_id,downloads_bucket,account_id,last_update"]
    lines += [f"h{i},100+,acc{i},2016-01-0{i + 1}" for i in range(4)]
    lines += [f"p{i},\"1,000,000+\",big,2016-02-0{i + 1}" for i in range(4)]
    meta.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    assert run("corpus", tmp_path / "reports", meta, "--out", out, "--workers", 3) == 0
    rows = list(csv.DictReader(io.StringIO((out / "downloads.csv").read_text())))
    assert [(r["downloads_bucket"], r["percent"]) for r in rows] == [("100+", "25.00"), ("1M+", "75.00")]
    scopes = json.loads((out / "scope_ranking.json").read_text())
    assert scopes[0] == {"scope": "com.google.ads", "package_count": 4, "unique_apps": 4}
    accounts = json.loads((out / "accounts.json").read_text())
    assert accounts == [
        {"apps_per_account": "1", "percent": 25.0, "unique_accounts": 4},
        {"apps_per_account": "2+", "percent": 75.0, "unique_accounts": 1},
    ]
    assert (out / "trend_main_package.csv").read_text() == "month,percent\n2016-01,25.00\n2016-02,75.00\n"

    again = tmp_path / "again"
    assert run("corpus", tmp_path / "reports", meta, "--out", again, "--workers", 1) == 0
    for f in out.iterdir():
        assert f.read_bytes() == (again / f.name).read_bytes()


def test_corpus_empty_dir(tmp_path):
    (tmp_path / "reports").mkdir()
    meta = tmp_path / "meta.csv"
    meta.write_text("app_id,downloads_bucket,account_id,last_update\n")
    assert run("corpus", tmp_path / "reports", meta, "--out", tmp_path / "out") == 0
    assert (tmp_path / "out" / "downloads.csv").read_text().startswith("downloads_bucket,")
    assert json.loads((tmp_path / "out" / "orphan_bound.json").read_text()) == [{"apps": 0, "percent": None, "total_apps": 0}]


def test_corpus_warnings(tmp_path):
    _write_reports(tmp_path / "reports", [("a", {"m": True}, "m"), ("b", {"m": False}, "m")])
    (tmp_path / "reports" / "broken.json").write_text("{")
    meta = tmp_path / "meta.csv"
    meta.write_text("app_id,downloads_bucket,account_id,last_update\na,10+,x,n/a\nz,many,y,2016-01-01\n")
    assert run("corpus", tmp_path / "reports", meta, "--out", tmp_path / "out") == 0
    warnings = json.loads((tmp_path / "out" / "warnings.json").read_text())
    assert warnings == {"metadata_rows_skipped": 1, "reports": 2, "reports_without_metadata": 1, "unparseable_dates": 1}


def test_corpus_bad_inputs(tmp_path):
    meta = tmp_path / "meta.csv"
    meta.write_text("app_id,bucket\n")
    (tmp_path / "r").mkdir()
    assert run("corpus", tmp_path / "r", meta, "--out", tmp_path / "o") == 1
    assert run("corpus", tmp_path / "missing", meta, "--out", tmp_path / "o") == 1


# -- simulate / eval

def test_simulate_writes_model_and_map(tmp_path):
    model = tmp_path / "app.json"
    model.write_bytes(dumps(app_to_dict(SKELETON_APP)))
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"rename_classes": True, "keep_rules": "-keep class com.task.OpenClass { *; }"}))
    assert run("simulate", model, "--plan", plan, "--out", tmp_path / "sim.json", "--map", tmp_path / "map.json") == 0
    sim = json.loads((tmp_path / "sim.json").read_text())
    names = {c["qualified_name"] for c in sim["classes"]}
    assert "com.task.OpenClass" in names and "com.task.SecretClass" not in names
    assert json.loads((tmp_path / "map.json").read_text())


def test_simulate_bad_plan(tmp_path):
    model = tmp_path / "app.json"
    model.write_bytes(dumps(app_to_dict(SKELETON_APP)))
    plan = tmp_path / "plan.json"
    plan.write_text('{"rename_classes": "yes"}')
    assert run("simulate", model, "--plan", plan) == 1


@pytest.fixture(scope="module")
def models_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    for app in generate_corpus(100, seed=7):
        (d / f"{app.app_id}.json").write_bytes(dumps(app_to_dict(app)))
    return d


def _metrics(path):
    return {r["Feature"]: r for r in csv.DictReader(io.StringIO(path.read_text()))}


def test_eval_full_plan(tmp_path, models_dir):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"rename_classes": True, "rename_methods": True, "rename_fields": True,
                                "overload_aggressively": True, "strip_debug": True, "strip_source": True,
                                "strip_annotations": True}))
    out = tmp_path / "metrics.csv"
    assert run("eval", models_dir, plan, "--out", out, "--manifest", tmp_path / "manifest") == 0
    rows = _metrics(out)
    assert rows["Debug information removed"]["MCC"] == "1.000"
    assert rows["Source files removed"]["MCC"] == "1.000"
    assert all(int(r["FN"]) == 0 for r in rows.values())
    assert sum(int(v) for k, v in rows["Class name obfuscation"].items() if k in "TP TN FP FN".split()) == 200
    assert len(json.loads((tmp_path / "manifest" / "manifest.json").read_text())) == 200
    assert json.loads(out.with_suffix(".json").read_text())[0]["Feature"] == "Class name obfuscation"


def test_eval_all_off_plan(tmp_path, models_dir):
    plan = tmp_path / "plan.json"
    plan.write_text("{}")
    out = tmp_path / "metrics.csv"
    assert run("eval", models_dir, plan, "--out", out) == 0
    assert {r["MCC"] for r in _metrics(out).values()} == {"0.000"}


def test_eval_empty_dir(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text("{}")
    assert run("eval", tmp_path, plan) == 1


# -- grade

def _grade(tmp_path, gradle, rules, *extra):
    (tmp_path / "build.gradle").write_text(gradle)
    (tmp_path / "rules.pro").write_text(rules)
    (tmp_path / "rubric.json").write_text(json.dumps(RUBRIC))
    out = tmp_path / "grade.json"
    code = run("grade", tmp_path / "build.gradle", tmp_path / "rules.pro", tmp_path / "rubric.json", "--out", out, *extra)
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_grade_correct(tmp_path):
    code, doc = _grade(tmp_path, SAMPLE_GRADLE, "-keep class com.task.OpenClass { void doStuff(); }\n")
    assert code == 0 and doc == {"verdict": "correct", "reasons": []}


def test_grade_dontobfuscate(tmp_path, capsys):
    code, doc = _grade(tmp_path, SAMPLE_GRADLE, "-keep class com.task.OpenClass { void doStuff(); }\n-dontobfuscate\n")
    assert code == 0 and doc["reasons"] == ["DONTOBFUSCATE_PRESENT"]
    assert "incorrect: DONTOBFUSCATE_PRESENT" in capsys.readouterr().out


def test_grade_missing_files(tmp_path):
    code, doc = _grade(tmp_path, NO_FILES_GRADLE, "-keep class com.task.OpenClass { void doStuff(); }\n")
    assert doc["reasons"] == ["MISSING_PROGUARD_FILES"]


def test_grade_misspelling_uses_app(tmp_path):
    app = tmp_path / "app.json"
    app.write_bytes(dumps(app_to_dict(SKELETON_APP)))
    code, doc = _grade(tmp_path, SAMPLE_GRADLE, "-keep class com.task.OpenKlass { void doStuff(); }\n", "--app", app)
    assert "CLASS_NAME_MISSPELLED" in doc["reasons"]


def test_grade_parse_error_points_at_line(tmp_path, capsys):
    code, doc = _grade(tmp_path, SAMPLE_GRADLE, "-dontwarn x.**\n-keep class A { void m( ; }\n")
    assert code == 1 and doc is None
    assert "rules.pro:2:" in capsys.readouterr().err


# -- exit codes and entry point

def test_internal_error_exit_code(monkeypatch, tmp_path):
    import dexobf.cli as cli

    def boom(*a, **k):
        raise RuntimeError("bug")

    monkeypatch.setattr(cli, "simulate", boom)
    model = tmp_path / "app.json"
    model.write_bytes(dumps(app_to_dict(SKELETON_APP)))
    assert run("simulate", model) == 2


def test_console_script_runs():
    exe = shutil.which("dexobf")
    cmd = [exe] if exe else [sys.executable, "-m", "dexobf.cli"]
    proc = subprocess.run(cmd + ["scan", str(FIXTURES / "hello.dex"), "--workers", "1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["app_id"] == "hello"
    proc = subprocess.run(cmd + ["grade"], capture_output=True, text=True)
    assert proc.returncode == 2  # argparse usage error
