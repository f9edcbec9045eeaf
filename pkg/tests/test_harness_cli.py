from __future__ import annotations

import json
import shutil
import subprocess
import sys

import pytest

from satmem.cli import main
from satmem.harness import (ALL_MODES, Category, RunReport, Verdict, compile_and_run,
                            emit_report, evaluate_predicate, run_corpus)
from satmem.instrument import Mode, PassConfig

OVERFLOW = """extern @print_i64(i64)
func @main() -> i64 {
entry:
  %buf = malloc 24
  %q = ptradd %buf, 40
  store 8, 1, %q
  ret 0
}
"""
REPORT_KEYS = {"program", "mode", "codec", "address_tagging", "status", "exit_code", "stats",
               "fragmentation", "verdict"}


@pytest.fixture
def overflow_file(tmp_path):
    path = tmp_path / "overflow.sir"
    path.write_text(OVERFLOW)
    return path


@pytest.mark.parametrize("mode, code", [("saturate", 0), ("oblivious", 0), ("failstop", 101),
                                        ("off", 139)])
def test_run_exit_codes(overflow_file, mode, code):
    assert main(["run", str(overflow_file), f"--mode={mode}"]) == code


def test_run_report_has_stats(overflow_file, tmp_path):
    out = tmp_path / "r.json"
    assert main(["run", str(overflow_file), "--stats", "--report", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert set(doc) == REPORT_KEYS
    assert doc["stats"]["corrections_overflow"] >= 1
    assert doc["verdict"] == "NotApplicable"
    assert doc["fragmentation"]["per_object"] == [{"requested": 24, "rounded": 32, "ratio": 32 / 24}]


def test_stats_null_without_flag(overflow_file, tmp_path):
    out = tmp_path / "r.json"
    main(["run", str(overflow_file), "--report", str(out)])
    assert json.loads(out.read_text())["stats"] is None


def test_segfault_exit_code(tmp_path):
    path = tmp_path / "wild.sir"
    path.write_text("func @main() -> i64 {\nentry:\n  %p = inttoptr 64\n  store 1, 1, %p\n  ret 0\n}\n")
    assert main(["run", str(path), "--mode", "off"]) == 139


def test_exit_status_is_program_code(tmp_path):
    path = tmp_path / "seven.sir"
    path.write_text("func @main() -> i64 {\nentry:\n  ret 263\n}\n")
    assert main(["run", str(path)]) == 7


def test_check_malformed_file(tmp_path, capsys):
    path = tmp_path / "bad.sir"
    path.write_text("func @main() -> i64 {\nentry:\n  %p = malloc\n}\n")
    assert main(["check", str(path)]) == 2
    assert "syntax-error" in capsys.readouterr().err


def test_check_ok(overflow_file, capsys):
    assert main(["check", str(overflow_file)]) == 0


def test_missing_file_and_bad_flags(tmp_path, overflow_file):
    assert main(["run", str(tmp_path / "nope.sir")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["run", str(overflow_file), "--mode", "sideways"])
    assert info.value.code == 2


def test_unknown_extern_is_usage_error(tmp_path):
    path = tmp_path / "ext.sir"
    path.write_text("extern @system(ptr)\nfunc @main() -> i64 {\nentry:\n  ret 0\n}\n")
    assert main(["run", str(path)]) == 2


def test_unwritable_report(overflow_file, tmp_path):
    target = tmp_path / "missing-dir" / "r.json"
    assert main(["run", str(overflow_file), "--report", str(target)]) == 3


def test_corpus_missing_manifest(tmp_path):
    assert main(["corpus", str(tmp_path)]) == 2


def test_corpus_mismatch_exits_one(tmp_path, corpus_dir):
    shutil.copytree(corpus_dir / "benign", tmp_path / "benign")
    manifest = {"entries": [{"path": "benign/matmul.sir", "category": "Benign",
                             "expect": {"saturate": ["Trapped"]}}]}
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    assert main(["corpus", str(tmp_path), "--mode", "saturate"]) == 1


def test_corpus_report_schema(tmp_path, corpus_dir):
    out = tmp_path / "corpus.json"
    assert main(["corpus", str(corpus_dir), "--report", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert set(doc) == {"entries", "aggregate"}
    assert set(doc["aggregate"]) == {"block_rate", "subobject_succeeded",
                                     "tolerance_completion_rate", "expectation_failures"}
    assert doc["aggregate"]["block_rate"]["saturate"] == 1.0
    assert doc["aggregate"]["block_rate"]["off"] == 0.0
    for entry in doc["entries"]:
        assert set(entry) == REPORT_KEYS | {"category"}
    assert json.loads(json.dumps(doc)) == doc


def test_emit_report_is_canonical():
    outcome = compile_and_run(OVERFLOW, PassConfig())
    text = emit_report(RunReport("overflow", PassConfig(), outcome))
    doc = json.loads(text)
    assert list(doc) == sorted(doc)
    assert emit_report([RunReport("a", PassConfig(), outcome)]).startswith("[")


def test_predicates():
    src = "global @v 8\nextern @puts(ptr)\nglobal @m 3 = [68 69 00]\n" \
          "func @main() -> i64 {\nentry:\n  %g = gaddr @v\n  store 1, 0x41, %g\n" \
          "  %s = gaddr @m\n  callext @puts(%s)\n  ret 0\n}\n"
    outcome = compile_and_run(src, PassConfig(Mode.OFF))
    assert evaluate_predicate({"output_contains": "hi"}, outcome)
    assert evaluate_predicate({"output_contains_hex": "6869"}, outcome)
    assert evaluate_predicate({"global_byte": {"global": "v", "offset": 0, "equals": 0x41}}, outcome)
    assert not evaluate_predicate({"global_byte": {"global": "zz", "equals": 0}}, outcome)
    assert evaluate_predicate({"any": [{"output_contains": "no"}, {"output_contains": "hi"}]}, outcome)
    assert not evaluate_predicate({"all": [{"output_contains": "no"}, {"output_contains": "hi"}]}, outcome)
    with pytest.raises(ValueError):
        evaluate_predicate({"bogus": 1}, outcome)


def test_mode_monotonicity(corpus_dir):
    report = run_corpus(corpus_dir, (Mode.SATURATE, Mode.OFF))
    verdicts: dict[str, dict[Mode, Verdict]] = {}
    for entry, run in report.entries:
        if entry.category.is_attack:
            verdicts.setdefault(entry.name, {})[run.cfg.mode] = run.verdict
    for name, by_mode in verdicts.items():
        if by_mode[Mode.OFF] is Verdict.BLOCKED:
            assert by_mode[Mode.SATURATE] is Verdict.BLOCKED, name


def test_every_entry_runs_under_all_modes(corpus_dir, manifest):
    assert ALL_MODES == tuple(Mode)
    for entry in manifest:
        assert set(entry.expect) == {m.value for m in Mode}, entry.name
        assert entry.category.is_attack == (entry.success is not None), entry.name
        assert entry.category in Category


def test_console_script_runs(overflow_file):
    proc = subprocess.run([sys.executable, "-m", "satmem", "run", str(overflow_file),
                           "--mode", "failstop"], capture_output=True, text=True)
    assert proc.returncode == 101
    assert "trapped (oob-store)" in proc.stderr
