import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from toothsparse.cli import main, split_subjects
from toothsparse.dictionary import load_dictionary_set


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> correspond -> build-dict on a 20-subject cohort, relative paths."""
    root = tmp_path_factory.mktemp("cli")
    cwd = os.getcwd()
    os.chdir(root)
    try:
        assert main(["synth", "--out", "cohort", "--subjects", "20", "--rank", "4", "--points", "12",
                     "--seed", "7"]) == 0
        assert main(["correspond", "--cohort", "cohort", "--template", "cohort/template", "--out", "corr"]) == 0
        assert main(["build-dict", "--corresponded", "corr", "--out", "d.tds", "--seed", "1"]) == 0
    finally:
        os.chdir(cwd)
    return root


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_split_subjects():
    ids = [f"s{i}" for i in range(10)]
    train, test = split_subjects(ids, None, 0.7, 3)
    assert len(train) == 7 and len(test) == 3
    assert sorted(train + test) == ids
    assert train == sorted(train, key=ids.index)
    assert split_subjects(ids, None, 0.7, 3) == (train, test)
    assert len(split_subjects(ids, 4, 0.7, 3)[0]) == 4


def test_synth_outputs(pipeline):
    meta = json.loads((pipeline / "cohort" / "cohort.json").read_text())
    assert len(meta["subjects"]) == 20
    manifest = json.loads((pipeline / "cohort" / "run_manifest.json").read_text())
    for key in ("version", "config", "inputs", "outputs", "seed", "started_at", "finished_at", "kernel_backend"):
        assert key in manifest
    assert manifest["seed"] == 7
    assert (pipeline / "d.tds.manifest.json").is_file()


def test_predict_reports_adjacent_support(pipeline, tmp_path):
    code = run(["predict", "--model", pipeline / "cohort" / "subjects" / "s0019", "--missing", "17",
                "--dict", pipeline / "d.tds", "--template", pipeline / "cohort" / "template", "--out", tmp_path])
    assert code == 0
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["adjacent_labels"] == [47, 16, 46, 27, 37]
    assert diag["removed_from_model"] == [17]
    assert len((tmp_path / "17.xyz").read_text().splitlines()) == 12
    assert (tmp_path / "template_frame" / "17.xyz").is_file()
    sc = json.loads((tmp_path / "sparse_code.json").read_text())
    assert len(sc["coefficients"]) == len(sc["subject_ids"])


def test_evaluate_single_sweep_rows(pipeline, tmp_path, monkeypatch):
    monkeypatch.chdir(pipeline)
    assert main(["evaluate", "--mode", "single-sweep", "--cohort", "cohort", "--dict", "d.tds",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.reader((tmp_path / "results.csv").open()))
    n_test = len(load_dictionary_set(pipeline / "d.tds").metadata["split"]["test"])
    assert n_test == 5
    assert rows[0] == ["pattern", "tooth", "subject_id", "prediction_error_mm", "shape_error_mm"]
    assert len(rows) - 1 == 28 * n_test
    assert (tmp_path / "summary.txt").read_text().startswith("Single missing tooth")


def test_evaluate_patterns(pipeline, tmp_path):
    pat = tmp_path / "p.txt"
    pat.write_text("12,11\n")
    assert run(["evaluate", "--mode", "patterns", "--patterns", pat, "--cohort", pipeline / "cohort",
                "--dict", pipeline / "d.tds", "--out", tmp_path / "o", "--max-subjects", "2"]) == 0
    rows = list(csv.reader((tmp_path / "o" / "results.csv").open()))
    assert len(rows) == 1 + 2 * 2


def test_reruns_are_byte_identical(pipeline, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["synth", "--out", "cohort", "--subjects", "20", "--rank", "4", "--points", "12", "--seed", "7"]) == 0
    assert main(["correspond", "--cohort", "cohort", "--template", "cohort/template", "--out", "corr"]) == 0
    assert main(["build-dict", "--corresponded", "corr", "--out", "d.tds", "--seed", "1"]) == 0
    for sub in ("cohort", "corr"):
        a = {k: v for k, v in tree_bytes(pipeline / sub).items() if k != "run_manifest.json"}
        b = {k: v for k, v in tree_bytes(tmp_path / sub).items() if k != "run_manifest.json"}
        assert a.keys() == b.keys() and a == b
    assert (pipeline / "d.tds").read_bytes() == (tmp_path / "d.tds").read_bytes()


def _error(capsys):
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert set(rec) >= {"error", "message", "exit_code"}
    return rec


@pytest.mark.parametrize("missing", ["", " , ", "18", "11,x"])
def test_bad_missing_is_usage_error(pipeline, tmp_path, capsys, missing):
    code = run(["predict", "--model", pipeline / "cohort" / "subjects" / "s0000", "--missing", missing,
                "--dict", pipeline / "d.tds", "--template", pipeline / "cohort" / "template", "--out", tmp_path])
    assert code == 1
    assert _error(capsys)["exit_code"] == 1


def test_usage_errors():
    assert main([]) == 1
    assert main(["synth"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["evaluate", "--mode", "patterns", "--cohort", "x", "--dict", "y", "--out", "z"]) == 1


def test_data_errors_exit_2(pipeline, tmp_path, capsys):
    assert run(["build-dict", "--corresponded", tmp_path / "nope", "--out", tmp_path / "d.tds"]) == 2
    assert _error(capsys)["exit_code"] == 2
    bad = tmp_path / "bad.tds"
    blob = bytearray((pipeline / "d.tds").read_bytes())
    blob[-30] ^= 1
    bad.write_bytes(bytes(blob))
    assert run(["predict", "--model", pipeline / "cohort" / "subjects" / "s0000", "--missing", "11",
                "--dict", bad, "--template", pipeline / "cohort" / "template", "--out", tmp_path / "o"]) == 2
    assert "checksum" in _error(capsys)["message"]


def test_strict_infeasible_exits_3(pipeline, tmp_path, capsys):
    code = run(["predict", "--model", pipeline / "cohort" / "subjects" / "s0019", "--missing", "36",
                "--dict", pipeline / "d.tds", "--template", pipeline / "cohort" / "template",
                "--out", tmp_path, "--eps-abs", "0", "--strict"])
    assert code == 3
    assert _error(capsys)["exit_code"] == 3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "toothsparse", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "toothsparse" in out.stdout
