import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from cmvlab.cli import (
    EXIT_CONFIG,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_QUASIDEFINITE,
    EXIT_RESIDUAL,
    EXIT_TAU,
    main,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def cli(tmp_path, name, *extra):
    out = tmp_path / "out"
    code = main(["--config", str(CONFIGS / name), "--out", str(out), *extra])
    return code, out


def test_reference_run_passes(tmp_path):
    code, out = cli(tmp_path, "reference.json")
    assert code == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["max_residual"]["value"] < 1e-10
    assert "PASS" in (out / "summary.txt").read_text()


def test_complex_12_run_passes(tmp_path):
    assert cli(tmp_path, "complex_12.json")[0] == EXIT_OK


def test_tight_tolerance_reports_residual_failure(tmp_path):
    code, out = cli(tmp_path, "reference.json", "--tol", "1e-18")
    assert code == EXIT_RESIDUAL
    assert json.loads((out / "report.json").read_text())["failing"]


def test_toeplitz_reduction_run(tmp_path):
    code, out = cli(tmp_path, "reference_toeplitz.json")
    assert code == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["suites"]["toeplitz_dual"]["positivity"]["real"] is True
    assert "positive: False" in (out / "summary.txt").read_text()


@pytest.mark.parametrize("name,extra,expected", [
    ("singular.json", (), EXIT_QUASIDEFINITE),
    ("near_pole.json", (), EXIT_NUMERIC),
    ("degenerate_toeplitz.json", ("--compare", "christoffel_21,christoffel_12"), EXIT_TAU),
    ("reference.json", ("--compare", "direct,christoffel_12"), EXIT_CONFIG),
    ("reference.json", ("--compare", "direct,nowhere"), EXIT_CONFIG),
    ("reference.json", ("--l-max", "2"), EXIT_CONFIG),
    ("missing.json", (), EXIT_CONFIG),
])
def test_exit_codes(tmp_path, name, extra, expected):
    assert cli(tmp_path, name, *extra)[0] == expected


def test_bad_arguments():
    assert main([]) == EXIT_CONFIG


def test_malformed_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"functional": {"weight": {"kind": "triangle"}}, "l_max": 6}))
    assert main(["--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    bad.write_text("{not json")
    assert main(["--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_outputs_are_deterministic(tmp_path, monkeypatch):
    a = cli(tmp_path / "a", "reference_toeplitz.json")[1]
    monkeypatch.setenv("CMVLAB_THREADS", "1")
    b = cli(tmp_path / "b", "reference_toeplitz.json")[1]
    for f in ("report.json", "family.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_family_csv_layout(tmp_path):
    out = cli(tmp_path, "reference.json")[1]
    with open(out / "family.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["family", "side", "k", "H_re", "H_im", "exponent", "coef_re", "coef_im"]
    assert {r["family"] for r in rows} == {"base", "perturbed"}
    # monic in the CMV ordering: coefficient 1 at the exponent of chi_k
    lead = [r for r in rows if r["family"] == "perturbed" and r["side"] == "1" and r["k"] == "3"]
    assert float(lead[-1]["coef_re"]) == 1.0 and lead[-1]["exponent"] == "-2"


@pytest.mark.parametrize("pair,bound", [
    ("direct,direct", 0.0),
    ("direct,christoffel_21", 1e-10),
    ("christoffel_12,christoffel_21", 1e-10),
    ("direct,dual_toeplitz", 1e-10),
])
def test_compare_routes(tmp_path, pair, bound):
    code, out = cli(tmp_path, "reference_toeplitz.json", "--compare", pair)
    assert code == EXIT_OK
    with open(out / "compare.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["quantity"] for r in rows} == {"phi1", "phi2", "H"}
    assert max(float(r["rel_diff"]) for r in rows) <= bound


@pytest.mark.skipif(shutil.which("cmvlab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["cmvlab", "--config", str(CONFIGS / "singular.json"), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_QUASIDEFINITE
    assert "leading minor 2" in proc.stderr


def test_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cmvlab.cli", "--config", str(CONFIGS / "missing.json"),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
