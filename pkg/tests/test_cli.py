import csv
import json
import subprocess
import sys

import pytest

from anisostokes.cli import UNDEFINED, format_cell, main, write_csv

SMALL = "mesh: {h: 0.5}\nsolver: {samples: 3}\n"


def _cfg(tmp_path, text=SMALL, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _report(tmp_path, argv, name="r.json"):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, json.loads(out.read_text())


def test_tensor_check_passes_for_default(tmp_path):
    code, rep = _report(tmp_path, ["tensor-check"])
    assert code == 0 and rep["passed"]
    assert rep["data"]["c_inv"] == pytest.approx(2.0)


def test_failing_check_exits_with_one(tmp_path):
    cfg = _cfg(tmp_path, "tensor: {kind: array, inner: [" + ", ".join(["0"] * 16) + "]}\n")
    code, rep = _report(tmp_path, ["tensor-check", "--config", cfg])
    assert code == 1 and not rep["passed"]


def test_unknown_key_exits_with_two(tmp_path, capsys):
    cfg = _cfg(tmp_path, "mesh:\n  hh: 0.5\n")
    assert main(["identities", "--config", cfg]) == 2
    assert "line 2" in capsys.readouterr().err


def test_bad_expression_exits_with_two(tmp_path):
    cfg = _cfg(tmp_path, SMALL + "ns: {load: [\"__import__('os')\", '0']}\n")
    assert main(["ns", "--config", cfg]) == 2


def test_bad_arguments_exit_with_two():
    assert main(["no-such-command"]) == 2
    assert main(["bvp", "--kind", "robin"]) == 2


def test_empty_check_list_gives_passing_report(tmp_path):
    cfg = _cfg(tmp_path, SMALL + "checks: []\n")
    code, rep = _report(tmp_path, ["identities", "--config", cfg])
    assert code == 0 and rep["passed"] and rep["checks"] == []


def test_unknown_check_name_is_a_config_error(tmp_path):
    cfg = _cfg(tmp_path, SMALL + "checks: [no such identity]\n")
    assert main(["identities", "--config", cfg]) == 2


def test_identities_select_by_name(tmp_path):
    cfg = _cfg(tmp_path, SMALL + "checks: [single layer traction jump]\n")
    code, rep = _report(tmp_path, ["identities", "--config", cfg])
    assert code == 0 and [c["name"] for c in rep["checks"]] == ["single layer traction jump"]


@pytest.mark.parametrize("kind", ["transmission", "dirichlet", "neumann", "mixed"])
def test_bvp_kinds_pass(tmp_path, kind):
    code, rep = _report(tmp_path, ["bvp", "--config", _cfg(tmp_path), "--kind", kind,
                                   "--pressure-mode", "broken"])
    assert code == 0 and rep["checks"]


def test_deterministic_reruns_have_identical_bodies(tmp_path):
    cfg = _cfg(tmp_path)
    _, a = _report(tmp_path, ["bvp", "--config", cfg, "--deterministic"], "a.json")
    _, b = _report(tmp_path, ["bvp", "--config", cfg, "--deterministic"], "b.json")
    for r in (a, b):
        assert r["environment"].pop("timestamp")
    assert a == b and a["environment"]["deterministic"]


def test_ns_scales_data_to_the_margin(tmp_path):
    code, rep = _report(tmp_path, ["ns", "--config", _cfg(tmp_path)])
    assert code == 0
    assert rep["data"]["constants"]["margin_bound"] == pytest.approx(0.5)


def test_converge_needs_two_refinements(tmp_path):
    assert main(["converge", "--config", _cfg(tmp_path), "--refine", "1"]) == 2


def test_converge_zero_data_writes_csv_with_undefined_rates(tmp_path):
    cfg = _cfg(tmp_path, "mesh: {h: 0.5}\nproblem: {data: zero}\n")
    code, rep = _report(tmp_path, ["converge", "--config", cfg, "--refine", "2", "--kind", "mixed"])
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "r_convergence.csv", encoding="utf-8")))
    assert rows[0] == ["level", "h", "error_u", "error_p", "rate_u", "rate_p"]
    assert len(rows) == 4
    assert rows[1][4] == UNDEFINED and rows[1][5] == UNDEFINED


def test_format_cell_and_csv(tmp_path):
    assert format_cell(None) == UNDEFINED
    assert format_cell(0.5) == "5.000000e-01"
    assert format_cell(3) == "3"
    write_csv(tmp_path / "t.csv", [{"level": 0, "h": 0.5, "error_u": 1.0}])
    rows = list(csv.reader(open(tmp_path / "t.csv", encoding="utf-8")))
    assert rows[1] == ["0", "5.000000e-01", "1.000000e+00", UNDEFINED, UNDEFINED, UNDEFINED]


def test_stdout_report_and_stderr_summary(capsys):
    assert main(["tensor-check"]) == 0
    out = capsys.readouterr()
    assert json.loads(out.out)["command"] == "tensor-check"
    assert out.err.startswith("PASS ")


def test_installed_entry_point():
    res = subprocess.run([sys.executable, "-m", "anisostokes.cli", "tensor-check"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0
    assert json.loads(res.stdout)["passed"]
