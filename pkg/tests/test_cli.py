import json
import subprocess
import sys
from pathlib import Path

import pytest

from mmv.cli import main

CORPUS = Path(__file__).resolve().parents[1] / "src" / "mmv" / "corpus"


def run_cli(*args):
    proc = subprocess.run([sys.executable, "-m", "mmv", *args],
                          capture_output=True, text=True, timeout=180)
    return proc


def test_verify_exit_codes(capsys):
    assert main(["verify", str(CORPUS / "identity.tz")]) == 0
    out = capsys.readouterr().out
    assert "VERIFIED" in out
    assert main(["verify", str(CORPUS / "identity_bad.tz")]) == 1
    out = capsys.readouterr().out
    assert "UNVERIFIED" in out


def test_verify_missing_file_exit_2():
    proc = run_cli("verify", "/does/not/exist.tz")
    assert proc.returncode == 2


def test_verify_parse_error_exit_2(tmp_path):
    bad = tmp_path / "bad.tz"
    bad.write_text("parameter int storage int")
    proc = run_cli("verify", str(bad))
    assert proc.returncode == 2
    assert "parse error" in proc.stderr


def test_verify_missing_solver_exit_2():
    proc = run_cli("verify", str(CORPUS / "identity.tz"),
                   "--solver", "no-such-solver-binary")
    assert proc.returncode == 2


def test_json_report_schema(capsys):
    assert main(["verify", str(CORPUS / "identity.tz"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["v"] == 1
    assert data["verdict"] == "VERIFIED"
    assert data["assume_tainted"] is False
    assert {row["origin"] for row in data["vcs"]} == {"ContractPost", "ContractExc"}
    for row in data["vcs"]:
        assert set(row) == {"id", "origin", "span", "verdict", "time_ms"}


def _strip_timing(report: dict) -> dict:
    out = dict(report)
    out.pop("total_time_ms")
    out["vcs"] = [{k: v for k, v in row.items() if k != "time_ms"}
                  for row in report["vcs"]]
    return out


def test_json_report_deterministic(capsys):
    main(["verify", str(CORPUS / "guard.tz"), "--json", "--seed", "0"])
    first = json.loads(capsys.readouterr().out)
    main(["verify", str(CORPUS / "guard.tz"), "--json", "--seed", "0"])
    second = json.loads(capsys.readouterr().out)
    assert _strip_timing(first) == _strip_timing(second)


def test_run_examples(capsys):
    assert main(["run", str(CORPUS / "triangular_num.tz"), "(10, 0)"]) == 0
    assert capsys.readouterr().out.strip() == "Ok ([], 55)"

    assert main(["run", str(CORPUS / "guard.tz"), "(0, 1)"]) == 0
    assert capsys.readouterr().out.strip() == "Failed 0"

    assert main(["run", str(CORPUS / "triangular_num.tz"), "(10, 0)",
                 "--fuel", "1"]) == 0
    assert capsys.readouterr().out.strip() == "OutOfFuel"


def test_run_failwith_demo(tmp_path, capsys):
    demo = tmp_path / "fail7.tz"
    demo.write_text("""
parameter int ;
storage int ;
<< ContractAnnot { (p, s) | True } -> { (ops, s2) | True } & { e : int | True } >>
code { DROP ; PUSH int 7 ; FAILWITH } ;
""")
    assert main(["run", str(demo), "(1, 2)"]) == 0
    assert capsys.readouterr().out.strip() == "Failed 7"


def test_run_rejects_ill_typed_input():
    proc = run_cli("run", str(CORPUS / "triangular_num.tz"), "[1; 2]")
    assert proc.returncode == 2


def test_emit_smt_counts_and_stability(tmp_path, capsys):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    main(["emit-smt", str(CORPUS / "triangular_num.tz"), str(out1)])
    main(["emit-smt", str(CORPUS / "triangular_num.tz"), str(out2)])
    capsys.readouterr()
    files1 = sorted(p.name for p in out1.glob("*.smt2"))
    assert len(files1) == 4  # entry, preserve, post, exc
    files2 = sorted(p.name for p in out2.glob("*.smt2"))
    assert files1 == files2
    for name in files1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    assert (out1 / "index.json").read_bytes() == (out2 / "index.json").read_bytes()

    out3 = tmp_path / "c"
    main(["emit-smt", str(CORPUS / "identity.tz"), str(out3)])
    capsys.readouterr()
    assert len(list(out3.glob("*.smt2"))) == 2


def test_verify_emit_smt_flag(tmp_path, capsys):
    out = tmp_path / "scripts"
    assert main(["verify", str(CORPUS / "identity.tz"),
                 "--emit-smt", str(out)]) == 0
    capsys.readouterr()
    assert len(list(out.glob("*.smt2"))) == 2
    assert (out / "index.json").exists()


def test_harness_subcommand(capsys):
    assert main(["harness", str(CORPUS / "identity.tz"), "--samples", "25"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out


def test_harness_vacuous_on_unsat_pre(tmp_path, capsys):
    src = (CORPUS / "identity.tz").read_text().replace(
        "{ (p, s) | True }", "{ (p, s) | False }")
    f = tmp_path / "vacuous.tz"
    f.write_text(src)
    assert main(["harness", str(f), "--samples", "10"]) == 0
    out = capsys.readouterr().out
    assert "0/10" in out and "vacuous" in out


def test_harness_catches_bogus_assume(tmp_path, capsys):
    # an Assume that forces verification through a wrong fact: the contract
    # claims storage becomes 1, justified only by assuming the popped value
    # is 1.  Verification succeeds (assume-tainted), the oracle refutes it.
    src = """
parameter int ;
storage int ;
<< ContractAnnot { (p, s) | True } ->
                 { (ops, s2) | ops = [] && s2 = 1 } &
                 { e : int | False } >>
code {
  CDR ;
  << Assume { st : int :. _ | st = 1 } >>
  NIL operation ;
  PAIR
} ;
"""
    f = tmp_path / "assume_lie.tz"
    f.write_text(src)
    assert main(["verify", str(f)]) == 0  # VERIFIED, but tainted
    out = capsys.readouterr().out
    assert "assume-tainted" in out
    assert main(["harness", str(f), "--samples", "30"]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "post" in out
