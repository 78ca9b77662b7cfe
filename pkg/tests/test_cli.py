import json
import subprocess
import sys

import pytest

from mfawb.cli import main, resolve_attack, UnknownAttack


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_honest_sessions(capsys):
    code, out, _ = run_cli(capsys, "run", "P5", "--seed", "7", "--trials", "20")
    doc = json.loads(out)
    assert code == 0
    assert doc["schema"] == 1
    assert doc["agreed"] == 20 and doc["wire_mismatches"] == 0
    assert len(doc["transcripts"]) == 1


def test_run_markdown(capsys):
    code, out, _ = run_cli(capsys, "run", "P2", "--trials", "3", "--format", "markdown")
    assert code == 0 and out.startswith("P2: 3/3 sessions agreed")


@pytest.mark.parametrize("argv, code", [
    (["run", "P99"], 2),
    (["run", "P9"], 3),
    (["attack", "A3-sk", "--no-compromise", "--trials", "2"], 4),
    (["attack", "A42"], 2),
    (["attack"], 2),
    (["attack", "A2-sk", "--protocol", "P5"], 2),
    (["evaluate"], 2),
    (["deduce", "missing.kb"], 2),
    (["run", "P2", "--trials", "0"], 6),
    (["run", "P2", "--config", "/nonexistent.json"], 6),
])
def test_exit_codes(capsys, argv, code):
    assert run_cli(capsys, *argv)[0] == code


def test_attack_with_trace(capsys):
    code, out, _ = run_cli(capsys, "attack", "A2-sk", "--trials", "10", "--format", "markdown")
    assert code == 0
    assert "| A2-sk | P2 | 10/10 | 10/10 |" in out
    assert "Derivation:" in out


def test_attack_prefix_resolution():
    assert resolve_attack("A10") == "A10-mitm+pfs"
    with pytest.raises(UnknownAttack, match="ambiguous"):
        resolve_attack("A1")


def test_attack_json(capsys):
    code, out, _ = run_cli(capsys, "attack", "A10", "--trials", "3")
    doc = json.loads(out)
    assert code == 0 and doc["matches_expected"]
    assert doc["results"][0]["successes"] == 3


def test_evaluate_check(capsys):
    code, out, _ = run_cli(capsys, "evaluate", "--all", "--check-paper", "--trials", "2")
    doc = json.loads(out)
    assert code == 0
    assert doc["check"]["ok"] and doc["check"]["cells_compared"] == 88


def test_evaluate_subset_markdown(capsys):
    code, out, _ = run_cli(capsys, "evaluate", "P2", "P7", "--format", "markdown", "--trials", "2")
    assert code == 0 and "| P7 |" in out and "| P5 |" not in out


def test_deduce_packaged_kb(capsys):
    code, out, _ = run_cli(capsys, "deduce", "p2_attack.kb")
    doc = json.loads(out)
    assert code == 0 and doc["derivable"]
    assert doc["trace"]["steps"][-1]["output"] == "(M_2 (+) V_1)"


def test_deduce_underivable_and_parse_error(capsys, tmp_path):
    kb = tmp_path / "q.kb"
    kb.write_text("[env]\nA: len=32 kind=secret\nB: len=32 kind=secret\n[facts]\nH(A)\n[goal]\nA\n")
    assert run_cli(capsys, "deduce", str(kb))[0] == 1
    kb.write_text("[env]\nA: len=32 kind=secret\n[facts]\nH(A\n[goal]\nA\n")
    code, _, err = run_cli(capsys, "deduce", str(kb))
    assert code == 5 and "q.kb:4:5: expected )" in err


def test_cost_table(capsys):
    code, out, _ = run_cli(capsys, "cost", "--z", "5")
    doc = json.loads(out)
    rows = {r["protocol"]: r for r in doc["rows"]}
    assert code == 0
    assert rows["P1woFS"]["cost"] == "326T_h + 1T_aed"
    assert rows["P3"]["estimate_ms"] is not None


def test_cost_bad_units(capsys, tmp_path):
    units = tmp_path / "u.units"
    units.write_text("T_h = quick\n")
    assert run_cli(capsys, "cost", "--units", str(units))[0] == 5


def test_config_adversary_mismatch(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"adversary": {"factors": ["NOPE"]}}))
    code, _, err = run_cli(capsys, "attack", "A2-sk", "--config", str(cfg), "--trials", "1")
    assert code == 6 and "configuration error" in err


def test_report_is_byte_identical(capsys):
    first = run_cli(capsys, "report", "--seed", "11", "--trials", "2")
    second = run_cli(capsys, "report", "--seed", "11", "--trials", "2")
    assert first[0] == 0
    assert first[1] == second[1]


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mfawb.cli", "run", "P2", "--trials", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["agreed"] == 2
