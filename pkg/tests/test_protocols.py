import random

import pytest

from mfawb.cli import honest_runs
from mfawb.deduction import derivable, replay
from mfawb.primitives import DEFAULT_SUITE
from mfawb.protocols.model import (UnknownProtocol, available_protocols, fixture_dir, load_model, parse_kb,
                                   parse_protocol)
from mfawb.protocols.runtime import MetadataOnly, register, run_session, seeded
from mfawb.syntax import FixtureParseError
from mfawb.terms import evaluate

ALL = ["P1woFS", "P1FS", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9", "P10", "HARDENED"]
EXECUTABLE = [p for p in ALL if p != "P9"]


def test_fixture_inventory():
    assert available_protocols() == ALL


@pytest.mark.parametrize("pid", ALL)
def test_fixture_loads(pid):
    m = load_model(pid)
    assert m.id == pid
    assert m.factors
    assert m.executable == (pid != "P9")


@pytest.mark.parametrize("pid", EXECUTABLE)
def test_honest_sessions_agree_and_match_equations(pid):
    summary, transcripts = honest_runs(pid, 3, 20, DEFAULT_SUITE)
    assert summary["agreed"] == 20
    assert summary["wire_mismatches"] == 0
    assert all(len(t.session_key) > 0 for t in transcripts)


@pytest.mark.parametrize("pid", EXECUTABLE)
def test_sessions_are_seed_deterministic(pid):
    def run():
        model = load_model(pid)
        rng = seeded(f"det:{pid}")
        dep = register(model, rng)
        return [run_session(dep, rng=rng).to_dict() for _ in range(3)]
    assert run() == run()


def test_metadata_protocol_refuses_sessions():
    model = load_model("P9")
    dep = register(model, seeded("x"))
    with pytest.raises(MetadataOnly):
        run_session(dep)


def test_unknown_protocol():
    with pytest.raises(UnknownProtocol):
        load_model("P42")


def test_fixture_directory_override(tmp_path, monkeypatch):
    src = (fixture_dir() / "p2.mfa").read_text()
    (tmp_path / "only.mfa").write_text(src)
    monkeypatch.setenv("MFAWB_FIXTURES", str(tmp_path))
    assert available_protocols() == ["P2"]


def test_fresh_nonces_differ_between_sessions():
    model = load_model("P2")
    rng = seeded("fresh")
    dep = register(model, rng)
    a, b = run_session(dep, rng=rng), run_session(dep, rng=rng)
    assert a.session_key != b.session_key
    assert b.messages[0].time > a.messages[-1].time


MINIMAL = """\
protocol: T
domain: test
roles: U S

[factors]
PW: label=PW category=knowledge holder=U storage=memorized material=K

[env]
K: len=16 kind=secret scope=long
N: len=16 kind=nonce scope=session

[equations]
SK := H(K, N)

[messages]
U -> S : N [plain, auth]

[sk]
SK
"""


def test_minimal_fixture_parses():
    m = parse_protocol(MINIMAL)
    assert m.roles == ("U", "S")
    assert str(m.sk) == "SK"
    assert m.messages[0].auth and m.messages[0].plain


@pytest.mark.parametrize("mutate, line, message", [
    (lambda s: s.replace("roles: U S\n", ""), 0, "missing header 'roles'"),
    (lambda s: s.replace("[sk]", "[bogus]"), 0, "unknown section [bogus]"),
    (lambda s: s.replace("scope=session", "scope=forever"), 10, "scope must be long or session"),
    (lambda s: s.replace("SK := H(K, N)", "SK := H(K, Q)"), 13, "unknown"),
    (lambda s: s.replace("SK := H(K, N)", "SK H(K, N)"), 13, "expected 'NAME := term'"),
    (lambda s: s.replace("category=knowledge", "category=vibes"), 6, "unknown category"),
    (lambda s: s.replace("U -> S", "U -> X"), 16, "declared roles"),
    (lambda s: s.replace("[plain, auth]", "[plain, loud]"), 16, "unknown message flags"),
])
def test_fixture_errors_report_position(mutate, line, message):
    with pytest.raises(FixtureParseError) as exc:
        parse_protocol(mutate(MINIMAL), path="t.mfa")
    assert message in exc.value.message
    assert exc.value.line == line
    assert str(exc.value).startswith("t.mfa:")


def test_duplicate_section_rejected():
    with pytest.raises(FixtureParseError, match="duplicate section"):
        parse_protocol(MINIMAL + "\n[sk]\nSK\n")


def test_cyclic_definition_rejected():
    text = MINIMAL.replace("SK := H(K, N)", "SK := H(K, A)\nA := H(SK)")
    with pytest.raises(FixtureParseError, match="cyclic"):
        parse_protocol(text)


KB = """\
name: demo
[env]
A: len=32 kind=secret
B: len=32 kind=secret
[equations]
M := A (+) B
[facts]
M, A
[goal]
B
"""


def test_kb_file_round_trip():
    q = parse_kb(KB)
    assert q.name == "demo"
    trace = derivable(q.kb, q.goal)
    rng = random.Random(0)
    env = {"A": rng.randbytes(32), "B": rng.randbytes(32)}
    env["M"] = bytes(x ^ y for x, y in zip(env["A"], env["B"]))
    initial = {f: evaluate(f, env) for f in q.kb.facts}
    assert replay(trace, initial) == env["B"]


def test_kb_file_needs_one_goal():
    with pytest.raises(FixtureParseError, match="exactly one"):
        parse_kb(KB.replace("[goal]\nB\n", "[goal]\nB\nA\n"))
    with pytest.raises(FixtureParseError, match="unknown section"):
        parse_kb(KB + "[messages]\n")
