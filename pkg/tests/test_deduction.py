import random

import pytest
from hypothesis import given, settings, strategies as st

from kbgen import BYTES, SCALARS, P, random_kb
from mfawb.deduction import (CyclicEquations, KnowledgeBase, LimitExceeded, brute_force_close, close, derivable,
                             replay)
from mfawb.terms import Atom, Cat, Enc, GAdd, Hash, Xor, evaluate, normalize

a, b, c, d, e = BYTES
x, y, _ = SCALARS


def _env(seed=0):
    rng = random.Random(seed)
    env = {t.name: rng.randbytes(32) for t in BYTES}
    env.update({t.name: rng.randrange(P).to_bytes(8, "big") for t in SCALARS})
    return env


def _derive_and_replay(facts, goal, env):
    kb = KnowledgeBase.build(facts)
    trace = derivable(kb, goal)
    assert trace is not None
    initial = {f: evaluate(f, env) for f in kb.facts}
    assert replay(trace, initial) == evaluate(goal, env)
    return trace


def test_xor_unmask():
    trace = _derive_and_replay([Xor((a, b)), a], b, _env())
    assert trace.steps[-1].rule == "xor-combine"


def test_decrypt_then_hash():
    _derive_and_replay([Enc(a, Cat((b, c))), a], Hash((b, c)), _env(1))


def test_group_solve():
    y_term = GAdd(((1, x), (1, Atom("s", "secret", 8, P))), P)
    s = Atom("s", "secret", 8, P)
    env = {**_env(2), "s": (7).to_bytes(8, "big")}
    _derive_and_replay([y_term, s], x, env)


def test_underivable_goal():
    kb = KnowledgeBase.build([Hash((a,)), Enc(b, c)])
    assert derivable(kb, a) is None
    assert derivable(kb, c) is None


def test_known_goal_has_single_step():
    trace = derivable(KnowledgeBase.build([a]), a)
    assert [s.rule for s in trace.steps] == ["known"]
    assert trace.to_dict()["steps"][0] == {"rule": "known", "inputs": ["a"], "output": "a"}


def test_equations_are_unfolded():
    kb = KnowledgeBase.build([Atom("G", "defined", 32), a], {"G": Xor((a, b))})
    assert derivable(kb, b) is not None


def test_cyclic_equations_rejected():
    with pytest.raises(CyclicEquations):
        KnowledgeBase.build([], {"A": Hash((Atom("B", "defined", 32),)), "B": Hash((Atom("A", "defined", 32),))})


def test_limit_raises_instead_of_truncating():
    facts = [Hash((t,)) for t in BYTES] + list(BYTES)
    kb = KnowledgeBase.build(facts, targets=[Hash((a, b, c))], max_size=3)
    with pytest.raises(LimitExceeded):
        close(kb)


def test_limits_validated():
    with pytest.raises(ValueError):
        KnowledgeBase.build([a], max_size=0)


def test_close_matches_brute_force_on_random_kbs():
    for seed in range(200):
        kb = random_kb(seed)
        assert close(kb) == brute_force_close(kb), seed


def test_close_contains_facts_and_is_monotone():
    for seed in range(50):
        kb = random_kb(seed)
        base = close(kb)
        assert kb.facts <= base
        assert base <= close(kb.with_facts([a]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_derivations_replay_to_true_values(seed):
    kb = random_kb(seed)
    env = _env(seed)
    initial = {f: evaluate(f, env) for f in kb.facts}
    for goal in kb.targets:
        trace = derivable(kb, goal)
        if trace is not None:
            assert replay(trace, initial) == evaluate(normalize(goal), env)


def test_trace_render_lists_steps():
    trace = derivable(KnowledgeBase.build([Xor((a, b)), a]), b)
    text = trace.render()
    assert text.startswith("1. ")
    assert "|- b" in text.splitlines()[-1]
