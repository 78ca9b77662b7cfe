import pytest
from hypothesis import given, strategies as st

from mfawb import primitives as prim
from mfawb.syntax import FixtureParseError, TermParser
from mfawb.terms import (Atom, Cat, Enc, GAdd, Hash, LengthMismatch, Scalar, UnboundAtom, Xor, Zero, atoms,
                         evaluate, normalize, substitute)

P = (1 << 61) - 1
NAMES = "abcd"
A = {n: Atom(n, "secret", 32) for n in NAMES}
ENV = {n: bytes([i + 1]) * 32 for i, n in enumerate(NAMES)}


def terms32():
    leaf = st.sampled_from(list(A.values()))
    return st.recursive(
        leaf,
        lambda inner: st.one_of(
            st.lists(inner, min_size=2, max_size=3).map(lambda xs: Xor(tuple(xs))),
            st.lists(inner, min_size=1, max_size=2).map(lambda xs: Hash(tuple(xs)))),
        max_leaves=6)


@given(terms32())
def test_normalize_preserves_value(t):
    assert evaluate(normalize(t), ENV) == evaluate(t, ENV)


@given(terms32())
def test_normalize_idempotent(t):
    n = normalize(t)
    assert normalize(n) == n


@given(terms32(), terms32())
def test_xor_normal_form_is_order_free(a, b):
    assert normalize(Xor((a, b))) == normalize(Xor((b, a)))


@given(terms32())
def test_xor_self_cancels(t):
    assert normalize(Xor((t, t))) == Zero(32)


def test_xor_three_way_cancellation():
    a, b, c = A["a"], A["b"], A["c"]
    assert normalize(Xor((Xor((a, b)), Xor((b, c))))) == normalize(Xor((a, c)))


def test_xor_length_mismatch():
    with pytest.raises(LengthMismatch):
        Xor((A["a"], Atom("s", size=16))).length


def test_evaluate_constructors():
    k = Atom("k", size=32)
    env = {**ENV, "k": bytes(32)}
    assert evaluate(Cat((A["a"], A["b"])), env) == ENV["a"] + ENV["b"]
    assert evaluate(Hash((A["a"],)), env) == prim.hash_fields(ENV["a"])
    assert evaluate(Enc(k, A["a"]), env) == prim.sym_encrypt(bytes(32), ENV["a"])
    x = Atom("x", size=8, modulus=P)
    got = evaluate(GAdd(((1, x), (P - 1, Scalar(A["a"], P))), P), {**env, "x": (5).to_bytes(8, "big")})
    expect = (5 - int.from_bytes(ENV["a"], "big")) % P
    assert int.from_bytes(got, "big") == expect


def test_evaluate_unbound_and_wrong_length():
    with pytest.raises(UnboundAtom):
        evaluate(A["a"], {})
    with pytest.raises(LengthMismatch):
        evaluate(A["a"], {"a": b"x"})


def test_atoms_and_substitute():
    t = Hash((A["a"], Xor((A["b"], A["c"]))))
    assert {x.name for x in atoms(t)} == {"a", "b", "c"}
    s = substitute(t, {"b": A["d"]})
    assert {x.name for x in atoms(s)} == {"a", "c", "d"}


def _parser():
    return TermParser(lambda n: A.get(n) or Atom(n, size=32), 32, P)


def test_parser_operators():
    t = _parser().parse("H(a, b (+) c)")
    assert t == Hash((A["a"], Xor((A["b"], A["c"]))))
    assert str(_parser().parse("CAT(a, b)")) == str(Cat((A["a"], A["b"])))


@pytest.mark.parametrize("text, col", [("H(a,", 5), ("a $ b", 3), ("a b", 3)])
def test_parser_error_positions(text, col):
    with pytest.raises(FixtureParseError) as exc:
        _parser().parse(text, line=4)
    assert exc.value.line == 4
    assert exc.value.column == col
