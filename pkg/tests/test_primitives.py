import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from mfawb import primitives as prim
from mfawb.primitives import (DEFAULT_SUITE, AuthenticationFailure, DecodeFailure, LengthMismatch, ModGroup,
                              Suite)
from oracles import P61, oracle_tag


# -- frozen oracle values ---------------------------------------------------

def test_hash_fields_frozen_values():
    assert prim.hash_fields(b"abc").hex() == "c9806eacb0b1cb81a18e641783c6410aa757b00e757f7e86c7c3d0643c9efb2d"
    assert prim.hash_fields(b"a", b"b").hex() == \
        "dbe0de3c9f9c4651772e0e717894080b626d8284d7eed77c78e7bf3fc5f9a21b"
    assert prim.hash_fields(b"a", b"b", raw=True).hex() == \
        "f65a5e77ff5e2690ad316b7b9fc28dd90cc5c9a37e617ac3eee1403de3cf9a55"


def test_tag_generate_frozen_values():
    grp = ModGroup(P61)
    assert prim.tag_generate(12345, bytes(range(32)), 1, grp) == 1068908837740550213
    assert prim.tag_generate(P61 - 1, b"\xff" * 32, 7, grp) == 986228155791066414


def test_tag_generate_matches_independent_oracle():
    rng = random.Random(20240611)
    grp = ModGroup(P61)
    for _ in range(1000):
        K = rng.randrange(P61)
        d = rng.randbytes(rng.randint(0, 64))
        i = rng.randrange(1 << 32)
        assert prim.tag_generate(K, d, i, grp) == oracle_tag(K, d, i)


def test_tag_generate_rejects_out_of_range_key():
    with pytest.raises(ValueError):
        prim.tag_generate(P61, b"", 1, ModGroup(P61))


# -- xor ---------------------------------------------------------------------

same_len = st.integers(0, 48).flatmap(lambda n: st.tuples(*(st.binary(min_size=n, max_size=n),) * 3))


@given(same_len)
def test_xor_group_laws(abc):
    a, b, c = abc
    zero = bytes(len(a))
    assert prim.xor(a, b) == prim.xor(b, a)
    assert prim.xor(prim.xor(a, b), c) == prim.xor(a, prim.xor(b, c))
    assert prim.xor(a, zero) == a
    assert prim.xor(a, a) == zero


def test_xor_length_mismatch():
    with pytest.raises(LengthMismatch):
        prim.xor(b"ab", b"a")


# -- hashing -----------------------------------------------------------------

@given(st.lists(st.binary(max_size=40), max_size=4), st.integers(1, 64))
def test_hash_determinism_and_length(fields, size):
    assert prim.hash_fields(*fields, size=size) == prim.hash_fields(*fields, size=size)
    assert len(prim.hash_fields(*fields, size=size)) == size


@pytest.mark.parametrize("name", prim.HASH_BACKENDS)
def test_hash_backends_default_length(name):
    suite = Suite(hash_name=name)
    assert len(prim.hash_fields(b"x", suite=suite)) == suite.digest_len


def test_length_prefix_removes_ambiguity():
    assert prim.hash_fields(b"ab", b"c") != prim.hash_fields(b"a", b"bc")
    assert prim.hash_fields(b"ab", b"c", raw=True) == prim.hash_fields(b"a", b"bc", raw=True)


@given(st.lists(st.binary(max_size=30), max_size=5))
def test_field_encoding_round_trip(fields):
    assert prim.decode_fields(prim.encode_fields(*fields)) == fields


# -- authenticated encryption ------------------------------------------------

@given(st.binary(min_size=32, max_size=32), st.binary(max_size=80))
def test_encrypt_round_trip(key, msg):
    blob = prim.sym_encrypt(key, msg)
    assert len(blob) == len(msg) + prim.ENC_OVERHEAD
    assert prim.sym_decrypt(key, blob) == msg


@settings(max_examples=200)
@given(st.binary(min_size=32, max_size=32), st.binary(min_size=1, max_size=40), st.data())
def test_encrypt_tamper_detection(key, msg, data):
    blob = prim.sym_encrypt(key, msg)
    pos = data.draw(st.integers(0, len(blob) - 1))
    bit = data.draw(st.integers(0, 7))
    tampered = bytearray(blob)
    tampered[pos] ^= 1 << bit
    with pytest.raises(AuthenticationFailure):
        prim.sym_decrypt(key, bytes(tampered))


def test_decrypt_wrong_key_and_short_blob():
    blob = prim.sym_encrypt(bytes(32), b"hello")
    with pytest.raises(AuthenticationFailure):
        prim.sym_decrypt(b"\x01" * 32, blob)
    with pytest.raises(AuthenticationFailure):
        prim.sym_decrypt(bytes(32), blob[:10])
    with pytest.raises(LengthMismatch):
        prim.sym_encrypt(b"short", b"")


def test_encryption_is_deterministic_without_nonce():
    assert prim.sym_encrypt(bytes(32), b"m") == prim.sym_encrypt(bytes(32), b"m")


# -- fuzzy extractor ---------------------------------------------------------

SMALL = Suite(fuzzy_bits=32, fuzzy_t=3)


def _enroll(seed: int):
    rng = random.Random(seed)
    w = rng.randbytes(4)
    return w, prim.fuzzy_gen(w, rng, SMALL)


@pytest.mark.parametrize("seed", [1, 2])
def test_fuzzy_threshold_exact_32_bits(seed):
    w, pair = _enroll(seed)
    t = SMALL.fuzzy_t
    for k in range(t + 1):
        for pos in itertools.combinations(range(32), k):
            assert prim.fuzzy_rep(prim.flip_bits(w, pos), pair.tau, SMALL) == pair.sigma
    for pos in itertools.combinations(range(32), t + 1):
        try:
            sigma = prim.fuzzy_rep(prim.flip_bits(w, pos), pair.tau, SMALL)
        except DecodeFailure:
            continue
        assert sigma != pair.sigma


def test_fuzzy_recover_returns_enrolled_reading():
    w, pair = _enroll(3)
    assert prim.fuzzy_recover(prim.flip_bits(w, [0, 9]), pair.tau, SMALL) == w
    assert pair.sigma == prim.hash_fields(w)


def test_fuzzy_default_suite_noise():
    rng = random.Random(5)
    w = rng.randbytes(DEFAULT_SUITE.fuzzy_bits // 8)
    pair = prim.fuzzy_gen(w, rng)
    for _ in range(50):
        assert prim.fuzzy_rep(prim.noisy_copy(w, DEFAULT_SUITE.fuzzy_t, rng), pair.tau) == pair.sigma


def test_fuzzy_length_checks():
    with pytest.raises(LengthMismatch):
        prim.fuzzy_gen(b"abc", random.Random(0), SMALL)


def test_suite_validation():
    with pytest.raises(ValueError):
        Suite(hash_name="md5")
    with pytest.raises(ValueError):
        Suite(key_len=20)
    with pytest.raises(ValueError):
        Suite(fuzzy_bits=12)
    with pytest.raises(ValueError):
        Suite(puf_noise_bits=5, fuzzy_t=3)


def test_puf_response_within_noise():
    dev = prim.PufDevice("d", b"seed", noise_bits=2)
    rng = random.Random(0)
    ideal = dev.ideal_response(b"c")
    for _ in range(20):
        assert prim.hamming(dev.response(b"c", rng), ideal) <= 2


# -- arithmetic, time, entropy ---------------------------------------------

@given(st.integers(0, P61 - 1), st.integers(0, P61 - 1))
def test_modgroup_bytes_round_trip(a, b):
    grp = ModGroup(P61)
    assert grp.to_scalar(grp.to_bytes(a)) == a
    assert grp.add(a, b) == (a + b) % P61
    assert grp.mul(a, b) == (a * b) % P61


def test_totp_counter():
    assert prim.totp_counter(100, 40, 30) == 2
    with pytest.raises(prim.InvalidInterval):
        prim.totp_counter(1, 0, 0)
    with pytest.raises(ValueError):
        prim.totp_counter(0, 5, 30)


def test_entropy():
    assert prim.shannon_entropy(bytes(range(256))) == pytest.approx(8.0)
    assert prim.shannon_entropy(b"aaaa") == 0.0
    with pytest.raises(prim.EmptySample):
        prim.shannon_entropy(b"")
    stream = prim.sensor_stream(6, 4096, random.Random(1))
    assert 4.52 <= prim.shannon_entropy(stream) <= 7.80
    assert prim.low_entropy(stream)
