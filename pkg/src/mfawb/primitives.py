"""Seedable cryptographic building blocks shared by the simulator and the symbolic engine.

Everything here is a pure function of its arguments (plus an explicitly passed
``random.Random`` where randomness is needed), so the same code backs honest
protocol runs, scripted attacks and the concrete replay of symbolic traces.
None of it is meant to be production cryptography.
"""

from __future__ import annotations

import hashlib
import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

NONCE_LEN = 12
TAG_LEN = 16
ENC_OVERHEAD = NONCE_LEN + TAG_LEN
MERSENNE_61 = 2**61 - 1
HASH_BACKENDS = ("blake2b", "sha256", "sha512", "shake256")


class PrimitiveError(Exception):
    pass


class LengthMismatch(PrimitiveError, ValueError):
    pass


class AuthenticationFailure(PrimitiveError):
    """Raised when an authenticated ciphertext does not verify under the given key."""


class DecodeFailure(PrimitiveError):
    """Raised by :func:`fuzzy_rep` when the reading is too far from the enrollment."""


class InvalidInterval(PrimitiveError, ValueError):
    pass


class EmptySample(PrimitiveError, ValueError):
    pass


@dataclass(frozen=True)
class Suite:
    """One configured primitive suite, shared by every protocol in a run."""

    digest_len: int = 32
    key_len: int = 32
    hash_name: str = "blake2b"
    fuzzy_bits: int = 256
    fuzzy_t: int = 3
    puf_noise_bits: int = 2
    modulus: int = MERSENNE_61
    generator: int = 3

    def __post_init__(self):
        if self.hash_name not in HASH_BACKENDS:
            raise ValueError(f"unknown hash backend {self.hash_name!r}")
        if self.key_len not in (16, 24, 32):
            raise ValueError("symmetric key length must be 16, 24 or 32 bytes")
        if self.fuzzy_bits % 8 or self.fuzzy_bits < 2 * self.fuzzy_t + 1:
            raise ValueError("fuzzy bit-length must be a byte multiple and at least 2t+1")
        if self.puf_noise_bits > self.fuzzy_t:
            raise ValueError("PUF noise must stay within the fuzzy extractor's tolerance")

    @property
    def scalar_len(self) -> int:
        return scalar_width(self.modulus)

    def to_dict(self) -> dict:
        return {
            "digest_len": self.digest_len,
            "key_len": self.key_len,
            "hash_name": self.hash_name,
            "fuzzy_bits": self.fuzzy_bits,
            "fuzzy_t": self.fuzzy_t,
            "puf_noise_bits": self.puf_noise_bits,
            "modulus": self.modulus,
            "generator": self.generator,
        }


DEFAULT_SUITE = Suite()


# -- hashing ---------------------------------------------------------------

def hash_bytes(data: bytes, size: int | None = None, suite: Suite = DEFAULT_SUITE) -> bytes:
    size = suite.digest_len if size is None else size
    name = suite.hash_name
    if name == "shake256":
        return hashlib.shake_256(data).digest(size)
    if name == "blake2b":
        return hashlib.blake2b(data, digest_size=size).digest()
    full = hashlib.new(name, data).digest()
    if size > len(full):
        raise ValueError(f"{name} cannot produce {size} bytes")
    return full[:size]


def encode_fields(*fields: bytes) -> bytes:
    """Length-prefixed encoding: every field is preceded by its 4-byte big-endian length."""
    return b"".join(len(f).to_bytes(4, "big") + f for f in fields)


def decode_fields(blob: bytes) -> list[bytes]:
    out, pos = [], 0
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise ValueError("truncated length prefix")
        n = int.from_bytes(blob[pos:pos + 4], "big")
        pos += 4
        if pos + n > len(blob):
            raise ValueError("truncated field")
        out.append(blob[pos:pos + n])
        pos += n
    return out


def hash_fields(*fields: bytes, size: int | None = None, raw: bool = False,
                suite: Suite = DEFAULT_SUITE) -> bytes:
    """Hash of several fields.

    The default encoding is length-prefixed, so ``h(a||b)`` is unambiguous.
    ``raw=True`` hashes the plain concatenation, the layout some attacks rely on.
    """
    data = b"".join(fields) if raw else encode_fields(*fields)
    return hash_bytes(data, size, suite)


# -- xor -------------------------------------------------------------------

def xor(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise LengthMismatch(f"xor of {len(a)} and {len(b)} bytes")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def xor_all(parts: Iterable[bytes], length: int) -> bytes:
    acc = bytes(length)
    for p in parts:
        acc = xor(acc, p)
    return acc


# -- authenticated symmetric encryption ------------------------------------

def sym_encrypt(key: bytes, plaintext: bytes, nonce: bytes | None = None,
                suite: Suite = DEFAULT_SUITE) -> bytes:
    """AES-GCM; returns ``nonce || ciphertext || tag``.

    Without an explicit nonce one is derived from key and plaintext, which keeps
    symbolic ``ENC(k, m)`` terms evaluable to exactly the bytes a role would send.
    """
    if len(key) != suite.key_len:
        raise LengthMismatch(f"key must be {suite.key_len} bytes, got {len(key)}")
    if nonce is None:
        nonce = hash_fields(b"enc-nonce", key, plaintext, size=NONCE_LEN, suite=suite)
    if len(nonce) != NONCE_LEN:
        raise LengthMismatch("nonce must be 12 bytes")
    return nonce + AESGCM(key).encrypt(nonce, plaintext, None)


def sym_decrypt(key: bytes, blob: bytes, suite: Suite = DEFAULT_SUITE) -> bytes:
    if len(key) != suite.key_len:
        raise LengthMismatch(f"key must be {suite.key_len} bytes, got {len(key)}")
    if len(blob) < ENC_OVERHEAD:
        raise AuthenticationFailure("ciphertext too short")
    try:
        return AESGCM(key).decrypt(blob[:NONCE_LEN], blob[NONCE_LEN:], None)
    except InvalidTag as exc:
        raise AuthenticationFailure("ciphertext does not verify") from exc


# -- bit vectors, fuzzy extractor, PUF --------------------------------------

def hamming(a: bytes, b: bytes) -> int:
    return int.from_bytes(xor(a, b), "big").bit_count()


def flip_bits(data: bytes, positions: Iterable[int]) -> bytes:
    v = int.from_bytes(data, "big")
    n = len(data) * 8
    for pos in positions:
        v ^= 1 << (n - 1 - pos)
    return v.to_bytes(len(data), "big")


def _blocks(nbits: int, t: int) -> list[tuple[int, int]]:
    """Split ``nbits`` into repetition blocks, each at least 2t+1 bits long."""
    r = 2 * t + 1
    k = nbits // r
    base, extra = divmod(nbits, k)
    spans, start = [], 0
    for j in range(k):
        size = base + (1 if j < extra else 0)
        spans.append((start, size))
        start += size
    return spans


def _encode_rep(bits: Sequence[int], spans, nbits: int) -> int:
    v = 0
    for bit, (start, size) in zip(bits, spans):
        if bit:
            v |= ((1 << size) - 1) << (nbits - start - size)
    return v


@dataclass(frozen=True)
class FuzzyPair:
    sigma: bytes
    tau: bytes


def fuzzy_gen(reading: bytes, rng: random.Random, suite: Suite = DEFAULT_SUITE) -> FuzzyPair:
    """Code-offset construction over a repetition code.

    ``tau = w xor C(s)`` for a random message ``s``; ``sigma = H(w)``.
    """
    nbits = suite.fuzzy_bits
    if len(reading) * 8 != nbits:
        raise LengthMismatch(f"reading must be {nbits} bits")
    spans = _blocks(nbits, suite.fuzzy_t)
    msg = [rng.getrandbits(1) for _ in spans]
    code = _encode_rep(msg, spans, nbits).to_bytes(len(reading), "big")
    return FuzzyPair(sigma=hash_fields(reading, suite=suite), tau=xor(reading, code))


def fuzzy_recover(reading: bytes, tau: bytes, suite: Suite = DEFAULT_SUITE) -> bytes:
    """Reconstruct the enrolled reading from a nearby one and the helper string."""
    nbits = suite.fuzzy_bits
    if len(reading) * 8 != nbits or len(tau) != len(reading):
        raise LengthMismatch(f"reading and helper must be {nbits} bits")
    spans = _blocks(nbits, suite.fuzzy_t)
    noisy = int.from_bytes(xor(reading, tau), "big")
    msg = []
    for start, size in spans:
        block = (noisy >> (nbits - start - size)) & ((1 << size) - 1)
        msg.append(1 if 2 * block.bit_count() > size else 0)
    code = _encode_rep(msg, spans, nbits).to_bytes(len(reading), "big")
    enrolled = xor(code, tau)
    # decoding is only trusted inside the radius; this makes the threshold exact
    if hamming(enrolled, reading) > suite.fuzzy_t:
        raise DecodeFailure("reading outside the correction radius")
    return enrolled


def fuzzy_rep(reading: bytes, tau: bytes, suite: Suite = DEFAULT_SUITE) -> bytes:
    return hash_fields(fuzzy_recover(reading, tau, suite), suite=suite)


def noisy_copy(reading: bytes, max_flips: int, rng: random.Random) -> bytes:
    """Flip between 0 and ``max_flips`` distinct random bits."""
    n = len(reading) * 8
    count = rng.randint(0, max_flips)
    return flip_bits(reading, rng.sample(range(n), count))


@dataclass(frozen=True)
class PufDevice:
    device_id: str
    secret_seed: bytes
    noise_bits: int = 2

    def ideal_response(self, challenge: bytes, suite: Suite = DEFAULT_SUITE) -> bytes:
        return hash_fields(b"puf", self.secret_seed, challenge, size=suite.fuzzy_bits // 8, suite=suite)

    def response(self, challenge: bytes, rng: random.Random, suite: Suite = DEFAULT_SUITE) -> bytes:
        return noisy_copy(self.ideal_response(challenge, suite), self.noise_bits, rng)


# -- modular arithmetic ----------------------------------------------------

def scalar_width(p: int) -> int:
    return (p.bit_length() + 7) // 8


@dataclass(frozen=True)
class ModGroup:
    p: int

    @property
    def width(self) -> int:
        return scalar_width(self.p)

    def to_scalar(self, data: bytes) -> int:
        return int.from_bytes(data, "big") % self.p

    def to_bytes(self, x: int) -> bytes:
        return (x % self.p).to_bytes(self.width, "big")

    def add(self, *xs: int) -> int:
        return sum(xs) % self.p

    def mul(self, *xs: int) -> int:
        return math.prod(xs) % self.p

    def exp(self, base: int, e: int) -> int:
        return pow(base, e, self.p)


def tag_generate(K: int, d_i: bytes, i: int, grp: ModGroup, suite: Suite = DEFAULT_SUITE) -> int:
    """Historical-data authentication tag ``t_i = K*h(d_i||i) + h(K||i) mod p``."""
    if not 0 <= K < grp.p:
        raise ValueError("tag key must lie in [0, p)")
    idx = i.to_bytes(4, "big")
    k_i = grp.to_scalar(hash_fields(grp.to_bytes(K), idx, suite=suite))
    return (K * grp.to_scalar(hash_fields(d_i, idx, suite=suite)) + k_i) % grp.p


# -- time and entropy ------------------------------------------------------

def totp_counter(t: int, t0: int, interval: int) -> int:
    if interval <= 0:
        raise InvalidInterval("interval must be positive")
    if t < t0:
        raise ValueError("t precedes t0")
    return (t - t0) // interval


def shannon_entropy(samples: Sequence) -> float:
    if len(samples) == 0:
        raise EmptySample("entropy of an empty sample")
    n = len(samples)
    return -sum((c / n) * math.log2(c / n) for c in Counter(samples).values()) + 0.0


def low_entropy(samples: Sequence, threshold: float = 7.99) -> bool:
    return shannon_entropy(samples) < threshold


def sensor_stream(alphabet_bits: int, length: int, rng: random.Random) -> bytes:
    """Simulated sensor bytes drawn uniformly from ``2**alphabet_bits`` symbols."""
    return bytes(rng.getrandbits(alphabet_bits) for _ in range(length))
