"""Symbolic terms, their normal form, and evaluation to concrete bytes.

Every term has a static byte length, so concatenations can be split and
XOR sums are length-checked without an environment.  Group terms live in
``Z_p`` and evaluate to fixed-width big-endian encodings of their value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping

from . import primitives as prim
from .primitives import Suite, scalar_width

KINDS = ("public", "secret", "nonce")


class TermError(Exception):
    pass


class UnboundAtom(TermError, KeyError):
    def __str__(self):
        return f"unbound atom {self.args[0]!r}"


class LengthMismatch(TermError, ValueError):
    pass


class Term:
    __slots__ = ()

    @property
    def children(self) -> tuple["Term", ...]:
        return ()

    @property
    def length(self) -> int:
        raise NotImplementedError

    def __str__(self) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self}>"

    def __lt__(self, other: "Term") -> bool:
        return sort_key(self) < sort_key(other)


@dataclass(frozen=True, repr=False)
class Atom(Term):
    name: str
    kind: str = "secret"
    size: int = 32
    modulus: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS and self.kind != "defined":
            raise TermError(f"unknown atom kind {self.kind!r}")

    @property
    def length(self) -> int:
        return self.size

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, repr=False)
class Zero(Term):
    size: int

    @property
    def length(self) -> int:
        return self.size

    def __str__(self) -> str:
        return "0"


@dataclass(frozen=True, repr=False)
class Xor(Term):
    items: tuple[Term, ...]

    @property
    def children(self):
        return self.items

    @cached_property
    def length(self) -> int:
        sizes = {t.length for t in self.items}
        if len(sizes) != 1:
            raise LengthMismatch(f"xor over lengths {sorted(sizes)}")
        return sizes.pop()

    def __str__(self) -> str:
        return "(" + " (+) ".join(map(str, self.items)) + ")"


@dataclass(frozen=True, repr=False)
class Hash(Term):
    args: tuple[Term, ...]
    size: int = 32

    @property
    def children(self):
        return self.args

    @property
    def length(self) -> int:
        return self.size

    def __str__(self) -> str:
        return "H(" + ", ".join(map(str, self.args)) + ")"


@dataclass(frozen=True, repr=False)
class Cat(Term):
    parts: tuple[Term, ...]

    @property
    def children(self):
        return self.parts

    @cached_property
    def length(self) -> int:
        return sum(p.length for p in self.parts)

    def __str__(self) -> str:
        return "CAT(" + ", ".join(map(str, self.parts)) + ")"


@dataclass(frozen=True, repr=False)
class Enc(Term):
    key: Term
    body: Term

    @property
    def children(self):
        return (self.key, self.body)

    @property
    def length(self) -> int:
        return self.body.length + prim.ENC_OVERHEAD

    def __str__(self) -> str:
        return f"ENC({self.key}, {self.body})"


@dataclass(frozen=True, repr=False)
class GAdd(Term):
    """Linear combination ``sum(c_i * t_i) mod p``; invertible in any single item."""

    items: tuple[tuple[int, Term], ...]
    p: int

    @property
    def children(self):
        return tuple(t for _, t in self.items)

    @property
    def length(self) -> int:
        return scalar_width(self.p)

    def __str__(self) -> str:
        out = []
        for i, (c, t) in enumerate(self.items):
            if c == 1:
                out.append(("" if i == 0 else " .+ ") + str(t))
            elif c == self.p - 1:
                out.append((".- " if i == 0 else " .- ") + str(t))
            else:
                out.append(("" if i == 0 else " .+ ") + f"{c} .* {t}")
        return "(" + "".join(out) + ")"


@dataclass(frozen=True, repr=False)
class GMul(Term):
    items: tuple[Term, ...]
    p: int

    @property
    def children(self):
        return self.items

    @property
    def length(self) -> int:
        return scalar_width(self.p)

    def __str__(self) -> str:
        return "(" + " .* ".join(map(str, self.items)) + ")"


@dataclass(frozen=True, repr=False)
class Scalar(Term):
    """Reduction of an arbitrary byte string into ``Z_p``."""

    term: Term
    p: int

    @property
    def children(self):
        return (self.term,)

    @property
    def length(self) -> int:
        return scalar_width(self.p)

    def __str__(self) -> str:
        return f"SC({self.term})"


@dataclass(frozen=True, repr=False)
class GExp(Term):
    """One-way group operation ``base^(e_1*...*e_k) mod p`` (the ECC stand-in)."""

    base: Term
    exps: tuple[Term, ...]
    p: int

    @property
    def children(self):
        return (self.base, *self.exps)

    @property
    def length(self) -> int:
        return scalar_width(self.p)

    def __str__(self) -> str:
        return "EXP(" + ", ".join(map(str, (self.base, *self.exps))) + ")"


def sort_key(t: Term) -> str:
    return str(t)


def is_scalar(t: Term, p: int) -> bool:
    if isinstance(t, Atom):
        return t.modulus == p
    if isinstance(t, (GAdd, GMul, Scalar, GExp)):
        return t.p == p
    return False


def as_scalar(t: Term, p: int) -> Term:
    return t if is_scalar(t, p) else Scalar(t, p)


# -- normal form -----------------------------------------------------------

def normalize(t: Term) -> Term:
    if isinstance(t, (Atom, Zero)):
        return t
    if isinstance(t, Xor):
        return _norm_xor(t)
    if isinstance(t, Hash):
        return Hash(tuple(normalize(a) for a in t.args), t.size)
    if isinstance(t, Cat):
        parts = []
        for part in (normalize(p) for p in t.parts):
            parts.extend(part.parts if isinstance(part, Cat) else (part,))
        return parts[0] if len(parts) == 1 else Cat(tuple(parts))
    if isinstance(t, Enc):
        return Enc(normalize(t.key), normalize(t.body))
    if isinstance(t, GAdd):
        return _norm_gadd(t)
    if isinstance(t, GMul):
        return _norm_gmul(t)
    if isinstance(t, Scalar):
        inner = normalize(t.term)
        return inner if is_scalar(inner, t.p) else Scalar(inner, t.p)
    if isinstance(t, GExp):
        base = normalize(t.base)
        exps = [as_scalar(normalize(e), t.p) for e in t.exps]
        if isinstance(base, GExp) and base.p == t.p:
            exps.extend(base.exps)
            base = base.base
        return GExp(base, tuple(sorted(exps, key=sort_key)), t.p)
    raise TypeError(f"not a term: {t!r}")


def _norm_xor(t: Xor) -> Term:
    size = t.length
    parity: dict[str, Term] = {}
    stack = list(t.items)
    while stack:
        item = normalize(stack.pop())
        if isinstance(item, Xor):
            # already normal: its items are distinct, non-xor, non-zero
            stack.extend(item.items)
            continue
        if isinstance(item, Zero):
            continue
        if item.length != size:
            raise LengthMismatch(f"xor item {item} has {item.length} bytes, expected {size}")
        key = sort_key(item)
        if key in parity:
            del parity[key]
        else:
            parity[key] = item
    if not parity:
        return Zero(size)
    items = [parity[k] for k in sorted(parity)]
    return items[0] if len(items) == 1 else Xor(tuple(items))


def _norm_gadd(t: GAdd) -> Term:
    p = t.p
    coefs: dict[str, int] = {}
    terms: dict[str, Term] = {}

    def add(c: int, item: Term):
        item = normalize(item)
        if isinstance(item, GAdd) and item.p == p:
            for c2, sub in item.items:
                add(c * c2, sub)
            return
        if isinstance(item, Zero):
            return
        item = as_scalar(item, p)
        key = sort_key(item)
        terms[key] = item
        coefs[key] = (coefs.get(key, 0) + c) % p

    for c, item in t.items:
        add(c, item)
    items = tuple((coefs[k], terms[k]) for k in sorted(coefs) if coefs[k])
    if not items:
        return Zero(scalar_width(p))
    if len(items) == 1 and items[0][0] == 1:
        return items[0][1]
    return GAdd(items, p)


def _norm_gmul(t: GMul) -> Term:
    p = t.p
    items: list[Term] = []
    for item in (normalize(i) for i in t.items):
        if isinstance(item, GMul) and item.p == p:
            items.extend(item.items)
        elif isinstance(item, Zero):
            return Zero(scalar_width(p))
        else:
            items.append(as_scalar(item, p))
    items.sort(key=sort_key)
    return items[0] if len(items) == 1 else GMul(tuple(items), p)


# -- traversal -------------------------------------------------------------

def subterms(t: Term) -> Iterator[Term]:
    yield t
    for c in t.children:
        yield from subterms(c)


def atoms(t: Term) -> set[Atom]:
    return {s for s in subterms(t) if isinstance(s, Atom)}


def depth(t: Term) -> int:
    return 1 + max((depth(c) for c in t.children), default=0)


def substitute(t: Term, mapping: Mapping[str, Term]) -> Term:
    """Replace atoms by name; the result is not normalized."""
    if isinstance(t, Atom):
        return mapping.get(t.name, t)
    if isinstance(t, Zero):
        return t
    if isinstance(t, Xor):
        return Xor(tuple(substitute(i, mapping) for i in t.items))
    if isinstance(t, Hash):
        return Hash(tuple(substitute(a, mapping) for a in t.args), t.size)
    if isinstance(t, Cat):
        return Cat(tuple(substitute(a, mapping) for a in t.parts))
    if isinstance(t, Enc):
        return Enc(substitute(t.key, mapping), substitute(t.body, mapping))
    if isinstance(t, GAdd):
        return GAdd(tuple((c, substitute(i, mapping)) for c, i in t.items), t.p)
    if isinstance(t, GMul):
        return GMul(tuple(substitute(i, mapping) for i in t.items), t.p)
    if isinstance(t, Scalar):
        return Scalar(substitute(t.term, mapping), t.p)
    if isinstance(t, GExp):
        return GExp(substitute(t.base, mapping), tuple(substitute(e, mapping) for e in t.exps), t.p)
    raise TypeError(f"not a term: {t!r}")


# -- evaluation ------------------------------------------------------------

def _int(b: bytes) -> int:
    return int.from_bytes(b, "big")


def _enc(x: int, p: int) -> bytes:
    return (x % p).to_bytes(scalar_width(p), "big")


def evaluate(t: Term, env: Mapping[str, bytes], suite: Suite = prim.DEFAULT_SUITE) -> bytes:
    """Concrete bytes of ``t`` with atoms bound by ``env``."""
    if isinstance(t, Atom):
        try:
            value = env[t.name]
        except KeyError:
            raise UnboundAtom(t.name) from None
        if len(value) != t.size:
            raise LengthMismatch(f"{t.name} bound to {len(value)} bytes, declared {t.size}")
        return value
    if isinstance(t, Zero):
        return bytes(t.size)
    if isinstance(t, Xor):
        return prim.xor_all((evaluate(i, env, suite) for i in t.items), t.length)
    if isinstance(t, Hash):
        return prim.hash_fields(*(evaluate(a, env, suite) for a in t.args), size=t.size, suite=suite)
    if isinstance(t, Cat):
        return b"".join(evaluate(p, env, suite) for p in t.parts)
    if isinstance(t, Enc):
        return prim.sym_encrypt(evaluate(t.key, env, suite), evaluate(t.body, env, suite), suite=suite)
    if isinstance(t, GAdd):
        return _enc(sum(c * _int(evaluate(i, env, suite)) for c, i in t.items), t.p)
    if isinstance(t, GMul):
        return _enc(math.prod(_int(evaluate(i, env, suite)) for i in t.items), t.p)
    if isinstance(t, Scalar):
        return _enc(_int(evaluate(t.term, env, suite)), t.p)
    if isinstance(t, GExp):
        v = _int(evaluate(t.base, env, suite))
        for e in t.exps:
            v = pow(v, _int(evaluate(e, env, suite)), t.p)
        return _enc(v, t.p)
    raise TypeError(f"not a term: {t!r}")
