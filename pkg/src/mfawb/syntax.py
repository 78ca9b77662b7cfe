"""Textual term syntax and the line-oriented fixture grammars.

Term syntax::

    H(a, b)          hash of the length-prefixed fields
    a (+) b          xor
    a .+ b .- c      addition / subtraction in Z_p (optional ``mod p``)
    a .* b, 2 .* a   multiplication in Z_p
    CAT(a, b)        raw concatenation
    ENC(k, m)        authenticated encryption
    EXP(g, x, ...)   one-way group exponentiation
    SC(a)            reduction of a byte string into Z_p
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping

from .terms import Atom, Cat, Enc, GAdd, GExp, GMul, Hash, Scalar, Term, Xor, as_scalar

_TOKEN = re.compile(
    r"\s*(?:(?P<xor>\(\+\))|(?P<gop>\.[+\-*])|(?P<int>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_']*)"
    r"|(?P<punct>[(),]))"
)
FUNCTIONS = ("H", "CAT", "ENC", "EXP", "SC")


class FixtureParseError(Exception):
    def __init__(self, message: str, line: int = 0, column: int = 0, path: str = ""):
        self.message, self.line, self.column, self.path = message, line, column, path
        where = f"{path}:" if path else ""
        super().__init__(f"{where}{line}:{column}: {message}")


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def tokenize(text: str, line: int = 0, col0: int = 0) -> list[_Tok]:
    toks, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            pos += len(text[pos:]) - len(text[pos:].lstrip())
            raise FixtureParseError(f"unexpected character {text[pos]!r}", line, col0 + pos + 1)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), col0 + m.start(kind) + 1))
        pos = m.end()
    return toks


class TermParser:
    """Recursive-descent parser; ``resolve`` maps a symbol name to its Atom."""

    def __init__(self, resolve: Callable[[str], Term], digest_len: int, modulus: int,
                 moduli: Mapping[str, int] | None = None):
        self.resolve = resolve
        self.digest_len = digest_len
        self.modulus = modulus
        self.moduli = dict(moduli or {})

    def parse(self, text: str, line: int = 0, col0: int = 0) -> Term:
        self._toks = tokenize(text, line, col0)
        self._i = 0
        self._line = line
        self._end = col0 + len(text) + 1
        t = self._expr()
        if self._i != len(self._toks):
            self._fail(f"unexpected {self._peek().text!r}")
        return t

    def parse_list(self, text: str, line: int = 0, col0: int = 0) -> list[Term]:
        """Comma-separated terms at the top level."""
        items, depth, start = [], 0, 0

        def take(chunk: str, at: int):
            if chunk.strip():
                lead = len(chunk) - len(chunk.lstrip())
                items.append(self.parse(chunk.strip(), line, col0 + at + lead))

        for i, ch in enumerate(text):
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            elif ch == "," and depth == 0:
                take(text[start:i], start)
                start = i + 1
        # an unbalanced tail is handed to the parser so it reports the error
        take(text[start:], start)
        return items

    # -- helpers

    def _peek(self) -> _Tok | None:
        return self._toks[self._i] if self._i < len(self._toks) else None

    def _fail(self, msg: str):
        tok = self._peek()
        raise FixtureParseError(msg, self._line, tok.col if tok else self._end)

    def _take(self, kind: str, text: str | None = None) -> _Tok:
        tok = self._peek()
        if tok is None or tok.kind != kind or (text is not None and tok.text != text):
            self._fail(f"expected {text or kind}")
        self._i += 1
        return tok

    def _at(self, kind: str, text: str | None = None) -> bool:
        tok = self._peek()
        return tok is not None and tok.kind == kind and (text is None or tok.text == text)

    # -- grammar

    def _expr(self) -> Term:
        items = [self._gexpr()]
        while self._at("xor"):
            self._i += 1
            items.append(self._gexpr())
        return items[0] if len(items) == 1 else Xor(tuple(items))

    def _gexpr(self) -> Term:
        sign = 1
        if self._at("gop", ".-"):
            self._i += 1
            sign = -1
        terms = [(sign, self._prod())]
        grouped = sign < 0
        while self._at("gop", ".+") or self._at("gop", ".-"):
            op = self._take("gop").text
            terms.append((1 if op == ".+" else -1, self._prod()))
            grouped = True
        p = self.modulus
        if self._at("name", "mod"):
            self._i += 1
            tok = self._peek()
            if tok is None:
                self._fail("expected modulus")
            self._i += 1
            if tok.kind == "int":
                p = int(tok.text)
            elif tok.text in self.moduli:
                p = self.moduli[tok.text]
            else:
                raise FixtureParseError(f"unknown modulus {tok.text!r}", self._line, tok.col)
            grouped = True
        if not grouped and len(terms) == 1:
            coef, t = terms[0][1]
            if coef == 1:
                return self._fix_modulus(t, p)
        items = []
        for s, (coef, t) in terms:
            items.append(((s * coef) % p, self._fix_modulus(t, p)))
        return GAdd(tuple(items), p)

    def _fix_modulus(self, t: Term, p: int) -> Term:
        if isinstance(t, GMul) and t.p != p:
            return GMul(t.items, p)
        return t

    def _prod(self) -> tuple[int, Term]:
        coef, factors = 1, []
        while True:
            if self._at("int"):
                coef *= int(self._take("int").text)
            else:
                factors.append(self._primary())
            if self._at("gop", ".*"):
                self._i += 1
                continue
            break
        if not factors:
            self._fail("coefficient without a term")
        p = self.modulus
        if len(factors) == 1:
            return coef, factors[0]
        return coef, GMul(tuple(as_scalar(f, p) for f in factors), p)

    def _args(self) -> list[Term]:
        self._take("punct", "(")
        args = [self._expr()]
        while self._at("punct", ","):
            self._i += 1
            args.append(self._expr())
        self._take("punct", ")")
        return args

    def _primary(self) -> Term:
        tok = self._peek()
        if tok is None:
            self._fail("unexpected end of term")
        if tok.kind == "punct" and tok.text == "(":
            self._i += 1
            t = self._expr()
            self._take("punct", ")")
            return t
        if tok.kind != "name":
            self._fail(f"unexpected {tok.text!r}")
        self._i += 1
        if tok.text in FUNCTIONS and self._at("punct", "("):
            args = self._args()
            return self._apply(tok, args)
        try:
            return self.resolve(tok.text)
        except KeyError:
            raise FixtureParseError(f"unknown symbol {tok.text!r}", self._line, tok.col) from None

    def _apply(self, tok: _Tok, args: list[Term]) -> Term:
        name, p = tok.text, self.modulus
        if name == "H":
            return Hash(tuple(args), self.digest_len)
        if name == "CAT":
            return Cat(tuple(args))
        if name == "ENC":
            if len(args) != 2:
                raise FixtureParseError("ENC takes a key and a body", self._line, tok.col)
            return Enc(args[0], args[1])
        if name == "EXP":
            if len(args) < 2:
                raise FixtureParseError("EXP takes a base and at least one exponent", self._line, tok.col)
            return GExp(args[0], tuple(as_scalar(a, p) for a in args[1:]), p)
        if name == "SC":
            if len(args) != 1:
                raise FixtureParseError("SC takes one argument", self._line, tok.col)
            return Scalar(args[0], p)
        raise AssertionError(name)


# -- key=value attribute lines ---------------------------------------------

def parse_attrs(text: str, line: int, col0: int) -> tuple[dict[str, str], set[str]]:
    """``k=v`` pairs plus bare flags, whitespace separated."""
    attrs, flags = {}, set()
    for m in re.finditer(r"\S+", text):
        word = m.group()
        if "=" in word:
            k, _, v = word.partition("=")
            if not k:
                raise FixtureParseError(f"malformed attribute {word!r}", line, col0 + m.start() + 1)
            attrs[k] = v
        else:
            flags.add(word)
    return attrs, flags


def split_list(value: str) -> tuple[str, ...]:
    return tuple(v for v in value.split(",") if v)


def strip_comment(raw: str) -> str:
    return raw.split("#", 1)[0].rstrip()
