"""Declarative protocol models and the fixture loader."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

from ..deduction import KnowledgeBase
from ..primitives import DEFAULT_SUITE, Suite, scalar_width
from ..syntax import FixtureParseError, TermParser, parse_attrs, split_list, strip_comment
from ..terms import Atom, Term, atoms, evaluate, is_scalar, normalize

CATEGORIES = ("knowledge", "possession", "inherent", "location", "historical-data", "puf",
              "firmware-integrity")
STORAGES = ("device", "card", "server-db", "memorized")
FIXTURE_ENV = "MFAWB_FIXTURES"


@dataclass(frozen=True)
class FactorDescriptor:
    id: str
    label: str
    category: str
    holder: tuple[str, ...]
    storage: str
    material: tuple[str, ...] = ()
    derived_from: tuple[str, ...] = ()
    protects: tuple[str, ...] = ()


@dataclass(frozen=True)
class Store:
    """Non-factor storage location (server database, device memory)."""

    id: str
    holder: str
    storage: str
    material: tuple[str, ...]


@dataclass(frozen=True)
class AtomDecl:
    atom: Atom
    scope: str  # "long" or "session"
    identity: bool = False
    timestamp: bool = False
    guessable: bool = False
    clock: bool = False  # computable by anyone from the public clock
    value: bytes | None = None
    noisy: bool = False  # physical source; every session works on a fresh noisy reading

    @property
    def name(self) -> str:
        return self.atom.name


@dataclass(frozen=True)
class MessageSchema:
    index: int
    sender: str
    receiver: str
    payload: tuple[Term, ...]
    plain: bool = True
    auth: bool = False

    def render(self) -> str:
        flags = ["plain" if self.plain else "opaque"] + (["auth"] if self.auth else [])
        return f"{self.sender} -> {self.receiver} : {', '.join(map(str, self.payload))} [{', '.join(flags)}]"


@dataclass
class ProtocolModel:
    id: str
    domain: str
    fidelity: str
    declared_adversary: str
    roles: tuple[str, ...]
    factors: list[FactorDescriptor]
    stores: list[Store]
    decls: dict[str, AtomDecl]
    equations: dict[str, Term]
    defined: dict[str, Atom]
    messages: list[MessageSchema]
    sk: Term | None
    variants: dict[str, dict[str, Term]] = field(default_factory=dict)
    fs_inputs: tuple[str, ...] = ()
    source: str = ""

    @property
    def executable(self) -> bool:
        return self.fidelity == "executable"

    @property
    def factors_label(self) -> str:
        return " + ".join(f.label for f in self.factors)

    def factor(self, fid: str) -> FactorDescriptor:
        for f in self.factors:
            if f.id == fid:
                return f
        raise KeyError(fid)

    def store(self, sid: str) -> Store:
        for s in self.stores:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def atom(self, name: str) -> Atom:
        if name in self.decls:
            return self.decls[name].atom
        return self.defined[name]

    def definitions(self, variant: str | None = None) -> dict[str, Term]:
        if variant is None:
            return dict(self.equations)
        if variant not in self.variants:
            raise KeyError(f"{self.id} has no equation variant {variant!r}")
        return dict(self.variants[variant])

    def public_constants(self) -> list[Atom]:
        return [d.atom for d in self.decls.values() if d.atom.kind == "public" and d.scope == "long"]

    def clock_atoms(self) -> list[Atom]:
        return [d.atom for d in self.decls.values() if d.clock]

    def long_term_secrets(self) -> list[str]:
        return [d.name for d in self.decls.values() if d.scope == "long" and d.atom.kind != "public"]

    def identities(self) -> list[Atom]:
        return [d.atom for d in self.decls.values() if d.identity]

    def wire_terms(self, plain_only: bool = True) -> list[Term]:
        return [t for m in self.messages if m.plain or not plain_only for t in m.payload]

    def holders_factors(self, role: str) -> list[FactorDescriptor]:
        return [f for f in self.factors if role in f.holder]

    def complete_env(self, base: Mapping[str, bytes], suite: Suite = DEFAULT_SUITE) -> dict[str, bytes]:
        """Extend an assignment of declared atoms with the value of every defined atom."""
        env = dict(base)
        pending = [n for n in self.equations if n not in env]
        while pending:
            progressed = False
            for name in list(pending):
                rhs = self.equations[name]
                if all(a.name in env for a in atoms(rhs)):
                    env[name] = evaluate(rhs, env, suite)
                    pending.remove(name)
                    progressed = True
            if not progressed:
                break
        return env


# -- loader -------------------------------------------------------------------

def fixture_dir() -> Path:
    override = os.environ.get(FIXTURE_ENV)
    if override:
        return Path(override)
    return Path(str(resources.files("mfawb") / "data" / "protocols"))


def available_protocols() -> list[str]:
    ids = []
    for p in fixture_dir().glob("*.mfa"):
        for line in p.read_text().splitlines():
            line = strip_comment(line)
            if line.startswith("protocol:"):
                ids.append(line.split(":", 1)[1].strip())
                break
    return sorted(ids, key=protocol_sort_key)


def protocol_sort_key(pid: str):
    if pid.startswith("P1") and not pid[2:].isdigit():
        return (1, 0 if pid.endswith("woFS") else 1)
    if pid == "HARDENED":
        return (99, 0)
    return (int(pid[1:]), 0)


class UnknownProtocol(KeyError):
    pass


def _find_fixture(pid: str) -> Path:
    for p in fixture_dir().glob("*.mfa"):
        for line in p.read_text().splitlines():
            line = strip_comment(line)
            if line.startswith("protocol:"):
                if line.split(":", 1)[1].strip() == pid:
                    return p
                break
    raise UnknownProtocol(pid)


@lru_cache(maxsize=None)
def _load_cached(path: str, suite: Suite) -> ProtocolModel:
    return parse_protocol(Path(path).read_text(), suite, path)


def load_model(pid: str, suite: Suite = DEFAULT_SUITE) -> ProtocolModel:
    return _load_cached(str(_find_fixture(pid)), suite)


def _sections(text: str, path: str) -> tuple[dict[str, str], dict[str, list[tuple[int, int, str]]]]:
    header: dict[str, str] = {}
    sections: dict[str, list[tuple[int, int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = strip_comment(raw)
        if not line.strip():
            continue
        stripped = line.strip()
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if current in sections:
                raise FixtureParseError(f"duplicate section [{current}]", lineno, col, path)
            sections[current] = []
            continue
        if current is None:
            key, sep, value = stripped.partition(":")
            if not sep:
                raise FixtureParseError("expected 'key: value' header", lineno, col, path)
            header[key.strip()] = value.strip()
        else:
            sections[current].append((lineno, col, stripped))
    return header, sections


def _with_path(fn):
    """Term-level parse errors carry no file name; add it on the way out."""
    def wrapped(text: str, suite: Suite = DEFAULT_SUITE, path: str = ""):
        try:
            return fn(text, suite, path)
        except FixtureParseError as exc:
            if exc.path or not path:
                raise
            raise FixtureParseError(exc.message, exc.line, exc.column, path) from None
    wrapped.__doc__, wrapped.__name__ = fn.__doc__, fn.__name__
    return wrapped


@_with_path
def parse_protocol(text: str, suite: Suite = DEFAULT_SUITE, path: str = "") -> ProtocolModel:
    header, sections = _sections(text, path)
    return _Builder(header, sections, suite, path).build()


@dataclass
class KbQuery:
    """A standalone deduction problem: facts, equations and one goal."""
    name: str
    kb: KnowledgeBase
    goal: Term
    decls: dict[str, AtomDecl]


@_with_path
def parse_kb(text: str, suite: Suite = DEFAULT_SUITE, path: str = "") -> KbQuery:
    """Parse a ``.kb`` file: [env] and [equations] as in fixtures, plus [facts] and [goal]."""
    header, sections = _sections(text, path)
    b = _Builder(header, sections, suite, path)
    unknown = set(sections) - {"env", "equations", "facts", "goal"}
    if unknown:
        b.fail(f"unknown section [{sorted(unknown)[0]}]")
    b._env()
    b._equation_sources()
    b.parser = TermParser(b._resolve, suite.digest_len, suite.modulus)
    for name in b.eq_src:
        b._define(name)
    facts: list[Term] = []
    for line, col, text_ in sections.get("facts", []):
        facts.extend(b.parser.parse_list(text_, line, col))
    goals = [b.parser.parse(t, line, col) for line, col, t in sections.get("goal", [])]
    if len(goals) != 1:
        b.fail("a knowledge-base file needs exactly one [goal] line")
    kb = KnowledgeBase.build([normalize(f) for f in facts], b.equations, goals)
    return KbQuery(header.get("name", Path(path).stem if path else "kb"), kb, goals[0], b.decls)


class _Builder:
    KNOWN_SECTIONS = {"factors", "stores", "env", "equations", "messages", "sk", "fs-inputs"}

    def __init__(self, header, sections, suite: Suite, path: str):
        self.h, self.s, self.suite, self.path = header, sections, suite, path
        self.decls: dict[str, AtomDecl] = {}
        self.eq_src: dict[str, tuple[int, int, str]] = {}
        self.defined: dict[str, Atom] = {}
        self.equations: dict[str, Term] = {}
        self._visiting: set[str] = set()

    def fail(self, msg: str, line: int = 0, col: int = 0):
        raise FixtureParseError(msg, line, col, self.path)

    def build(self) -> ProtocolModel:
        for name in self.s:
            base = name.split(":")[0]
            if base not in self.KNOWN_SECTIONS:
                self.fail(f"unknown section [{name}]")
        for key in ("protocol", "domain", "roles"):
            if key not in self.h:
                self.fail(f"missing header {key!r}")
        roles = tuple(self.h["roles"].split())
        fidelity = self.h.get("fidelity", "executable")
        if fidelity not in ("executable", "metadata"):
            self.fail(f"unknown fidelity {fidelity!r}")
        adversary = self.h.get("declared-adversary", "weak")
        if adversary not in ("weak", "strong"):
            self.fail(f"declared-adversary must be weak or strong, not {adversary!r}")
        self._env()
        self._equation_sources()
        self.parser = TermParser(self._resolve, self.suite.digest_len, self.suite.modulus)
        for name in self.eq_src:
            self._define(name)
        factors = self._factors(roles)
        stores = self._stores(roles)
        messages = self._messages(roles)
        sk = None
        for line, col, text in self.s.get("sk", []):
            sk = self.parser.parse(text, line, col)
        variants = {}
        for name in self.s:
            if name.startswith("equations:"):
                variants[name.split(":", 1)[1]] = self._variant(name)
        fs_inputs = ()
        for line, col, text in self.s.get("fs-inputs", []):
            fs_inputs += tuple(n.strip() for n in text.split(",") if n.strip())
            for n in fs_inputs:
                if n not in self.decls and n not in self.defined:
                    self.fail(f"unknown fs-input {n!r}", line, col)
        return ProtocolModel(
            id=self.h["protocol"], domain=self.h["domain"], fidelity=fidelity,
            declared_adversary=adversary, roles=roles, factors=factors, stores=stores,
            decls=self.decls, equations=self.equations, defined=self.defined,
            messages=messages, sk=sk, variants=variants, fs_inputs=fs_inputs, source=self.path)

    # -- sections

    def _env(self):
        for line, col, text in self.s.get("env", []):
            name, sep, rest = text.partition(":")
            name = name.strip()
            if not sep or not name:
                self.fail("expected 'NAME: attributes'", line, col)
            if name in self.decls:
                self.fail(f"duplicate atom {name!r}", line, col)
            attrs, flags = parse_attrs(rest, line, col + len(name) + 1)
            kind = attrs.get("kind", "secret")
            scope = attrs.get("scope", "long")
            if scope not in ("long", "session"):
                self.fail(f"scope must be long or session, not {scope!r}", line, col)
            modulus = None
            if "scalar" in flags:
                modulus = self.suite.modulus
                size = scalar_width(modulus)
            elif attrs.get("len") == "fuzzy":
                size = self.suite.fuzzy_bits // 8
            else:
                try:
                    size = int(attrs["len"])
                except (KeyError, ValueError):
                    self.fail(f"atom {name!r} needs an integer len=", line, col)
            value = None
            if "value" in attrs:
                value = int(attrs["value"]).to_bytes(size, "big")
            try:
                atom = Atom(name, kind, size, modulus)
            except Exception as exc:
                self.fail(str(exc), line, col)
            self.decls[name] = AtomDecl(atom, scope, "identity" in flags, "timestamp" in flags,
                                        "guessable" in flags, "clock" in flags, value,
                                        attrs.get("len") == "fuzzy")

    def _equation_sources(self):
        for line, col, text in self.s.get("equations", []):
            lhs, sep, rhs = text.partition(":=")
            lhs = lhs.strip()
            if not sep:
                self.fail("expected 'NAME := term'", line, col)
            if lhs in self.decls:
                self.fail(f"{lhs!r} is declared in [env] and cannot be defined", line, col)
            if lhs in self.eq_src:
                self.fail(f"duplicate definition of {lhs!r}", line, col)
            self.eq_src[lhs] = (line, col + text.index(":=") + 2 + (len(rhs) - len(rhs.lstrip())), rhs.strip())

    def _resolve(self, name: str) -> Term:
        if name in self.decls:
            return self.decls[name].atom
        if name in self.eq_src:
            return self._define(name)
        raise KeyError(name)

    def _define(self, name: str) -> Atom:
        if name in self.defined:
            return self.defined[name]
        line, col, text = self.eq_src[name]
        if name in self._visiting:
            self.fail(f"cyclic definition of {name!r}", line, col)
        self._visiting.add(name)
        saved = (self.parser._toks, self.parser._i, self.parser._line, self.parser._end) \
            if hasattr(self.parser, "_toks") else None
        rhs = self.parser.parse(text, line, col)
        if saved:
            self.parser._toks, self.parser._i, self.parser._line, self.parser._end = saved
        self._visiting.discard(name)
        p = self.suite.modulus
        atom = Atom(name, "defined", rhs.length, p if is_scalar(normalize(rhs), p) else None)
        self.defined[name] = atom
        self.equations[name] = rhs
        return atom

    def _variant(self, section: str) -> dict[str, Term]:
        eqs = dict(self.equations)
        seen: dict[str, Term] = {}
        for line, col, text in self.s[section]:
            if text.startswith("-"):
                name = text[1:].strip()
                if name not in eqs:
                    self.fail(f"cannot drop undefined {name!r}", line, col)
                del eqs[name]
                continue
            lhs, sep, rhs = text.partition(":=")
            lhs = lhs.strip()
            if not sep or lhs not in self.defined:
                self.fail("variant lines must redefine an existing atom or drop one with '-'", line, col)
            term = self.parser.parse(rhs.strip(), line, col)
            if lhs in seen and seen[lhs] != term:
                self.fail(f"conflicting variant definitions of {lhs!r}", line, col)
            seen[lhs] = eqs[lhs] = term
        return eqs

    def _names(self, values, line, col, what):
        for v in values:
            if v not in self.decls and v not in self.defined:
                self.fail(f"{what} refers to unknown atom {v!r}", line, col)
        return values

    def _factors(self, roles) -> list[FactorDescriptor]:
        out = []
        for line, col, text in self.s.get("factors", []):
            fid, _, rest = text.partition(":")
            attrs, _ = parse_attrs(rest, line, col)
            cat = attrs.get("category")
            if cat not in CATEGORIES:
                self.fail(f"factor {fid!r} has unknown category {cat!r}", line, col)
            storage = attrs.get("storage", "device")
            if storage not in STORAGES:
                self.fail(f"factor {fid!r} has unknown storage {storage!r}", line, col)
            holder = split_list(attrs.get("holder", ""))
            if not holder or any(h not in roles for h in holder):
                self.fail(f"factor {fid!r} holder must name declared roles", line, col)
            material = self._names(split_list(attrs.get("material", "")), line, col, f"factor {fid}")
            out.append(FactorDescriptor(fid.strip(), attrs.get("label", fid.strip()), cat, holder, storage,
                                        material, split_list(attrs.get("derived-from", "")),
                                        split_list(attrs.get("protects", ""))))
        ids = {f.id for f in out}
        for f in out:
            for ref in f.derived_from + f.protects:
                if ref not in ids:
                    self.fail(f"factor {f.id!r} references unknown factor {ref!r}")
        _check_factor_graph(out, self.fail)
        return out

    def _stores(self, roles) -> list[Store]:
        out = []
        for line, col, text in self.s.get("stores", []):
            sid, _, rest = text.partition(":")
            attrs, _ = parse_attrs(rest, line, col)
            holder = attrs.get("holder")
            if holder not in roles:
                self.fail(f"store {sid!r} holder must be a declared role", line, col)
            material = self._names(split_list(attrs.get("material", "")), line, col, f"store {sid}")
            out.append(Store(sid.strip(), holder, attrs.get("storage", "server-db"), material))
        return out

    def _messages(self, roles) -> list[MessageSchema]:
        out = []
        for line, col, text in self.s.get("messages", []):
            flags: set[str] = set()
            body = text
            if body.endswith("]") and "[" in body:
                body, _, flagtext = body.rpartition("[")
                flags = {f.strip() for f in flagtext[:-1].split(",") if f.strip()}
                unknown = flags - {"plain", "opaque", "auth"}
                if unknown:
                    self.fail(f"unknown message flags {sorted(unknown)}", line, col)
            route, sep, payload = body.partition(":")
            parts = route.split("->")
            if not sep or len(parts) != 2:
                self.fail("expected 'A -> B : terms [flags]'", line, col)
            sender, receiver = parts[0].strip(), parts[1].strip()
            if sender not in roles or receiver not in roles:
                self.fail("message endpoints must be declared roles", line, col)
            terms = self.parser.parse_list(payload, line, col + body.index(":") + 1)
            out.append(MessageSchema(len(out), sender, receiver, tuple(terms),
                                     plain="opaque" not in flags, auth="auth" in flags))
        return out


def _check_factor_graph(factors, fail):
    edges = {f.id: set(f.derived_from) | set(f.protects) for f in factors}
    state: dict[str, int] = {}

    def visit(n):
        if state.get(n) == 1:
            fail(f"factor dependency cycle through {n!r}")
        if state.get(n) == 2:
            return
        state[n] = 1
        for m in edges[n]:
            visit(m)
        state[n] = 2

    for n in edges:
        visit(n)
