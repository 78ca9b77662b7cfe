"""Deployments, simulated channels, sessions and transcripts."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from ..deduction import KnowledgeBase
from ..primitives import DEFAULT_SUITE, Suite, noisy_copy
from ..terms import Atom, Term, atoms, normalize
from .model import MessageSchema, ProtocolModel

EPOCH = 1_700_000_000
FRESHNESS_WINDOW = 5


class ProtocolError(Exception):
    pass


class MetadataOnly(ProtocolError):
    """Raised when a metadata-fidelity model is asked to execute."""


class VerificationFailure(ProtocolError):
    pass


@dataclass
class Deployment:
    model: ProtocolModel
    suite: Suite
    seed: Any
    values: dict[str, bytes]
    state: dict[str, Any] = field(default_factory=dict)
    clock: int = EPOCH
    sessions: int = 0

    def material(self, names: Iterable[str]) -> dict[str, bytes]:
        return {n: self.values[n] for n in names}

    def factor_material(self, fid: str) -> dict[str, bytes]:
        return self.material(self.model.factor(fid).material)

    def store_contents(self, sid: str) -> dict[str, bytes]:
        return self.material(self.model.store(sid).material)

    def snapshot(self) -> dict:
        return {"values": {k: v.hex() for k, v in sorted(self.values.items())},
                "state": repr(sorted(self.state.items(), key=lambda kv: kv[0]))}


@dataclass(frozen=True)
class WireMessage:
    index: int
    sender: str
    receiver: str
    values: tuple[bytes, ...]
    schema: MessageSchema
    time: int

    @property
    def plain(self) -> bool:
        return self.schema.plain

    def items(self) -> list[tuple[Term, bytes]]:
        return list(zip(self.schema.payload, self.values))

    def with_values(self, values: Iterable[bytes]) -> "WireMessage":
        return WireMessage(self.index, self.sender, self.receiver, tuple(values), self.schema, self.time)


@dataclass
class Transcript:
    protocol: str
    seed: Any
    messages: list[WireMessage] = field(default_factory=list)
    keys: dict[str, bytes | None] = field(default_factory=dict)
    accepted: dict[str, bool] = field(default_factory=dict)
    checks: list[tuple[int, str, bool]] = field(default_factory=list)
    env: dict[str, bytes] = field(default_factory=dict)
    reason: str | None = None

    @property
    def agreed(self) -> bool:
        keys = list(self.keys.values())
        return (bool(self.accepted) and all(self.accepted.values()) and bool(keys)
                and keys[0] is not None and all(k == keys[0] for k in keys))

    @property
    def session_key(self) -> bytes | None:
        return next(iter(self.keys.values()), None)

    def check_passed(self, index: int, role: str) -> bool:
        results = [ok for i, r, ok in self.checks if i == index and r == role]
        return bool(results) and all(results)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "seed": str(self.seed),
            "messages": [{"index": m.index, "from": m.sender, "to": m.receiver, "time": m.time,
                          "plain": m.plain,
                          "payload": [{"term": str(t), "hex": v.hex()} for t, v in m.items()]}
                         for m in self.messages],
            "keys": {r: (k.hex() if k else None) for r, k in sorted(self.keys.items())},
            "accepted": dict(sorted(self.accepted.items())),
            "reason": self.reason,
        }


class Channel:
    """Honest in-process channel; subclasses observe, drop or rewrite traffic."""

    def deliver(self, msg: WireMessage, session: "Session") -> WireMessage | None:
        return msg

    def reading(self, role: str, fingerprint: bytes, session: "Session") -> bytes:
        """Physical-layer measurement of the link fingerprint taken by ``role``.

        Each end flips at most ``t // 2`` bits so two readings stay within ``t``.
        """
        return noisy_copy(fingerprint, session.deployment.suite.fuzzy_t // 2, session.rng)

    def start(self, session: "Session") -> None:
        pass


HONEST = Channel()


class Session:
    def __init__(self, deployment: Deployment, channel: Channel, rng: random.Random):
        self.deployment = deployment
        self.model = deployment.model
        self.suite = deployment.suite
        self.channel = channel
        self.rng = rng
        self.transcript = Transcript(deployment.model.id, getattr(rng, "seed_label", None))
        self.env = self.transcript.env
        self.env.update({k: v for k, v in deployment.values.items() if k in self.model.decls})

    def now(self) -> int:
        return self.deployment.clock

    def tick(self, seconds: int = 1) -> None:
        self.deployment.clock += seconds

    def timestamp(self, size: int = 8) -> bytes:
        return self.now().to_bytes(size, "big")

    def fresh(self, ts: bytes) -> bool:
        return abs(self.now() - int.from_bytes(ts, "big")) <= FRESHNESS_WINDOW

    def nonce(self, name: str) -> bytes:
        atom = self.model.atom(name)
        if atom.modulus:
            value = self.rng.randrange(1, atom.modulus).to_bytes(atom.size, "big")
        else:
            value = self.rng.randbytes(atom.size)
        self.env[name] = value
        return value

    def send(self, index: int, *values: bytes) -> tuple[bytes, ...] | None:
        schema = self.model.messages[index]
        if len(values) != len(schema.payload):
            raise ProtocolError(f"message {index} expects {len(schema.payload)} values")
        msg = WireMessage(index, schema.sender, schema.receiver, tuple(values), schema, self.now())
        self.transcript.messages.append(msg)
        delivered = self.channel.deliver(msg, self)
        self.tick()
        if delivered is None:
            self.transcript.reason = f"message {index} dropped"
            return None
        return delivered.values

    def check(self, index: int, role: str, ok: bool, what: str = "verification") -> bool:
        self.transcript.checks.append((index, role, bool(ok)))
        if not ok:
            self.transcript.accepted[role] = False
            self.transcript.reason = self.transcript.reason or f"{role} rejected message {index} ({what})"
        return bool(ok)

    def accept(self, role: str, key: bytes | None) -> None:
        self.transcript.accepted[role] = True
        self.transcript.keys[role] = key

    def reject(self, role: str, why: str) -> None:
        self.transcript.accepted[role] = False
        self.transcript.keys.setdefault(role, None)
        self.transcript.reason = self.transcript.reason or why

    def finish(self) -> Transcript:
        for role in self.model.roles:
            self.transcript.accepted.setdefault(role, False)
            self.transcript.keys.setdefault(role, None)
        return self.transcript


# -- registration and sessions ----------------------------------------------

def _sample(rng: random.Random, atom: Atom) -> bytes:
    if atom.modulus:
        return rng.randrange(1, atom.modulus).to_bytes(atom.size, "big")
    return rng.randbytes(atom.size)


def register(model: ProtocolModel, rng: random.Random, suite: Suite = DEFAULT_SUITE) -> Deployment:
    """Instantiate every long-term value and let the protocol driver add its own state."""
    from .drivers import driver_for

    values: dict[str, bytes] = {}
    for d in model.decls.values():
        if d.scope != "long":
            continue
        values[d.name] = d.value if d.value is not None else _sample(rng, d.atom)
    dep = Deployment(model, suite, getattr(rng, "seed_label", None), values)
    dep.clock = EPOCH + rng.randrange(0, 86_400)
    if model.executable:
        driver_for(model.id).register(dep, rng)
    longterm = _longterm_defined(model)
    if longterm:
        full = model.complete_env(dep.values, suite)
        for name in longterm:
            dep.values.setdefault(name, full[name])
    return dep


def open_session(deployment: Deployment, channel: Channel = HONEST, rng: random.Random | None = None,
                 gap: int | None = None) -> Session:
    """Advance the clock and open a session without running any role logic."""
    model = deployment.model
    if not model.executable:
        raise MetadataOnly(f"{model.id} is modeled at metadata fidelity only")
    rng = rng or seeded(f"{deployment.seed}:session:{deployment.sessions}")
    deployment.clock += gap if gap is not None else rng.randrange(30, 90)
    deployment.sessions += 1
    session = Session(deployment, channel, rng)
    channel.start(session)
    return session


def run_session(deployment: Deployment, channel: Channel = HONEST, rng: random.Random | None = None,
                gap: int | None = None) -> Transcript:
    """Run one authentication session; ``gap`` simulated seconds elapse beforehand."""
    from .drivers import driver_for

    session = open_session(deployment, channel, rng, gap)
    driver_for(deployment.model.id).run(session)
    return session.finish()


def seeded(label: str) -> random.Random:
    rng = random.Random(label)
    rng.seed_label = label
    return rng


# -- symbolic view ----------------------------------------------------------

def compromised_names(model: ProtocolModel, adversary) -> list[str]:
    names: list[str] = []
    for fid in getattr(adversary, "factors", ()):
        names.extend(model.factor(fid).material)
    for sid in getattr(adversary, "stores", ()):
        names.extend(model.store(sid).material)
    for role in getattr(adversary, "device_read", ()):
        for f in model.factors:
            if role in f.holder:
                names.extend(f.material)
        for s in model.stores:
            if s.holder == role:
                names.extend(s.material)
    if getattr(adversary, "longterm_leak", False):
        names.extend(model.long_term_secrets())
        names.extend(n for n in model.defined if n in _longterm_defined(model))
    seen: dict[str, None] = {}
    for n in names:
        seen.setdefault(n)
    return list(seen)


def _longterm_defined(model: ProtocolModel) -> set[str]:
    out = set()
    for name, rhs in model.equations.items():
        if all(a.name in model.decls and model.decls[a.name].scope == "long" and not model.decls[a.name].noisy
               or a.name in out for a in atoms(rhs)):
            out.add(name)
    return out


def as_symbolic(model: ProtocolModel, adversary, variant: str | None = None,
                goal: Term | None = None) -> tuple[KnowledgeBase, Term | None]:
    """Knowledge base of what ``adversary`` starts with, plus the session-key goal."""
    facts: list[Term] = list(model.public_constants()) + model.clock_atoms()
    if getattr(adversary, "eavesdrop", True):
        facts.extend(model.wire_terms(plain_only=True))
    facts.extend(model.atom(n) for n in compromised_names(model, adversary))
    goal = goal if goal is not None else model.sk
    kb = KnowledgeBase.build([normalize(f) for f in facts], model.definitions(variant),
                             [goal] if goal is not None else [])
    return kb, goal


def concrete_initial(model: ProtocolModel, kb: KnowledgeBase, transcript: Transcript,
                     leaked: Mapping[str, bytes], deployment: Deployment) -> dict[Term, bytes]:
    """Byte values for a knowledge base's initial facts, taken only from adversary-visible data."""
    out: dict[Term, bytes] = {}
    for msg in transcript.messages:
        if msg.plain:
            for t, v in msg.items():
                out.setdefault(normalize(t), v)
    for a in model.public_constants():
        out[a] = deployment.values[a.name]
    for a in model.clock_atoms():
        out[a] = transcript.env[a.name]  # recomputed from the public clock
    for name, v in leaked.items():
        out[normalize(model.atom(name))] = v
    return {f: out[f] for f in kb.facts if f in out}
