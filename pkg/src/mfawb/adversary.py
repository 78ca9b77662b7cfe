"""Adversary capabilities: channel control, factor compromise and long-term leaks."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import primitives as prim
from .primitives import fuzzy_gen, hash_fields, noisy_copy, xor
from .protocols.drivers import ChannelFingerprint
from .protocols.model import ProtocolModel
from .protocols.runtime import Channel, Deployment, Transcript, WireMessage, compromised_names, run_session
from .terms import Term

CHANNEL_MODES = ("none", "eavesdrop", "intercept-inject", "full-mitm")


class SelectorError(ValueError):
    """The compromise selector breaks the N-1 rule or names unknown items."""


class LeakOrderError(RuntimeError):
    """Long-term material was requested before the target session finished."""


@dataclass(frozen=True)
class AdversaryModel:
    channel: str = "eavesdrop"
    factors: tuple[str, ...] = ()
    stores: tuple[str, ...] = ()
    device_read: frozenset[str] = frozenset()
    longterm_leak: bool = False
    historical_fraction: float = 1.0  # share of historical records a device read retrieves
    knows_design: bool = True

    def __post_init__(self):
        if self.channel not in CHANNEL_MODES:
            raise SelectorError(f"unknown channel mode {self.channel!r}")
        if not 0.0 <= self.historical_fraction <= 1.0:
            raise SelectorError("historical_fraction must lie in [0, 1]")
        object.__setattr__(self, "device_read", frozenset(self.device_read))

    @property
    def eavesdrop(self) -> bool:
        return self.channel != "none"

    def with_(self, **changes) -> "AdversaryModel":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return AdversaryModel(**fields)

    def validate(self, model: ProtocolModel) -> None:
        ids = {f.id for f in model.factors}
        unknown = set(self.factors) - ids
        if unknown:
            raise SelectorError(f"{model.id} has no factors {sorted(unknown)}")
        stores = {s.id for s in model.stores}
        if set(self.stores) - stores:
            raise SelectorError(f"{model.id} has no stores {sorted(set(self.stores) - stores)}")
        if set(self.device_read) - set(model.roles):
            raise SelectorError(f"{model.id} has no roles {sorted(set(self.device_read) - set(model.roles))}")
        for role in model.roles:
            held = {f.id for f in model.factors if role in f.holder}
            if held and held <= set(self.factors) and role not in self.device_read:
                raise SelectorError(f"selecting every factor of {role} needs a device read of {role}")

    def to_dict(self) -> dict:
        return {"channel": self.channel, "factors": list(self.factors), "stores": list(self.stores),
                "device_read": sorted(self.device_read), "longterm_leak": self.longterm_leak,
                "historical_fraction": self.historical_fraction}


def first_factor(model: ProtocolModel) -> str:
    return model.factors[0].id


def observe(transcript: Transcript) -> list[tuple[Term, bytes]]:
    """Exactly the values an eavesdropper sees: plaintext payloads, opaque blobs stay sealed."""
    out = []
    for msg in transcript.messages:
        if msg.plain:
            out.extend(msg.items())
    return out


def compromise(deployment: Deployment, adversary: AdversaryModel,
               after: Transcript | None = None) -> dict[str, bytes]:
    """Stored material selected by ``adversary``; long-term leaks need a finished target session."""
    model = deployment.model
    adversary.validate(model)
    if adversary.longterm_leak and (after is None or not after.accepted):
        raise LeakOrderError("long-term keys are released only after the target session completes")
    return {n: deployment.values[n] for n in compromised_names(model, adversary)}


def historical_records(deployment: Deployment, adversary: AdversaryModel) -> list[tuple[int, bytes, int]]:
    """Bounded-retrieval view of a tag table: the first ``fraction`` of its rows."""
    table = deployment.state.get("tags", [])
    keep = int(round(len(table) * adversary.historical_fraction))
    return table[:keep]


# -- channels ----------------------------------------------------------------

class ChannelTap(Channel):
    """Records traffic; in intercept-inject mode replaces chosen messages."""

    def __init__(self, mode: str = "eavesdrop"):
        if mode not in CHANNEL_MODES:
            raise SelectorError(f"unknown channel mode {mode!r}")
        self.mode = mode
        self.captured: list[WireMessage] = []
        self.injections: dict[int, tuple[bytes, ...]] = {}

    def inject(self, index: int, values) -> None:
        if self.mode == "eavesdrop":
            raise SelectorError("an eavesdropper cannot inject")
        self.injections[index] = tuple(values)

    def deliver(self, msg, session):
        self.captured.append(msg)
        if msg.index in self.injections:
            return msg.with_values(self.injections.pop(msg.index))
        return msg


class ReplayChannel(ChannelTap):
    """Substitutes a message recorded in an earlier session."""

    def __init__(self, recorded: WireMessage):
        super().__init__("intercept-inject")
        self.recorded = recorded

    def deliver(self, msg, session):
        self.captured.append(msg)
        if msg.index == self.recorded.index:
            return msg.with_values(self.recorded.values)
        return msg


# -- P10 man in the middle ---------------------------------------------------

@dataclass
class DualTranscript:
    transcript: Transcript
    device_accepts: bool
    gateway_accepts: bool
    sk_device_side: bytes | None
    sk_gateway_side: bytes | None
    recovered: dict[str, bytes] = field(default_factory=dict)
    identified: bytes | None = None
    log: list[str] = field(default_factory=list)

    @property
    def established(self) -> bool:
        tr = self.transcript
        return (self.device_accepts and self.gateway_accepts
                and self.sk_device_side == tr.keys.get("D") and self.sk_gateway_side == tr.keys.get("G"))


class FingerprintMitm(Channel):
    """Sits on both links of the device-gateway exchange with its own channel fingerprints."""

    def __init__(self, id_candidates, rng: random.Random, suite: prim.Suite):
        self.ids = tuple(id_candidates)
        self.rng = rng
        self.suite = suite
        nbytes = suite.fuzzy_bits // 8
        self.link_a = rng.randbytes(nbytes)  # device <-> adversary
        self.link_b = rng.randbytes(nbytes)  # adversary <-> gateway
        self.k: dict[str, bytes] = {}
        self.log: list[str] = []
        self.identified: bytes | None = None

    def H(self, *fields):
        return hash_fields(*fields, suite=self.suite)

    def reading(self, role, fingerprint, session):
        link = self.link_a if role == "D" else self.link_b
        return noisy_copy(link, self.suite.fuzzy_t // 2, session.rng)

    def deliver(self, msg, session):
        return getattr(self, f"_m{msg.index}")(msg)

    def _m0(self, msg):
        M_1, M_2, ts_a = msg.values
        mine = noisy_copy(self.link_a, self.suite.fuzzy_t // 2, self.rng)
        found = ChannelFingerprint.identify(self.suite, self.ids, M_1, M_2, ts_a, mine)
        if found is None:
            # without the right ID_s nothing decodes; continue with guesses
            id_s = self.ids[0] if self.ids else self.rng.randbytes(32)
            r_a = xor(M_1, self.H(id_s, ts_a))
            tau = xor(M_2, r_a)
            sigma = self.rng.randbytes(self.suite.digest_len)
            self.log.append("helper string did not decode under any candidate ID_s")
        else:
            id_s, r_a, tau, sigma = found
            self.identified = id_s
            self.log.append("R_A = M_3a (+) M_1; tau = M_2 (+) R_A; sigma' = Rep(N_0A, tau)")
        pair_b = fuzzy_gen(noisy_copy(self.link_b, self.suite.fuzzy_t // 2, self.rng), self.rng, self.suite)
        self.k.update(ID_s=id_s, R_A=r_a, tau=tau, sigma_a=sigma, sigma_b=pair_b.sigma, TS_A=ts_a)
        self.log.append("Gen(N_0B) = (sigma_a, tau_a); M_2a = R_A (+) tau_a")
        return msg.with_values((M_1, xor(r_a, pair_b.tau), ts_a))

    def _m1(self, msg):
        M_4, M_5, ts_b = msg.values
        k = self.k
        r_b = xor(M_4, self.H(k["ID_s"], ts_b, k["TS_A"], k["R_A"]))
        sk_g = self.H(k["ID_s"], k["TS_A"], ts_b, k["R_A"], r_b, k["sigma_b"])
        sk_d = self.H(k["ID_s"], k["TS_A"], ts_b, k["R_A"], r_b, k["sigma_a"])
        k.update(R_B=r_b, SK=sk_g, SK_a=sk_d)
        ok = M_5 == self.H(prim.xor_all((sk_g, k["R_A"], r_b), len(sk_g)))
        self.log.append(f"gateway key confirmed by M_5: {ok}; M_5a = h(SK_a (+) R_A (+) R_B)")
        return msg.with_values((M_4, self.H(prim.xor_all((sk_d, k["R_A"], r_b), len(sk_d))), ts_b))

    def _m2(self, msg):
        M_8, ts = msg.values
        k = self.k
        ok = M_8 == self.H(k["SK_a"], k["ID_s"])
        self.log.append(f"device key confirmed by M_8: {ok}; M_8a = h(SK || ID_s)")
        return msg.with_values((self.H(k["SK"], k["ID_s"]), ts))


def mitm_session(deployment: Deployment, adversary: AdversaryModel, rng: random.Random,
                 id_candidates=None) -> DualTranscript:
    """Full man-in-the-middle run against the channel-fingerprint protocol."""
    if deployment.model.id != "P10":
        raise SelectorError("the relay attack is defined for P10 only")
    if adversary.channel != "full-mitm":
        raise SelectorError("mitm_session needs a full-mitm channel")
    if id_candidates is None:
        known = compromise(deployment, adversary)
        id_candidates = deployment.state["gateway_ids"] if "G" in adversary.device_read or \
            "G.db" in adversary.stores else ()
        if "ID_s" in known and known["ID_s"] not in id_candidates:
            id_candidates = (known["ID_s"], *id_candidates)
    mitm = FingerprintMitm(id_candidates, rng, deployment.suite)
    tr = run_session(deployment, mitm, rng)
    k = mitm.k
    return DualTranscript(tr, tr.accepted.get("D", False), tr.accepted.get("G", False),
                          k.get("SK_a"), k.get("SK"),
                          {n: k[n] for n in ("R_A", "tau", "R_B") if n in k}, mitm.identified, mitm.log)
