"""Scripted attacks, each paired with a symbolic derivation that must agree with it."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Mapping

from . import primitives as prim
from .adversary import (AdversaryModel, ChannelTap, ReplayChannel, compromise, historical_records, mitm_session,
                        observe)
from .deduction import DerivationTrace, derivable, replay
from .primitives import DEFAULT_SUITE, Suite, hash_fields, sym_decrypt, xor
from .protocols.drivers import driver_for
from .protocols.model import ProtocolModel, load_model
from .protocols.runtime import (Deployment, HONEST, MetadataOnly, Transcript, as_symbolic, compromised_names,
                                concrete_initial, open_session, register, run_session, seeded)
from .terms import atoms

# a 6-bit sensor alphabet gives roughly 5.95 bits per byte, inside the 4.52..7.80 band
SENSOR_ALPHABET_BITS = 6
SENSOR_SAMPLES = 4096
ENTROPY_BAND = (4.52, 7.80)
REPLAY_DELAY = 120
DICTIONARY_SIZE = 1000


class AttackError(Exception):
    pass


class PrerequisiteUnmet(AttackError):
    """The adversary lacks material the attack declares as required."""


class AttackInapplicable(AttackError):
    """The attack targets a different protocol."""


@dataclass
class AttackOutcome:
    attack_id: str
    protocol: str
    success: bool
    recovered: dict[str, bytes] = field(default_factory=dict)
    expected: dict[str, bytes] = field(default_factory=dict)
    criteria: tuple[str, ...] = ()
    findings: dict[str, bool] = field(default_factory=dict)
    trace: DerivationTrace | None = None
    log: list[str] = field(default_factory=list)
    symbolic: dict[str, dict] = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def symbolic_agrees(self) -> bool:
        return all(v["agrees"] for v in self.symbolic.values())

    def to_dict(self) -> dict:
        return {
            "attack": self.attack_id,
            "protocol": self.protocol,
            "success": self.success,
            "criteria": list(self.criteria),
            "recovered": {k: v.hex() for k, v in sorted(self.recovered.items())},
            "expected": {k: v.hex() for k, v in sorted(self.expected.items())},
            "findings": dict(sorted(self.findings.items())),
            "symbolic": {k: dict(v) for k, v in sorted(self.symbolic.items())},
            "symbolic_agrees": self.symbolic_agrees,
            "trace": self.trace.to_dict() if self.trace else None,
            "log": list(self.log),
            "details": self.details,
        }


@dataclass
class AttackContext:
    spec: "AttackSpec"
    model: ProtocolModel
    deployment: Deployment
    adversary: AdversaryModel
    rng: random.Random
    suite: Suite
    leaked: dict[str, bytes] = field(default_factory=dict)
    guessed: list[str] = field(default_factory=list)
    log: list[str] = field(default_factory=list)

    def observed_session(self, gap: int | None = None) -> Transcript:
        """One honest session recorded by a passive tap."""
        return run_session(self.deployment, ChannelTap("eavesdrop"), self.rng, gap)

    def leak(self, after: Transcript | None = None) -> dict[str, bytes]:
        self.leaked = compromise(self.deployment, self.adversary, after)
        return self.leaked

    def known(self, name: str) -> bytes:
        """Compromised value of ``name``; without it the adversary can only guess."""
        if name in self.leaked:
            return self.leaked[name]
        self.guessed.append(name)
        self.log.append(f"{name} not compromised; guessing")
        atom = self.model.atom(name)
        if atom.modulus:
            return self.rng.randrange(1, atom.modulus).to_bytes(atom.size, "big")
        return self.rng.randbytes(atom.size)

    def H(self, *fields: bytes) -> bytes:
        return hash_fields(*fields, suite=self.suite)


@dataclass
class ScriptResult:
    recovered: dict[str, bytes] = field(default_factory=dict)
    expected: dict[str, bytes] = field(default_factory=dict)
    findings: dict[str, bool] = field(default_factory=dict)
    transcript: Transcript | None = None  # session the symbolic replay is checked against
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AttackSpec:
    id: str
    protocols: tuple[str, ...]
    criteria: tuple[str, ...]
    adversary: AdversaryModel
    required: tuple[str, ...]  # material names the adversary must hold
    withhold: str | None  # factor or store whose removal should defeat the attack
    goals: tuple[str, ...]
    script: Callable[[AttackContext], ScriptResult]
    anchor: str
    variant: str | None = None

    def without_required(self, model: ProtocolModel) -> AdversaryModel:
        adv = self.adversary
        if self.withhold is None:
            return adv
        if any(f.id == self.withhold for f in model.factors):
            return adv.with_(factors=tuple(f for f in adv.factors if f != self.withhold))
        return adv.with_(stores=tuple(s for s in adv.stores if s != self.withhold))


REGISTRY: dict[str, AttackSpec] = {}


def attack(id: str, protocols, criteria, adversary: AdversaryModel, anchor: str, required=(), withhold=None,
           goals=(), variant=None):
    def wrap(fn):
        REGISTRY[id] = AttackSpec(id, tuple(protocols), tuple(criteria), adversary, tuple(required), withhold,
                                  tuple(goals), fn, anchor, variant)
        return fn
    return wrap


def attacks_for(pid: str) -> list[AttackSpec]:
    return [spec for spec in REGISTRY.values() if pid in spec.protocols]


# -- helpers -----------------------------------------------------------------

def split_concat_fixed_len(blob: bytes, prefix_len: int) -> tuple[bytes, bytes]:
    """Undo a concatenation whose first part has a known fixed length."""
    if not 0 <= prefix_len <= len(blob):
        raise ValueError(f"prefix length {prefix_len} outside 0..{len(blob)}")
    return blob[:prefix_len], blob[prefix_len:]


def wire(transcript: Transcript) -> dict[str, bytes]:
    """Plaintext wire values by term name (first occurrence wins)."""
    out: dict[str, bytes] = {}
    for term, value in observe(transcript):
        out.setdefault(str(term), value)
    return out


def honest_value(model: ProtocolModel, transcript: Transcript, deployment: Deployment, name: str) -> bytes:
    if name == "SK" or model.sk is not None and name == str(model.sk):
        return transcript.session_key
    env = {**deployment.values, **transcript.env}
    if name in env:
        return env[name]
    return model.complete_env(env, deployment.suite)[name]


def symbolic_check(model: ProtocolModel, adversary: AdversaryModel, transcript: Transcript,
                   leaked: Mapping[str, bytes], deployment: Deployment, goals: Mapping[str, bytes],
                   expected: Mapping[str, bytes], variant: str | None = None,
                   ) -> tuple[dict[str, dict], DerivationTrace | None]:
    """Derive each goal symbolically and replay the derivation on the observed bytes.

    A goal agrees when either the derivation exists and its replay equals the concrete
    recovery, or no derivation exists and the concrete attack also missed the value.
    """
    report: dict[str, dict] = {}
    first: DerivationTrace | None = None
    for name, concrete in goals.items():
        target = model.sk if name == "SK" else model.atom(name)
        kb, _ = as_symbolic(model, adversary, variant, goal=target)
        trace = derivable(kb, target, deployment.suite)
        entry = {"derivable": trace is not None}
        if trace is not None:
            initial = concrete_initial(model, kb, transcript, leaked, deployment)
            value = replay(trace, initial, deployment.suite)
            entry["steps"] = len(trace)
            entry["replay_matches"] = value == concrete
            entry["agrees"] = value == concrete == expected[name]
            first = first or trace
        else:
            entry["agrees"] = concrete != expected[name]
        report[name] = entry
    return report, first


def _prerequisites(spec: AttackSpec, model: ProtocolModel, adversary: AdversaryModel) -> list[str]:
    held = set(compromised_names(model, adversary))
    return [n for n in spec.required if n not in held]


def run_attack(attack_id: str, protocol: str | None = None, seed=0, trial: int = 0,
               adversary: AdversaryModel | None = None, suite: Suite = DEFAULT_SUITE,
               enforce_prerequisites: bool = True, deployment: Deployment | None = None) -> AttackOutcome:
    """Run one seeded trial of a registered attack against a fresh (or given) deployment."""
    try:
        spec = REGISTRY[attack_id]
    except KeyError:
        raise AttackInapplicable(f"no attack named {attack_id!r}") from None
    protocol = protocol or spec.protocols[0]
    if protocol not in spec.protocols:
        raise AttackInapplicable(f"{attack_id} targets {', '.join(spec.protocols)}, not {protocol}")
    model = load_model(protocol, suite)
    adversary = adversary or spec.adversary
    adversary.validate(model)
    missing = _prerequisites(spec, model, adversary)
    if missing and enforce_prerequisites:
        raise PrerequisiteUnmet(f"{attack_id} needs {', '.join(missing)} compromised")
    rng = seeded(f"{seed}:{attack_id}:{protocol}:{trial}")
    deployment = deployment or register(model, rng, suite)
    ctx = AttackContext(spec, model, deployment, adversary, rng, suite)
    result = spec.script(ctx)
    outcome = AttackOutcome(attack_id, protocol, False, result.recovered, result.expected, spec.criteria,
                            result.findings, log=ctx.log, details=dict(result.details))
    if ctx.guessed:
        outcome.details["guessed"] = sorted(set(ctx.guessed))
    if spec.goals and result.transcript is not None:
        goals = {n: result.recovered[n] for n in spec.goals}
        outcome.symbolic, outcome.trace = symbolic_check(model, adversary, result.transcript, ctx.leaked,
                                                         deployment, goals, result.expected, spec.variant)
    outcome.success = _succeeded(outcome)
    return outcome


def _succeeded(outcome: AttackOutcome) -> bool:
    if not outcome.findings and not outcome.expected:
        return False
    return all(outcome.findings.values()) and all(
        outcome.recovered.get(k) == v for k, v in outcome.expected.items())


def _key_result(ctx: AttackContext, tr: Transcript, recovered: dict[str, bytes]) -> ScriptResult:
    expected = {n: honest_value(ctx.model, tr, ctx.deployment, n) for n in recovered}
    return ScriptResult(recovered, expected, transcript=tr)


# -- P1 ----------------------------------------------------------------------

_P1 = ("P1woFS", "P1FS")


@attack("A1-mutualauth", _P1, ("C1",), AdversaryModel("intercept-inject"),
        "no explicit client authentication message")
def _a1_mutualauth(ctx: AttackContext) -> ScriptResult:
    model = ctx.model
    client = model.roles[0]
    client_auth = any(m.auth and m.sender == client for m in model.messages)
    # forge the client's hello with a previously observed identity and a fresh sid
    earlier = ctx.observed_session()
    hello = list(earlier.messages[0].values)
    hello[1] = ctx.rng.randbytes(len(hello[1]))
    tap = ChannelTap("intercept-inject")
    tap.inject(0, hello)
    tr = run_session(ctx.deployment, tap, ctx.rng)
    ctx.log.append("replayed ID_C with a fresh sid; the server never checks a client authenticator")
    return ScriptResult(findings={"no client-originated authenticator": not client_auth,
                                  "server engaged the forged client": tr.check_passed(0, "S")
                                  and tr.accepted.get("S", False)},
                        details={"forged_session_key_at_server": (tr.keys.get("S") or b"").hex()})


@attack("A1-tagchain", _P1, ("C3", "C4"), AdversaryModel("eavesdrop", factors=("TGK", "HD")),
        "authentication tags recomputable from K and the historical data", required=("K", "d_1"),
        withhold="TGK", goals=("t_1",))
def _a1_tagchain(ctx: AttackContext) -> ScriptResult:
    tr = ctx.observed_session()
    ctx.leak(after=tr)
    grp = prim.ModGroup(ctx.suite.modulus)
    K = int.from_bytes(ctx.known("K"), "big") % grp.p
    rows = historical_records(ctx.deployment, ctx.adversary)
    if "d_1" not in ctx.leaked:
        rows = []
    matched = [tag == prim.tag_generate(K, d_i, i, grp, ctx.suite) for i, d_i, tag in rows]
    t_1 = grp.to_bytes(prim.tag_generate(K, ctx.known("d_1"), 1, grp, ctx.suite))
    ctx.log.append(f"recomputed {sum(matched)} of {len(rows)} retrieved tags from K and d_i")
    result = _key_result(ctx, tr, {"t_1": t_1})
    result.findings = {"every retrieved tag recomputed": bool(rows) and all(matched)}
    result.details = {"rows_retrieved": len(rows), "rows_recomputed": sum(matched),
                      "historical_fraction": ctx.adversary.historical_fraction}
    return result


@attack("A1-entropy", _P1, ("C4",), AdversaryModel("eavesdrop"),
        "historical sensor data with per-byte entropy between 4.52 and 7.80")
def _a1_entropy(ctx: AttackContext) -> ScriptResult:
    stream = prim.sensor_stream(SENSOR_ALPHABET_BITS, SENSOR_SAMPLES, ctx.rng)
    entropy = prim.shannon_entropy(stream)
    lo, hi = ENTROPY_BAND
    ctx.log.append(f"sensor stream entropy {entropy:.3f} bits/byte")
    return ScriptResult(findings={"entropy inside the reported band": lo <= entropy <= hi,
                                  "flagged as low entropy": prim.low_entropy(stream)},
                        details={"entropy": round(entropy, 4)})


# -- P2 ----------------------------------------------------------------------

@attack("A2-sk", ("P2",), ("C4", "C7"), AdversaryModel("eavesdrop", factors=("PW",)),
        "session key computed from the pseudonym and the server nonce", required=("ID_i",), withhold="PW",
        goals=("SK",))
def _a2(ctx: AttackContext) -> ScriptResult:
    tr = ctx.observed_session()
    ctx.leak(after=tr)
    w = wire(tr)
    v_1 = xor(w["GID_i"], ctx.known("ID_i"))
    ctx.log.append("V_1 = GID_i (+) ID_i; SK = M_2 (+) V_1")
    return _key_result(ctx, tr, {"SK": xor(w["M_2"], v_1)})


# -- P3 ----------------------------------------------------------------------

@attack("A3-sk", ("P3",), ("C4", "C7"), AdversaryModel("eavesdrop", factors=("LSK",)),
        "X = Y - H(r1||r2) once mk unmasks both nonces", required=("mk",), withhold="LSK", goals=("SK",))
def _a3(ctx: AttackContext) -> ScriptResult:
    tr = ctx.observed_session()
    ctx.leak(after=tr)
    w = wire(tr)
    grp = prim.ModGroup(ctx.suite.modulus)
    mk = ctx.known("mk")
    r1, r2 = xor(w["R1"], mk), xor(w["R2"], mk)
    x = grp.to_bytes((int.from_bytes(w["Y"], "big") - grp.to_scalar(ctx.H(r1, r2))) % grp.p)
    sk = ctx.H(mk, r1, r2, x, w["TID_c"], ctx.deployment.values["spk_s"])
    ctx.log.append("r1 = R1 (+) mk; r2 = R2 (+) mk; X = Y - H(r1, r2); SK = H(mk, r1, r2, X, TID_c, spk_s)")
    result = _key_result(ctx, tr, {"SK": sk})
    # under the literal reading r2 never reaches the wire and the derivation must fail
    kb, goal = as_symbolic(ctx.model, ctx.adversary, "literal")
    result.details["literal_reading_derivable"] = derivable(kb, goal, ctx.suite) is not None
    return result


# -- P4 ----------------------------------------------------------------------

@attack("A4-sk+deanon", ("P4",), ("C4", "C6", "C7"), AdversaryModel("eavesdrop", factors=("PW", "SC")),
        "fixed-length hash prefix of l_10 exposes ID_ur", required=("U_rg",), withhold="SC",
        goals=("ID_ur", "SK"))
def _a4(ctx: AttackContext) -> ScriptResult:
    tr = ctx.observed_session()
    ctx.leak(after=tr)
    w = wire(tr)
    _, id_ur = split_concat_fixed_len(w["l_10"], ctx.suite.digest_len)
    ctx.log.append("ID_ur = l_10 without its leading L_h bytes")
    sk = ctx.H(id_ur, w["ID_sn"], ctx.known("U_rg"), ctx.H(id_ur, w["N_ur"]), w["hRN"], w["TS_1"], w["TS_5"])
    ctx.log.append("K_ss = H(ID_ur, ID_sn, U_rg, H(ID_ur, N_ur), h(RN_sc), TS_1, TS_5)")
    return _key_result(ctx, tr, {"ID_ur": id_ur, "SK": sk})


# -- P5 ----------------------------------------------------------------------

@attack("A5-sk", ("P5",), ("C4", "C7"), AdversaryModel("eavesdrop", stores=("S.key",)),
        "w_i = h(MID||x_s) from the plaintext MID", required=("x_s",), withhold="S.key", goals=("SK",))
def _a5(ctx: AttackContext) -> ScriptResult:
    tr = ctx.observed_session()
    ctx.leak(after=tr)
    w = wire(tr)
    w_i = ctx.H(w["MID"], ctx.known("x_s"))
    ctx.log.append("w_i = H(MID, x_s); S_key = H(w_i, MID, Id_SN)")
    return _key_result(ctx, tr, {"SK": ctx.H(w_i, w["MID"], w["Id_SN"])})


# -- P6 ----------------------------------------------------------------------

@attack("A6-sk", ("P6",), ("C4", "C7"), AdversaryModel("eavesdrop", factors=("PW",)),
        "SK_ij = h(Y_RC||SID_j||T_3) after unmasking T_1 and the nonce", required=("PID_i", "ID_i"),
        withhold="PW", goals=("SK",))
def _a6(ctx: AttackContext) -> ScriptResult:
    tr = ctx.observed_session()
    ctx.leak(after=tr)
    w = wire(tr)
    hid = ctx.H(ctx.known("PID_i"))
    t_1 = xor(w["T_1p"], hid)
    nonce = xor(w["R_rand2p"], ctx.known("ID_i"))
    y = ctx.H(w["SID_j"], hid, nonce, t_1)
    ctx.log.append("T_1 = T_1p (+) H(PID_i); R_rand2 = R_rand2p (+) ID_i; Y = H(SID_j, HID, R_rand2, T_1)")
    return _key_result(ctx, tr, {"SK": ctx.H(y, w["SID_j"], w["T_3"])})


# -- P7 ----------------------------------------------------------------------

class NullServer(ChannelTap):
    """Answers the client with the expected reply shape and no key material."""

    def __init__(self):
        super().__init__("intercept-inject")
        self.served = 0

    def server(self, session, got):
        self.served += 1
        return (session.deployment.values["ACK"],)


@attack("A7-serverimp", ("P7",), ("C1", "C7"), AdversaryModel("intercept-inject"),
        "client never verifies the server")
def _a7(ctx: AttackContext) -> ScriptResult:
    null = NullServer()
    tr = run_session(ctx.deployment, null, ctx.rng)
    server_checked = any(role == "S" for _, role, _ in tr.checks)
    ctx.log.append("null server replied with the public acknowledgement only")
    return ScriptResult(findings={"client accepted": tr.accepted.get("C", False),
                                  "server never verified": not server_checked and null.served == 1})


# -- P8 ----------------------------------------------------------------------

@attack("A8-anon+pfs", ("P8",), ("C1", "C3", "C4", "C5", "C6", "C7"),
        AdversaryModel("intercept-inject", stores=("U.dev",)),
        "ID_U sent in plain and R_U protected only by K_X", required=("K_X",), withhold="U.dev",
        goals=("ID_U", "R_U", "SK"))
def _a8(ctx: AttackContext) -> ScriptResult:
    suite, drv = ctx.suite, driver_for("P8")
    tr = ctx.observed_session()
    ctx.leak(after=tr)
    w = wire(tr)
    k_x = ctx.known("K_X")
    L = suite.digest_len
    try:
        body_u = sym_decrypt(k_x, w["C_U"], suite)
        body_g = sym_decrypt(k_x, w["C_G"], suite)
    except prim.AuthenticationFailure:
        ctx.log.append("ciphertexts do not open under the guessed K_X")
        body_u = body_g = bytes(2 * L)
    h_u, r_u, r_g = body_u[:L], body_u[L:], body_g[:L]
    sk = ctx.H(w["ID_U"], r_u, r_g)
    ctx.log.append("H_U || R_U = DEC(K_X, C_U); R_G = DEC(K_X, C_G)[:L]; SK = H(ID_U, R_U, R_G)")
    result = _key_result(ctx, tr, {"ID_U": w["ID_U"], "R_U": r_u, "SK": sk})

    # impersonate the user in a new session with K_X and the recovered H_U
    s = open_session(ctx.deployment, HONEST, ctx.rng)
    r_adv = ctx.rng.randbytes(L)
    t1 = s.timestamp(8)
    forged = False
    got = s.send(0, w["ID_U"], prim.sym_encrypt(k_x, h_u + r_adv, suite=suite), t1)
    reply = drv.gateway_hello(s, got)
    if reply is not None:
        c_g, t2 = s.send(1, *reply)
        r_g2 = sym_decrypt(k_x, c_g, suite)[:L]
        sk_adv = ctx.H(w["ID_U"], r_adv, r_g2)
        drv.gateway_confirm(s, s.send(2, ctx.H(sk_adv, h_u, t2)))
        forged_tr = s.finish()
        forged = forged_tr.accepted.get("G", False) and forged_tr.keys.get("G") == sk_adv
    ctx.log.append(f"gateway accepted the forged user: {forged}")
    result.findings = {"gateway accepts impersonation": forged}
    return result


# -- P9 ----------------------------------------------------------------------

def guessing_oracles(model: ProtocolModel, known: set[str]) -> list[tuple[str, str]]:
    """Stored verifiers ``V := H(...)`` whose only unknown input is one guessable secret."""
    out = []
    for name, rhs in model.equations.items():
        if name not in known:
            continue
        unknown = {a.name for a in atoms(rhs)} - known
        if len(unknown) == 1:
            (secret,) = unknown
            decl = model.decls.get(secret)
            if decl is not None and decl.guessable:
                out.append((name, secret))
    return out


@attack("A9-audit", ("P9",), ("C3", "C4", "C5", "C7"),
        AdversaryModel("eavesdrop", factors=("BD",), stores=("MP.card",)),
        "credentials stored in the smart card", required=("CRED", "B_MP"), withhold="MP.card", goals=())
def _a9(ctx: AttackContext) -> ScriptResult:
    model, dep = ctx.model, ctx.deployment
    dependent = [f.id for f in model.factors if f.derived_from or f.protects]
    public = {str(t) for t in model.wire_terms(plain_only=True)}
    fs_public = [n for n in model.fs_inputs if n in public]
    leak_kb, _ = as_symbolic(model, AdversaryModel("eavesdrop", longterm_leak=True))
    fs_known = {n: derivable(leak_kb, model.atom(n), ctx.suite) is not None for n in model.fs_inputs}

    # offline guessing: a dictionary-chosen password checked against the card verifier
    ctx.leaked = compromise(dep, ctx.adversary)
    words = [f"pw-{ctx.rng.randrange(10 ** 9):09d}".encode().ljust(16, b"\0") for _ in range(DICTIONARY_SIZE)]
    dep.values["PW_MP"] = ctx.rng.choice(words)
    dep.values["CRED"] = ctx.H(dep.values["ID_MP"], dep.values["PW_MP"], dep.values["B_MP"])
    ctx.leaked = compromise(dep, ctx.adversary)
    oracles = guessing_oracles(model, set(ctx.leaked))
    cred, id_mp, b_mp = ctx.known("CRED"), ctx.known("ID_MP"), ctx.known("B_MP")
    found = next((pw for pw in words if ctx.H(id_mp, pw, b_mp) == cred), None)
    ctx.log.append(f"dependent factors {dependent}; public fs inputs {fs_public}; "
                   f"guessing oracles {oracles}")
    return ScriptResult(
        recovered={"PW_MP": found or b""}, expected={"PW_MP": dep.values["PW_MP"]},
        findings={"factor dependence": bool(dependent),
                  "fs input sent in plain": bool(fs_public),
                  "every fs input known after a long-term leak": all(fs_known.values()),
                  "offline guessing oracle": bool(oracles)},
        details={"dependent_factors": dependent, "public_fs_inputs": fs_public,
                 "fs_inputs_known": fs_known, "oracles": [list(o) for o in oracles],
                 "dictionary_size": DICTIONARY_SIZE})


# -- P10 ---------------------------------------------------------------------

@attack("A10-mitm+pfs", ("P10",), ("C1", "C4", "C5", "C6", "C7"),
        AdversaryModel("full-mitm", stores=("G.db",)),
        "relay with own fingerprints once ID_s is known", required=("ID_s",), withhold="G.db",
        goals=("R_A", "tau"))
def _a10(ctx: AttackContext) -> ScriptResult:
    ctx.leaked = compromise(ctx.deployment, ctx.adversary)
    dual = mitm_session(ctx.deployment, ctx.adversary, ctx.rng,
                        id_candidates=() if "ID_s" not in ctx.leaked else None)
    ctx.log.extend(dual.log)
    tr = dual.transcript
    env = tr.env
    honest_tau = xor(env["N0"], env["CW"])
    result = ScriptResult({"R_A": dual.recovered.get("R_A", b""), "tau": dual.recovered.get("tau", b"")},
                          {"R_A": env["R_A"], "tau": honest_tau}, transcript=tr)
    pfs = pfs_experiment("P10", seed=ctx.rng.getrandbits(32), suite=ctx.suite)
    result.findings = {"both ends accept the relay": dual.established,
                       "device identified": dual.identified == ctx.deployment.values["ID_s"],
                       "past key recovered after long-term leak": pfs.success}
    result.details = {"pfs": {"success": pfs.success, "symbolic_agrees": pfs.symbolic_agrees}}
    return result


# -- forward secrecy ---------------------------------------------------------

def _pfs_p1(ctx: AttackContext, tr: Transcript) -> bytes:
    w = wire(tr)
    inputs = [ctx.known("mk"), w["sid"], w["Y"]]
    if ctx.model.id == "P1FS":
        # g^(x_C x_S) needs an ephemeral exponent the leak does not contain
        inputs.append(ctx.known("DH") if "DH" in ctx.leaked else
                      prim.ModGroup(ctx.suite.modulus).to_bytes(ctx.rng.randrange(1, ctx.suite.modulus)))
    return ctx.H(*inputs)


def _pfs_p8(ctx: AttackContext, tr: Transcript) -> bytes:
    w = wire(tr)
    L = ctx.suite.digest_len
    r_u = sym_decrypt(ctx.known("K_X"), w["C_U"], ctx.suite)[L:]
    r_g = sym_decrypt(ctx.known("K_X"), w["C_G"], ctx.suite)[:L]
    return ctx.H(w["ID_U"], r_u, r_g)


def _pfs_p10(ctx: AttackContext, tr: Transcript) -> bytes:
    w = wire(tr)
    id_s = ctx.known("ID_s")
    r_a = xor(w["M_1"], ctx.H(id_s, w["TS_A"]))
    tau = xor(w["M_2"], r_a)
    reading = prim.fuzzy_recover(ctx.known("N0"), tau, ctx.suite)
    # the symbolic N0 stands for the session reading, which Rep reconstructs exactly
    ctx.leaked["N0"] = reading
    r_b = xor(w["M_4"], ctx.H(id_s, w["TS_B"], w["TS_A"], r_a))
    return ctx.H(id_s, w["TS_A"], w["TS_B"], r_a, r_b, ctx.H(reading))


PFS_SCRIPTS: dict[str, Callable[[AttackContext, Transcript], bytes]] = {
    "P1woFS": _pfs_p1, "P1FS": _pfs_p1, "P8": _pfs_p8, "P10": _pfs_p10}

PFS_ADVERSARY = AdversaryModel("eavesdrop", longterm_leak=True)


def pfs_experiment(protocol: str, seed=0, trial: int = 0, suite: Suite = DEFAULT_SUITE,
                   deployment: Deployment | None = None) -> AttackOutcome:
    """Record a session, then leak every long-term secret and try to rebuild its key."""
    model = load_model(protocol, suite)
    if not model.executable:
        raise MetadataOnly(f"{protocol} has no executable session")
    rng = seeded(f"{seed}:pfs:{protocol}:{trial}")
    dep = deployment or register(model, rng, suite)
    spec = AttackSpec("PFS", (protocol,), ("C5",), PFS_ADVERSARY, (), None, ("SK",), lambda c: ScriptResult(),
                      "long-term leak after the session")
    ctx = AttackContext(spec, model, dep, PFS_ADVERSARY, rng, suite)
    tr = ctx.observed_session()
    ctx.leak(after=tr)
    script = PFS_SCRIPTS.get(protocol)
    if script is not None:
        try:
            sk = script(ctx, tr)
        except prim.PrimitiveError as exc:
            ctx.log.append(f"script failed: {exc}")
            sk = b""
    else:
        kb, goal = as_symbolic(model, PFS_ADVERSARY)
        trace = derivable(kb, goal, suite)
        sk = replay(trace, concrete_initial(model, kb, tr, ctx.leaked, dep), suite) if trace else b""
        ctx.log.append("generic symbolic recovery" + ("" if trace else ": key not derivable"))
    outcome = AttackOutcome("PFS", protocol, False, {"SK": sk}, {"SK": tr.session_key}, ("C5",), log=ctx.log)
    outcome.symbolic, outcome.trace = symbolic_check(model, PFS_ADVERSARY, tr, ctx.leaked, dep, {"SK": sk},
                                                     outcome.expected)
    outcome.success = _succeeded(outcome)
    return outcome


# -- replay ------------------------------------------------------------------

def replay_probe(protocol: str, seed=0, trial: int = 0, suite: Suite = DEFAULT_SUITE,
                 delay: int = REPLAY_DELAY) -> AttackOutcome:
    """Resend the first authenticating message of an old session and see if its receiver accepts it."""
    model = load_model(protocol, suite)
    rng = seeded(f"{seed}:replay:{protocol}:{trial}")
    dep = register(model, rng, suite)
    first = next(m for m in model.messages if m.auth)
    old = run_session(dep, ChannelTap("eavesdrop"), rng)
    recorded = next(m for m in old.messages if m.index == first.index)
    tr = run_session(dep, ReplayChannel(recorded), rng, gap=delay)
    accepted = tr.check_passed(first.index, first.receiver)
    log = [f"message {first.index} from an earlier session replayed after {delay} s; "
           f"{first.receiver} {'accepted' if accepted else 'rejected'} it"]
    return AttackOutcome("replay", protocol, accepted, criteria=("C7",),
                         findings={"stale message accepted": accepted}, log=log)
