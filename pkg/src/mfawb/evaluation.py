"""Criteria scoring (C1..C8) from attacks, structural checks and symbolic derivability."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .adversary import AdversaryModel, ChannelTap
from .attacks import REGISTRY, AttackOutcome, attacks_for, pfs_experiment, replay_probe, run_attack
from .deduction import derivable
from .primitives import DEFAULT_SUITE, Suite
from .protocols.model import ProtocolModel, available_protocols, load_model
from .protocols.runtime import Transcript, as_symbolic, register, run_session, seeded

CRITERIA = ("C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8")
PASS, FAIL, ASSERTED = "pass", "fail", "asserted"
SCHEMA_VERSION = 1
WEAK_FRACTION = 0.25  # share of historical data a bounded-retrieval adversary is assumed to get


class MissingHarnessResults(LookupError):
    pass


@dataclass(frozen=True)
class CriterionEvidence:
    criterion: str
    verdict: str
    evidence: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "evidence": list(self.evidence)}


@dataclass(frozen=True)
class ScanFinding:
    kind: str  # "plaintext-identity" or "linkable"
    where: str
    detail: str

    def render(self) -> str:
        return f"{self.kind}: {self.where} ({self.detail})"


@dataclass
class HarnessResults:
    protocol: str
    attacks: dict[str, list[AttackOutcome]] = field(default_factory=dict)
    pfs: list[AttackOutcome] = field(default_factory=list)
    replay: list[AttackOutcome] = field(default_factory=list)
    scan: list[ScanFinding] = field(default_factory=list)
    weak_view: dict | None = None


@dataclass
class MatrixRow:
    protocol: str
    domain: str
    factors: str
    adversary: str
    cells: dict[str, CriterionEvidence]

    def marks(self) -> list[str]:
        return ["v" if self.cells[c].verdict == PASS else "x" for c in CRITERIA[:7]]

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "domain": self.domain, "factors": self.factors,
                "adversary": self.adversary, "cells": {c: e.to_dict() for c, e in self.cells.items()}}


@dataclass
class CriteriaMatrix:
    rows: list[MatrixRow]
    seed: object = 0
    trials: int = 0

    @property
    def asserted(self) -> list[tuple[str, str]]:
        return [(r.protocol, c) for r in self.rows for c, e in r.cells.items() if e.verdict == ASSERTED]

    def row(self, pid: str) -> MatrixRow:
        return next(r for r in self.rows if r.protocol == pid)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "seed": str(self.seed), "trials": self.trials,
                "asserted_cells": len(self.asserted), "rows": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_markdown(self) -> str:
        mark = {PASS: "✓", FAIL: "✗", ASSERTED: "✓*"}
        lines = ["| Protocol | Domain | Factors | " + " | ".join(CRITERIA) + " |",
                 "|" + "---|" * (3 + len(CRITERIA))]
        for r in self.rows:
            cells = [mark[r.cells[c].verdict] for c in CRITERIA[:7]] + [r.adversary]
            lines.append(f"| {r.protocol} | {r.domain} | {r.factors} | " + " | ".join(cells) + " |")
        lines.append("")
        lines.append(f"Asserted cells: {len(self.asserted)}")
        lines.append("")
        for r in self.rows:
            lines.append(f"### {r.protocol}")
            for c in CRITERIA:
                e = r.cells[c]
                lines.append(f"- {c} {e.verdict}: " + "; ".join(e.evidence))
            lines.append("")
        return "\n".join(lines)


# -- dynamic identity scan ---------------------------------------------------

def identity_linkability_scan(transcripts: list[Transcript], model: ProtocolModel) -> list[ScanFinding]:
    """Plaintext identifiers and values that stay constant across sessions.

    Identity bytes are taken from each transcript's ground-truth environment; public
    constants are exempt from the cross-session check.
    """
    findings: list[ScanFinding] = []
    public = {a.name for a in model.public_constants()}
    idents = [a.name for a in model.identities()]
    seen: set[tuple[str, str]] = set()
    for tr in transcripts:
        for msg in tr.messages:
            if not msg.plain:
                continue
            for term, value in msg.items():
                for name in idents:
                    ident = tr.env.get(name)
                    if ident and ident in value and (str(term), name) not in seen:
                        seen.add((str(term), name))
                        how = "sent as is" if ident == value else "embedded"
                        findings.append(ScanFinding("plaintext-identity", f"message {msg.index} {term}",
                                                    f"{name} {how}"))
    if len(transcripts) >= 2:
        by_slot: dict[tuple[int, int], set[bytes]] = {}
        labels: dict[tuple[int, int], str] = {}
        for tr in transcripts:
            for msg in tr.messages:
                if not msg.plain:
                    continue
                for pos, (term, value) in enumerate(msg.items()):
                    if str(term) in public:
                        continue
                    by_slot.setdefault((msg.index, pos), set()).add(value)
                    labels[(msg.index, pos)] = str(term)
        for slot, values in sorted(by_slot.items()):
            if len(values) == 1:
                findings.append(ScanFinding("linkable", f"message {slot[0]} {labels[slot]}",
                                            f"identical in {len(transcripts)} sessions"))
    return findings


def scan_sessions(pid: str, sessions: int = 5, seed=0, suite: Suite = DEFAULT_SUITE) -> list[ScanFinding]:
    model = load_model(pid, suite)
    rng = seeded(f"{seed}:scan:{pid}")
    dep = register(model, rng, suite)
    trs = [run_session(dep, ChannelTap("eavesdrop"), rng) for _ in range(sessions)]
    return identity_linkability_scan(trs, model)


# -- symbolic checks ---------------------------------------------------------

def n_minus_one_exposures(model: ProtocolModel, suite: Suite = DEFAULT_SUITE) -> list[str]:
    """For each role and withheld factor: is SK or that factor's material derivable from the rest?"""
    out = []
    for role in model.roles:
        held = model.holders_factors(role)
        for withheld in held:
            adv = AdversaryModel("eavesdrop", factors=tuple(f.id for f in held if f is not withheld),
                                 device_read=frozenset())
            goals = ([model.sk] if model.sk is not None else []) + [model.atom(n) for n in withheld.material]
            for goal in goals:
                kb, _ = as_symbolic(model, adv, goal=goal)
                if derivable(kb, goal, suite) is not None:
                    what = "session key" if goal == model.sk else str(goal)
                    out.append(f"symbolic:{role} without {withheld.id} exposes {what}")
                    break
    return out


def eavesdropped_identities(model: ProtocolModel, suite: Suite = DEFAULT_SUITE) -> list[str]:
    adv = AdversaryModel("eavesdrop")
    out = []
    for ident in model.identities():
        kb, _ = as_symbolic(model, adv, goal=ident)
        if derivable(kb, ident, suite) is not None:
            out.append(f"symbolic:{ident} derivable by an eavesdropper")
    return out


def mutual_auth_gaps(model: ProtocolModel) -> list[str]:
    senders = {m.sender for m in model.messages if m.auth}
    return [f"structural:no authenticator sent by {r}" for r in model.roles if r not in senders]


def factor_dependencies(model: ProtocolModel) -> list[str]:
    out = []
    for f in model.factors:
        out.extend(f"structural:{f.id} derived from {d}" for d in f.derived_from)
        out.extend(f"structural:{f.id} protects {p}" for p in f.protects)
    return out


def repeated_categories(model: ProtocolModel) -> list[str]:
    cats: dict[str, list[str]] = {}
    for f in model.factors:
        cats.setdefault(f.category, []).append(f.id)
    return [f"structural:{'/'.join(ids)} share category {c}" for c, ids in cats.items() if len(ids) > 1]


# -- harness -----------------------------------------------------------------

def run_harness(pid: str, seed=0, trials: int = 3, suite: Suite = DEFAULT_SUITE,
                scan_count: int = 5) -> HarnessResults:
    """Execute every registered attack plus the PFS, replay and scan experiments for one protocol."""
    model = load_model(pid, suite)
    res = HarnessResults(pid)
    for spec in attacks_for(pid):
        res.attacks[spec.id] = [run_attack(spec.id, pid, seed=seed, trial=i, suite=suite) for i in range(trials)]
    if model.executable:
        res.pfs = [pfs_experiment(pid, seed=seed, trial=i, suite=suite) for i in range(trials)]
        res.replay = [replay_probe(pid, seed=seed, trial=i, suite=suite) for i in range(trials)]
        res.scan = scan_sessions(pid, max(scan_count, 2), seed, suite)
    if "A1-tagchain" in res.attacks:
        weak = REGISTRY["A1-tagchain"].adversary.with_(historical_fraction=WEAK_FRACTION)
        o = run_attack("A1-tagchain", pid, seed=seed, adversary=weak, suite=suite)
        strong = res.attacks["A1-tagchain"][0].details
        res.weak_view = {"fraction": WEAK_FRACTION, "rows_recomputed": o.details["rows_recomputed"],
                         "rows_total": strong["rows_retrieved"]}
    return res


def _rate(outcomes: list[AttackOutcome]) -> str:
    return f"{sum(o.success for o in outcomes)}/{len(outcomes)}"


def evaluate_protocol(model: ProtocolModel, results: HarnessResults, suite: Suite = DEFAULT_SUITE) -> MatrixRow:
    missing = [s.id for s in attacks_for(model.id) if s.id not in results.attacks]
    if missing or results.protocol != model.id or model.executable and not results.pfs:
        raise MissingHarnessResults(f"{model.id}: harness results incomplete ({', '.join(missing) or 'pfs'})")

    def attack_evidence(criterion: str) -> list[str]:
        out = []
        for aid, outcomes in sorted(results.attacks.items()):
            if criterion in REGISTRY[aid].criteria and any(o.success for o in outcomes):
                out.append(f"attack:{aid} succeeded {_rate(outcomes)}")
        return out

    cells: dict[str, CriterionEvidence] = {}

    def decide(criterion: str, failures: list[str], passed: str) -> None:
        if failures:
            cells[criterion] = CriterionEvidence(criterion, FAIL, tuple(failures))
        else:
            cells[criterion] = CriterionEvidence(criterion, PASS, (passed,))

    decide("C1", mutual_auth_gaps(model) + attack_evidence("C1"),
           "structural:every role sends an authenticator; no impersonation attack succeeded")
    decide("C2", repeated_categories(model), "structural:factor categories pairwise distinct")
    decide("C3", factor_dependencies(model) + attack_evidence("C3"),
           "structural:factor graph has no derived-from or protects edges")
    decide("C4", n_minus_one_exposures(model, suite) + attack_evidence("C4"),
           "symbolic:no N-1 factor subset exposes the session key or the withheld factor")
    pfs = []
    if results.pfs and any(o.success for o in results.pfs):
        pfs.append(f"pfs:past key recovered after long-term leak {_rate(results.pfs)}")
    decide("C5", pfs + attack_evidence("C5"),
           f"pfs:past key not recovered after long-term leak {_rate(results.pfs)}" if results.pfs
           else "pfs:no attack recovers past keys")
    decide("C6", eavesdropped_identities(model, suite) + [f"scan:{f.render()}" for f in results.scan]
           + attack_evidence("C6"), "scan:no plaintext or linkable identifiers")
    replay = []
    if results.replay and any(o.success for o in results.replay):
        replay.append(f"replay:stale authenticator accepted {_rate(results.replay)}")
    decide("C7", replay + attack_evidence("C7"), "replay and impersonation attacks all failed")
    strong = model.declared_adversary == "strong"
    c8 = [f"metadata:declared adversary {model.declared_adversary}"]
    if results.weak_view:
        w = results.weak_view
        c8.append(f"attack:A1-tagchain recomputes {w['rows_recomputed']} of {w['rows_total']} tags at "
                  f"retrieval fraction {w['fraction']}")
    cells["C8"] = CriterionEvidence("C8", PASS if strong else FAIL, tuple(c8))
    return MatrixRow(model.id, model.domain, model.factors_label, "SA" if strong else "WA", cells)


def _evaluate_one(args) -> MatrixRow:
    pid, seed, trials, suite = args
    return evaluate_protocol(load_model(pid, suite), run_harness(pid, seed, trials, suite), suite)


def matrix(protocols: list[str] | None = None, seed=0, trials: int = 3, suite: Suite = DEFAULT_SUITE,
           jobs: int = 1) -> CriteriaMatrix:
    protocols = protocols or available_protocols()
    work = [(pid, seed, trials, suite) for pid in protocols]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_evaluate_one, work))
    else:
        rows = [_evaluate_one(w) for w in work]
    return CriteriaMatrix(rows, seed, trials)


# -- reference matrix --------------------------------------------------------

@dataclass(frozen=True)
class ReferenceRow:
    protocol: str
    domain: str
    factors: str
    marks: tuple[str, ...]
    adversary: str


def load_reference(path: str | Path | None = None) -> dict[str, ReferenceRow]:
    if path is None:
        text = resources.files("mfawb").joinpath("data/criteria_reference.txt").read_text()
    else:
        text = Path(path).read_text()
    rows = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        pid, domain, factors, marks, adv = (p.strip() for p in line.split("|"))
        rows[pid] = ReferenceRow(pid, domain, factors, tuple(marks.split()), adv)
    return rows


@dataclass
class CheckReport:
    mismatches: list[str]
    compared: int

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> dict:
        return {"ok": self.ok, "cells_compared": self.compared, "mismatches": self.mismatches}


def check_against_reference(m: CriteriaMatrix, reference: dict[str, ReferenceRow] | None = None) -> CheckReport:
    """Cell-by-cell comparison; rows absent from the reference (e.g. HARDENED) are skipped."""
    reference = reference or load_reference()
    out, compared = [], 0
    for pid, ref in reference.items():
        try:
            row = m.row(pid)
        except StopIteration:
            out.append(f"{pid}: not evaluated")
            continue
        for c, got, want in zip(CRITERIA, row.marks(), ref.marks):
            compared += 1
            if got != want:
                out.append(f"{pid} {c}: got {got}, reference {want}")
        compared += 1
        if row.adversary != ref.adversary:
            out.append(f"{pid} C8: got {row.adversary}, reference {ref.adversary}")
        for label, got, want in (("domain", row.domain, ref.domain), ("factors", row.factors, ref.factors)):
            if got != want:
                out.append(f"{pid} {label}: got {got!r}, reference {want!r}")
    return CheckReport(out, compared)
