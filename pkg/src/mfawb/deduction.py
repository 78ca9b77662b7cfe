"""Adversary knowledge closure over the term algebra.

The rule set (shared by :func:`close` and the naive :func:`brute_force_close`):

* equation-unfold  defined atoms are replaced by their definitions up front
* concat-split     ``CAT(a, b)`` yields ``a`` and ``b`` (lengths are static)
* decrypt          ``ENC(k, m)`` and ``k`` yield ``m``
* group-solve      a linear combination with all but one item known yields that item
* xor-combine      two known terms of equal length yield their normalized xor, kept only
                   if it shrinks or is a subterm of an equation or target
* composition      any subterm of an equation or target whose children are known
                   (hash-apply, concat, encrypt, group-*, exp-apply)

Nothing inverts a hash or a one-way exponentiation.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import primitives as prim
from .primitives import Suite
from .terms import (Atom, Cat, Enc, GAdd, GExp, GMul, Hash, Scalar, Term, Xor, Zero, atoms,
                    normalize, substitute, subterms)


class DeductionError(Exception):
    pass


class LimitExceeded(DeductionError):
    pass


class CyclicEquations(DeductionError):
    pass


@dataclass(frozen=True)
class Step:
    rule: str
    inputs: tuple[Term, ...]
    output: Term

    def to_dict(self) -> dict:
        return {"rule": self.rule, "inputs": [str(t) for t in self.inputs], "output": str(self.output)}


@dataclass
class DerivationTrace:
    goal: Term
    steps: list[Step]

    def __len__(self) -> int:
        return len(self.steps)

    def to_dict(self) -> dict:
        return {"goal": str(self.goal), "steps": [s.to_dict() for s in self.steps]}

    def render(self) -> str:
        lines = []
        for n, s in enumerate(self.steps, 1):
            lines.append(f"{n}. {s.rule}: {', '.join(map(str, s.inputs))} |- {s.output}")
        return "\n".join(lines)


@dataclass(frozen=True)
class KnowledgeBase:
    facts: frozenset[Term]
    equations: tuple[tuple[Atom, Term], ...] = ()
    targets: frozenset[Term] = frozenset()
    max_size: int = 20000
    max_depth: int = 64

    def __post_init__(self):
        if self.max_size <= 0 or self.max_depth <= 0:
            raise ValueError("limits must be positive")
        _check_acyclic(self.equations)

    @classmethod
    def build(cls, facts: Iterable[Term], equations: Mapping[str, Term] | Iterable = (),
              targets: Iterable[Term] = (), **limits) -> "KnowledgeBase":
        if isinstance(equations, Mapping):
            eqs = tuple((Atom(name, "defined", rhs.length), rhs) for name, rhs in equations.items())
        else:
            eqs = tuple(equations)
        return cls(frozenset(normalize(f) for f in facts), eqs, frozenset(targets), **limits)

    def with_facts(self, extra: Iterable[Term]) -> "KnowledgeBase":
        return KnowledgeBase(self.facts | {normalize(f) for f in extra}, self.equations,
                             self.targets, self.max_size, self.max_depth)

    @property
    def definitions(self) -> dict[str, Term]:
        return {lhs.name: rhs for lhs, rhs in self.equations}


def _check_acyclic(equations) -> None:
    defs = {lhs.name: rhs for lhs, rhs in equations}
    state: dict[str, int] = {}

    def visit(name: str):
        if state.get(name) == 1:
            raise CyclicEquations(f"equation cycle through {name}")
        if state.get(name) == 2:
            return
        state[name] = 1
        for a in atoms(defs[name]):
            if a.name in defs:
                visit(a.name)
        state[name] = 2

    for name in defs:
        visit(name)


def unfold(t: Term, definitions: Mapping[str, Term]) -> Term:
    """Substitute definitions until no defined atom remains, then normalize."""
    while True:
        names = {a.name for a in atoms(t)} & definitions.keys()
        if not names:
            return normalize(t)
        t = substitute(t, {n: definitions[n] for n in names})


def xsize(t: Term) -> int:
    return len(t.items) if isinstance(t, Xor) else 1


# -- shared rule machinery --------------------------------------------------

class _Setup:
    def __init__(self, kb: KnowledgeBase, extra_targets: Iterable[Term] = ()):
        defs = kb.definitions
        self.initial: list[tuple[Term, Step | None]] = []
        for f in sorted(kb.facts, key=str):
            u = unfold(f, defs)
            self.initial.append((f, None))
            if u != f:
                self.initial.append((u, Step("equation-unfold", (f,), u)))
        self.targets = [unfold(normalize(t), defs) for t in (*kb.targets, *extra_targets)]
        interesting: set[Term] = set()
        for root in [unfold(rhs, defs) for _, rhs in kb.equations] + self.targets:
            interesting.update(subterms(root))
        self.interesting = {t for t in interesting if not isinstance(t, (Atom, Zero))}


def _partial_exp(s: GExp, j: int) -> Term:
    rest = s.exps[:j] + s.exps[j + 1:]
    return normalize(GExp(s.base, rest, s.p)) if rest else s.base


def _compositions(s: Term, known) -> list[Step]:
    """Ways to build ``s`` from known children (possibly empty)."""
    rule = {Hash: "hash-apply", Cat: "concat", Enc: "encrypt", GMul: "group-mul",
            Scalar: "scalar-reduce", Xor: "xor-combine", GAdd: "group-compose"}.get(type(s))
    if rule is not None:
        kids = s.children
        return [Step(rule, kids, s)] if all(k in known for k in kids) else []
    if isinstance(s, GExp):
        if s.base in known and all(e in known for e in s.exps):
            return [Step("exp-apply", s.children, s)]
        out = []
        for j, e in enumerate(s.exps):
            part = _partial_exp(s, j)
            if e in known and part in known:
                out.append(Step("exp-apply", (part, e), s))
        return out[:1]
    return []


def _decompositions(f: Term, known) -> list[Step]:
    if isinstance(f, Cat):
        return [Step("concat-split", (f,), p) for p in f.parts]
    if isinstance(f, Enc) and f.key in known:
        return [Step("decrypt", (f, f.key), f.body)]
    if isinstance(f, GAdd):
        out = []
        for j, (_, item) in enumerate(f.items):
            others = tuple(t for i, (_, t) in enumerate(f.items) if i != j)
            if all(o in known for o in others):
                out.append(Step("group-solve", (f, *others), item))
        return out
    return []


def _combine(a: Term, b: Term, interesting) -> Step | None:
    if a == b or a.length != b.length:
        return None
    r = normalize(Xor((a, b)))
    if isinstance(r, Zero):
        return None
    if xsize(r) < max(xsize(a), xsize(b)) or r in interesting:
        return Step("xor-combine", (a, b), r)
    return None


# -- optimized closure -------------------------------------------------------

@dataclass
class Closure:
    known: dict[Term, Step | None] = field(default_factory=dict)
    order: list[Term] = field(default_factory=list)

    @property
    def terms(self) -> set[Term]:
        return set(self.known)

    def __contains__(self, t: Term) -> bool:
        return t in self.known


def _saturate(kb: KnowledgeBase, extra_targets: Iterable[Term] = ()) -> tuple[Closure, _Setup]:
    setup = _Setup(kb, extra_targets)
    interesting = setup.interesting
    parents: dict[Term, list[Term]] = defaultdict(list)
    for s in sorted(interesting, key=str):
        for c in set(s.children):
            parents[c].append(s)
        if isinstance(s, GExp):
            for j in range(len(s.exps)):
                parents[_partial_exp(s, j)].append(s)
    waiting_enc: dict[Term, list[Term]] = defaultdict(list)
    gadds_by_item: dict[Term, list[Term]] = defaultdict(list)
    by_length: dict[int, list[Term]] = defaultdict(list)

    cl = Closure()
    depth: dict[Term, int] = {}
    agenda: deque[tuple[Term, Step | None]] = deque(setup.initial)

    def offer(step: Step):
        if step.output not in cl.known:
            agenda.append((step.output, step))

    while agenda:
        f, step = agenda.popleft()
        if f in cl.known:
            continue
        d = 0 if step is None else 1 + max((depth[i] for i in step.inputs), default=0)
        if d > kb.max_depth:
            raise LimitExceeded(f"derivation depth {d} exceeds {kb.max_depth} at {f}")
        cl.known[f] = step
        cl.order.append(f)
        depth[f] = d
        if len(cl.known) > kb.max_size:
            raise LimitExceeded(f"closure size exceeds {kb.max_size}")
        known = cl.known

        for s in parents.get(f, ()):
            if s not in known:
                for st in _compositions(s, known):
                    offer(st)
        for st in _decompositions(f, known):
            offer(st)
        if isinstance(f, Enc) and f.key not in known:
            waiting_enc[f.key].append(f)
        for ct in waiting_enc.pop(f, ()):
            offer(Step("decrypt", (ct, f), ct.body))
        if isinstance(f, GAdd):
            for _, item in f.items:
                gadds_by_item[item].append(f)
        for g in gadds_by_item.get(f, ()):
            for st in _decompositions(g, known):
                offer(st)
        for g in by_length[f.length]:
            st = _combine(g, f, interesting)
            if st is not None:
                offer(st)
        by_length[f.length].append(f)
    return cl, setup


def close(kb: KnowledgeBase, suite: Suite | None = None) -> set[Term]:
    """Least fixpoint of the rules; raises :class:`LimitExceeded` instead of truncating."""
    return _saturate(kb)[0].terms


def derivable(kb: KnowledgeBase, goal: Term, suite: Suite | None = None) -> DerivationTrace | None:
    goal = normalize(goal)
    if goal in kb.facts:
        return DerivationTrace(goal, [Step("known", (goal,), goal)])
    cl, setup = _saturate(kb, [goal])
    target = setup.targets[-1]
    if target not in cl.known:
        return None
    needed: set[Term] = set()
    stack = [target]
    while stack:
        t = stack.pop()
        if t in needed:
            continue
        needed.add(t)
        st = cl.known[t]
        if st is not None:
            stack.extend(st.inputs)
    steps = [cl.known[t] for t in cl.order if t in needed and cl.known[t] is not None]
    if not steps:
        steps = [Step("known", (target,), target)]
    return DerivationTrace(goal, steps)


# -- independent oracle ------------------------------------------------------

def brute_force_close(kb: KnowledgeBase, depth: int = 8) -> set[Term]:
    """Exhaustive round-based application of every rule to every fact and pair.

    No indexing, no agenda: each round recomputes all one-step consequences of
    the current set.  Meant for tiny knowledge bases only.
    """
    setup = _Setup(kb)
    current = {t for t, _ in setup.initial}
    for _ in range(depth):
        new = set()
        for a in current:
            new.update(s.output for s in _decompositions(a, current))
            for b in current:
                st = _combine(a, b, setup.interesting)
                if st is not None:
                    new.add(st.output)
        for s in setup.interesting:
            if _compositions(s, current):
                new.add(s)
        if new <= current:
            break
        current |= new
    return current


# -- concrete replay ---------------------------------------------------------

def _i(b: bytes) -> int:
    return int.from_bytes(b, "big")


def replay_step(step: Step, vals: Mapping[Term, bytes], suite: Suite) -> bytes:
    ins = [vals[t] for t in step.inputs]
    out, rule = step.output, step.rule
    if rule in ("known", "equation-unfold"):
        return ins[0]
    if rule == "xor-combine":
        return prim.xor_all(ins, out.length)
    if rule == "concat-split":
        cat = step.inputs[0]
        pos = 0
        for part in cat.parts:
            if part == out:
                return ins[0][pos:pos + part.length]
            pos += part.length
        raise DeductionError("split output is not a part")
    if rule == "decrypt":
        return prim.sym_decrypt(ins[1], ins[0], suite)
    if rule == "encrypt":
        return prim.sym_encrypt(ins[0], ins[1], suite=suite)
    if rule == "hash-apply":
        return prim.hash_fields(*ins, size=out.size, suite=suite)
    if rule == "concat":
        return b"".join(ins)
    grp = prim.ModGroup(getattr(out, "p", None) or getattr(step.inputs[0], "p"))
    if rule == "group-solve":
        f = step.inputs[0]
        j = next(i for i, (_, t) in enumerate(f.items) if t == out)
        others = iter(ins[1:])
        acc = _i(ins[0])
        for i, (c, _) in enumerate(f.items):
            if i != j:
                acc -= c * _i(next(others))
        return grp.to_bytes(acc * pow(f.items[j][0], -1, grp.p))
    if rule == "group-compose":
        return grp.to_bytes(sum(c * _i(v) for (c, _), v in zip(out.items, ins)))
    if rule == "group-mul":
        return grp.to_bytes(grp.mul(*map(_i, ins)))
    if rule == "scalar-reduce":
        return grp.to_bytes(_i(ins[0]))
    if rule == "exp-apply":
        v = _i(ins[0])
        for e in ins[1:]:
            v = pow(v, _i(e), grp.p)
        return grp.to_bytes(v)
    raise DeductionError(f"unknown rule {rule}")


def replay(trace: DerivationTrace, initial: Mapping[Term, bytes], suite: Suite = prim.DEFAULT_SUITE) -> bytes:
    """Re-run a trace on concrete bytes, starting only from the adversary's initial values."""
    vals = {normalize(k): v for k, v in initial.items()}
    last = None
    for step in trace.steps:
        last = vals[step.output] = replay_step(step, vals, suite)
    return last
