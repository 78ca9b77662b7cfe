"""Random small knowledge bases for closure cross-checks."""

import random

from mfawb.deduction import KnowledgeBase
from mfawb.terms import Atom, Cat, Enc, GAdd, Hash, Xor, normalize

P = (1 << 61) - 1
BYTES = [Atom(n, "secret", 32) for n in "abcde"]
SCALARS = [Atom(n, "secret", 8, P) for n in "xyz"]


def _bytes32(r: random.Random, d: int):
    if d == 0 or r.random() < 0.5:
        return r.choice(BYTES)
    return Hash(tuple(random_term(r, d - 1) for _ in range(r.randint(1, 2))))


def _scalar(r: random.Random):
    if r.random() < 0.6:
        return r.choice(SCALARS)
    a, b = r.sample(SCALARS, 2)
    return GAdd(((1, a), (r.randrange(1, 5), b)), P)


def random_term(r: random.Random, d: int):
    if d == 0 or r.random() < 0.35:
        return r.choice(BYTES)
    kind = r.randrange(5)
    if kind == 0:
        return Xor((_bytes32(r, d - 1), _bytes32(r, d - 1)))
    if kind == 1:
        return Hash(tuple(random_term(r, d - 1) for _ in range(r.randint(1, 2))))
    if kind == 2:
        return Cat((random_term(r, d - 1), random_term(r, d - 1)))
    if kind == 3:
        return Enc(_bytes32(r, d - 1), random_term(r, d - 1))
    return _scalar(r)


def random_kb(seed: int) -> KnowledgeBase:
    r = random.Random(seed)
    facts = [normalize(random_term(r, 2)) for _ in range(r.randint(1, 4))]
    targets = [normalize(random_term(r, 2)) for _ in range(2)]
    return KnowledgeBase.build(facts, {}, targets)
