"""Operation-count cost profiles, time estimates and primitive microbenchmarks."""

from __future__ import annotations

import random
import re
import statistics
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

from . import primitives as prim
from .primitives import DEFAULT_SUITE, Suite

OP_KINDS = ("T_h", "T_ecc", "T_ed", "T_aed", "T_x", "T_fe", "T_p", "T_me", "T_a", "T_m")
FLAG_XOR_IGNORED = "#"
FLAG_ESTIMATED = "*"
ABSENT = "-"

# Mersenne prime 2^2203 - 1: a modulus of realistic size for the exponentiation benchmark
_MODEXP_PRIME = (1 << 2203) - 1
WARMUP_NS = 5_000_000


class CostError(ValueError):
    pass


class CostParseError(CostError):
    pass


class MissingUnitCost(CostError):
    pass


class MissingParameter(CostError):
    pass


@dataclass(frozen=True)
class Affine:
    """``z_coef * z + const``."""
    const: int
    z_coef: int = 0

    def __post_init__(self):
        if self.const < 0 or self.z_coef < 0:
            raise CostError("operation counts must be non-negative")

    def at(self, z: int | None) -> int:
        if self.z_coef and z is None:
            raise MissingParameter("this profile needs the parameter z")
        return self.const + self.z_coef * (z or 0)

    def render(self) -> str:
        if not self.z_coef:
            return str(self.const)
        inner = f"{self.z_coef}z" + (f" + {self.const}" if self.const else "")
        return f"({inner})"


@dataclass(frozen=True)
class OpCount:
    op: str
    count: Affine

    def render(self) -> str:
        return f"{self.count.render()}{self.op}"


@dataclass(frozen=True)
class CostProfile:
    protocol: str
    ops: tuple[OpCount, ...]
    bits: int
    passes: int
    ops_flag: str = ""
    bits_flag: str = ""
    time_ms: str | None = None  # kept verbatim; hardware-bound reference only
    time_flag: str = ""
    storage: str | None = None

    @property
    def counts(self) -> dict[str, Affine]:
        return {o.op: o.count for o in self.ops}

    @property
    def needs_z(self) -> bool:
        return any(o.count.z_coef for o in self.ops)

    def count_vector(self, z: int | None = None) -> dict[str, int]:
        return {o.op: o.count.at(z) for o in self.ops}

    def render_cost(self) -> str:
        return " + ".join(o.render() for o in self.ops) + self.ops_flag

    def render_row(self) -> str:
        time_cell = ABSENT if self.time_ms is None else self.time_ms + self.time_flag
        return " | ".join([self.protocol, self.render_cost(), f"{self.bits}{self.bits_flag}", str(self.passes),
                           time_cell, self.storage or ABSENT])

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "cost": self.render_cost(),
                "ops": {o.op: {"const": o.count.const, "z": o.count.z_coef} for o in self.ops},
                "bits": self.bits, "estimated_bits": self.bits_flag == FLAG_ESTIMATED,
                "xor_ignored": self.ops_flag == FLAG_XOR_IGNORED or self.time_flag == FLAG_XOR_IGNORED,
                "passes": self.passes, "reference_time_ms": self.time_ms, "storage": self.storage}


_TERM = re.compile(r"(?:(\d+)|\((\d+)z(?: \+ (\d+))?\))(T_[a-z]+)")


def parse_cost(text: str) -> tuple[tuple[OpCount, ...], str]:
    flag = ""
    if text.endswith(FLAG_XOR_IGNORED):
        text, flag = text[:-1], FLAG_XOR_IGNORED
    # an affine term such as "(2z + 26)T_h" contains the separator itself; rejoin it
    merged: list[str] = []
    for part in text.split(" + "):
        if merged and merged[-1].startswith("(") and ")" not in merged[-1]:
            merged[-1] += " + " + part
        else:
            merged.append(part)
    out = []
    for part in merged:
        m = _TERM.fullmatch(part)
        if not m:
            raise CostParseError(f"cannot parse cost term {part!r}")
        const, z_coef, z_const, op = m.groups()
        if op not in OP_KINDS:
            raise CostParseError(f"unknown operation kind {op!r}")
        count = Affine(int(const)) if const is not None else Affine(int(z_const or 0), int(z_coef))
        out.append(OpCount(op, count))
    return tuple(out), flag


def _split_flag(cell: str, flags: str) -> tuple[str, str]:
    if cell and cell[-1] in flags:
        return cell[:-1], cell[-1]
    return cell, ""


def parse_profile_row(line: str) -> CostProfile:
    cells = [c.strip() for c in line.split("|")]
    if len(cells) != 6:
        raise CostParseError(f"expected 6 columns, got {len(cells)}: {line!r}")
    pid, cost, bits, passes, t, storage = cells
    ops, ops_flag = parse_cost(cost)
    bits_s, bits_flag = _split_flag(bits, FLAG_ESTIMATED)
    t_s, t_flag = _split_flag(t, FLAG_XOR_IGNORED)
    try:
        profile = CostProfile(pid, ops, int(bits_s), int(passes), ops_flag, bits_flag,
                              None if t_s == ABSENT else t_s, t_flag, None if storage == ABSENT else storage)
        if profile.time_ms is not None:
            float(profile.time_ms)
    except ValueError as exc:
        raise CostParseError(f"{pid}: {exc}") from None
    if profile.render_row() != " | ".join(cells):
        raise CostParseError(f"{pid}: row is not in canonical form")
    return profile


def load_profiles(path: str | Path | None = None) -> dict[str, CostProfile]:
    text = (resources.files("mfawb").joinpath("data/cost_profiles.txt").read_text() if path is None
            else Path(path).read_text())
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        p = parse_profile_row(line)
        out[p.protocol] = p
    return out


def render_profiles(profiles: Mapping[str, CostProfile]) -> str:
    return "\n".join(p.render_row() for p in profiles.values())


# -- unit costs --------------------------------------------------------------

@dataclass
class UnitCostTable:
    """Microseconds per operation kind."""
    costs: dict[str, float] = field(default_factory=dict)
    source: str = ""

    def __post_init__(self):
        for op, v in self.costs.items():
            if op not in OP_KINDS:
                raise CostError(f"unknown operation kind {op!r}")
            if v < 0:
                raise CostError(f"unit cost for {op} is negative")

    def scaled(self, k: float) -> "UnitCostTable":
        return UnitCostTable({op: v * k for op, v in self.costs.items()}, self.source)

    def render(self) -> str:
        return "\n".join(f"{op} = {self.costs[op]!r}" for op in OP_KINDS if op in self.costs)


def parse_units(text: str, source: str = "") -> UnitCostTable:
    costs = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        op, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise CostParseError(f"{source or 'units'}:{n}: expected 'T_x = microseconds'")
        try:
            costs[op] = float(value)
        except ValueError:
            raise CostParseError(f"{source or 'units'}:{n}: {value!r} is not a number") from None
    return UnitCostTable(costs, source)


def load_units(path: str | Path | None = None) -> UnitCostTable:
    if path is None:
        return parse_units(resources.files("mfawb").joinpath("data/default.units").read_text(), "default.units")
    return parse_units(Path(path).read_text(), str(path))


def estimate_time(profile: CostProfile, units: UnitCostTable, z: int | None = None) -> float:
    """Estimated milliseconds: sum of count times unit cost, affine counts expanded first."""
    total_us = 0.0
    for op, n in profile.count_vector(z).items():
        if n == 0:
            continue
        if op not in units.costs:
            raise MissingUnitCost(f"{profile.protocol} needs a unit cost for {op}")
        total_us += n * units.costs[op]
    return total_us / 1000.0


# -- microbenchmarks ---------------------------------------------------------

def _benchmarks(suite: Suite, rng: random.Random) -> dict[str, Callable[[], object]]:
    from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

    a, b = rng.randbytes(32), rng.randbytes(32)
    key = rng.randbytes(32)
    blob = prim.sym_encrypt(key, rng.randbytes(64), suite=suite)
    grp = prim.ModGroup(suite.modulus)
    x, y = rng.randrange(grp.p), rng.randrange(grp.p)
    exp = rng.getrandbits(256)
    priv, peer = X25519PrivateKey.generate(), X25519PrivateKey.generate().public_key()
    reading = rng.randbytes(suite.fuzzy_bits // 8)
    pair = prim.fuzzy_gen(reading, rng, suite)
    puf = prim.PufDevice("bench", rng.randbytes(32), suite.puf_noise_bits)
    challenge = rng.randbytes(16)

    def aead():
        prim.sym_decrypt(key, prim.sym_encrypt(key, a + b, suite=suite), suite)

    return {
        "T_h": lambda: prim.hash_fields(a, b, suite=suite),
        "T_x": lambda: prim.xor(a, b),
        "T_ecc": lambda: priv.exchange(peer),
        "T_me": lambda: pow(3, exp, _MODEXP_PRIME),
        "T_ed": lambda: prim.sym_decrypt(key, blob, suite),
        "T_aed": aead,
        "T_fe": lambda: prim.fuzzy_rep(reading, pair.tau, suite),
        "T_p": lambda: puf.response(challenge, rng, suite),
        "T_a": lambda: grp.add(x, y),
        "T_m": lambda: grp.mul(x, y),
    }


def _batch_size(fn: Callable[[], object], target_ns: int, cap: int) -> int:
    start = time.perf_counter_ns()
    fn()
    once = max(time.perf_counter_ns() - start, 1)
    return max(1, min(cap, target_ns // once))


def measure_primitives(suite: Suite = DEFAULT_SUITE, trials: int = 100, sample_ns: int = 50_000,
                       seed=0) -> UnitCostTable:
    """Median per-operation latency (microseconds) of the workbench's own primitives.

    Cheap operations are timed in batches so each sample lasts about ``sample_ns``.
    """
    if trials < 100:
        raise CostError("measure_primitives needs at least 100 trials")
    rng = random.Random(f"bench:{seed}")
    costs = {}
    for op, fn in _benchmarks(suite, rng).items():
        deadline = time.perf_counter_ns() + WARMUP_NS
        while time.perf_counter_ns() < deadline:
            fn()
        batch = _batch_size(fn, sample_ns, 1000)
        samples = []
        for _ in range(trials):
            start = time.perf_counter_ns()
            for _ in range(batch):
                fn()
            samples.append((time.perf_counter_ns() - start) / batch / 1000.0)
        costs[op] = statistics.median(samples)
    return UnitCostTable(costs, "measured")


# -- report ------------------------------------------------------------------

@dataclass
class CostReportRow:
    profile: CostProfile
    estimate_ms: float | None
    measured_ms: float | None
    note: str = ""

    def to_dict(self) -> dict:
        d = self.profile.to_dict()
        d.update(estimate_ms=None if self.estimate_ms is None else round(self.estimate_ms, 6),
                 measured_ms=None if self.measured_ms is None else round(self.measured_ms, 6), note=self.note)
        return d


def cost_report(profiles: Mapping[str, CostProfile], units: UnitCostTable,
                measured: UnitCostTable | None = None, z: int | None = None) -> list[CostReportRow]:
    rows = []
    for p in profiles.values():
        try:
            est = estimate_time(p, units, z)
            meas = estimate_time(p, measured, z) if measured else None
            note = ""
        except MissingParameter:
            est = meas = None
            note = "needs --z"
        rows.append(CostReportRow(p, est, meas, note))
    return rows


def render_cost_markdown(rows: list[CostReportRow]) -> str:
    def ms(v):
        return ABSENT if v is None else f"{v:.3f}"

    out = ["| Protocol | Computation cost | Bits | Passes | Reference time (ms) | Storage | Estimate (ms) | Measured (ms) |",
           "|---|---|---|---|---|---|---|---|"]
    for r in rows:
        p = r.profile
        ref = ABSENT if p.time_ms is None else p.time_ms + p.time_flag
        est = ms(r.estimate_ms) + (f" ({r.note})" if r.note else "")
        out.append(f"| {p.protocol} | {p.render_cost()} | {p.bits}{p.bits_flag} | {p.passes} | {ref} | "
                   f"{p.storage or ABSENT} | {est} | {ms(r.measured_ms)} |")
    return "\n".join(out)
