"""Command-line entry point: ``mfawb run|attack|evaluate|cost|deduce|report``.

Exit codes: 0 ok, 1 result differs from the expected pattern, 2 unknown protocol or
attack, 3 protocol modeled at metadata fidelity only, 4 attack prerequisite unmet,
5 fixture/knowledge-base/cost-file parse error, 6 invalid configuration or adversary selector.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from .adversary import SelectorError
from .attacks import REGISTRY, AttackInapplicable, PrerequisiteUnmet, run_attack
from .config import FORMATS, ConfigError, WorkbenchConfig, load_config
from .cost import CostError, cost_report, load_profiles, load_units, measure_primitives, render_cost_markdown
from .deduction import derivable
from .evaluation import SCHEMA_VERSION, check_against_reference, matrix
from .primitives import Suite
from .protocols.model import FIXTURE_ENV, UnknownProtocol, available_protocols, load_model, parse_kb
from .protocols.runtime import HONEST, MetadataOnly, register, run_session, seeded
from .syntax import FixtureParseError
from .terms import evaluate

EXIT_OK, EXIT_MISMATCH, EXIT_UNKNOWN, EXIT_METADATA, EXIT_PREREQ, EXIT_PARSE, EXIT_CONFIG = range(7)


class UnknownAttack(LookupError):
    pass


def _emit(doc: dict, markdown: str, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps({"schema": SCHEMA_VERSION, **doc}, indent=2, sort_keys=True))
    else:
        print(markdown)


def _data_path(name: str, sub: str) -> Path:
    """A user path, or the packaged data file of that name."""
    p = Path(name)
    if p.exists():
        return p
    packaged = resources.files("mfawb").joinpath(f"data/{sub}{p.name}")
    if packaged.is_file():
        return Path(str(packaged))
    raise FileNotFoundError(name)


# -- run ---------------------------------------------------------------------

def honest_runs(pid: str, seed, trials: int, suite: Suite) -> tuple[dict, list]:
    model = load_model(pid, suite)
    if not model.executable:
        raise MetadataOnly(f"{pid} is modeled at metadata fidelity only; no executable session exists")
    rng = seeded(f"{seed}:run:{pid}")
    dep = register(model, rng, suite)
    transcripts, mismatches = [], 0
    for _ in range(trials):
        tr = run_session(dep, HONEST, rng)
        env = model.complete_env(tr.env, suite)
        for msg in tr.messages:
            for term, value in msg.items():
                mismatches += evaluate(term, env, suite) != value
        transcripts.append(tr)
    agreed = sum(tr.agreed for tr in transcripts)
    return {"protocol": pid, "seed": str(seed), "trials": trials, "agreed": agreed,
            "wire_mismatches": mismatches}, transcripts


def cmd_run(args, cfg: WorkbenchConfig) -> int:
    summary, trs = honest_runs(args.protocol, cfg.seed, cfg.trials, cfg.suite)
    shown = trs if args.transcripts else trs[:1]
    doc = {"command": "run", **summary, "transcripts": [t.to_dict() for t in shown]}
    md = (f"{args.protocol}: {summary['agreed']}/{summary['trials']} sessions agreed on a key; "
          f"{summary['wire_mismatches']} wire values disagree with their equations")
    _emit(doc, md, cfg.format)
    ok = summary["agreed"] == summary["trials"] and summary["wire_mismatches"] == 0
    return EXIT_OK if ok else EXIT_MISMATCH


# -- attack ------------------------------------------------------------------

def resolve_attack(name: str) -> str:
    if name in REGISTRY:
        return name
    hits = [a for a in REGISTRY if a.startswith(name)]
    if len(hits) == 1:
        return hits[0]
    raise UnknownAttack(f"unknown attack {name!r}" + (f" (ambiguous: {', '.join(hits)})" if hits else ""))


def attack_summary(job) -> dict:
    attack_id, pid, seed, trials, suite, adversary, enforce = job
    outcomes = [run_attack(attack_id, pid, seed=seed, trial=i, adversary=adversary, suite=suite,
                           enforce_prerequisites=enforce) for i in range(trials)]
    first = outcomes[0].to_dict()
    return {"attack": attack_id, "protocol": pid, "trials": trials,
            "successes": sum(o.success for o in outcomes),
            "symbolic_agreements": sum(o.symbolic_agrees for o in outcomes),
            "expected": "success in every trial", "first_outcome": first}


def _map(fn, jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_attack(args, cfg: WorkbenchConfig) -> int:
    if args.all == bool(args.attack):
        raise UnknownAttack("name one attack or pass --all")
    ids = list(REGISTRY) if args.all else [resolve_attack(args.attack)]
    jobs = []
    for aid in ids:
        spec = REGISTRY[aid]
        targets = [args.protocol] if args.protocol else list(spec.protocols)
        for pid in targets:
            adversary = cfg.adversary if cfg.adversary is not None and not args.all else spec.adversary
            if args.no_compromise:
                adversary = adversary.with_(factors=(), stores=(), device_read=frozenset(), longterm_leak=False)
            jobs.append((aid, pid, cfg.seed, cfg.trials, cfg.suite, adversary, True))
    results = _map(attack_summary, jobs, cfg.jobs)
    ok = all(r["successes"] == r["trials"] and r["symbolic_agreements"] == r["trials"] for r in results)
    lines = ["| Attack | Protocol | Successes | Symbolic agreement |", "|---|---|---|---|"]
    for r in results:
        lines.append(f"| {r['attack']} | {r['protocol']} | {r['successes']}/{r['trials']} | "
                     f"{r['symbolic_agreements']}/{r['trials']} |")
    if not args.all:
        lines += ["", "Log of the first trial:"] + [f"- {entry}" for entry in results[0]["first_outcome"]["log"]]
        trace = results[0]["first_outcome"]["trace"]
        if trace:
            lines += ["", "Derivation:"] + [f"{i}. {s['rule']}: {', '.join(s['inputs'])} |- {s['output']}"
                                            for i, s in enumerate(trace["steps"], 1)]
    _emit({"command": "attack", "seed": str(cfg.seed), "results": results, "matches_expected": ok},
          "\n".join(lines), cfg.format)
    return EXIT_OK if ok else EXIT_MISMATCH


# -- evaluate ----------------------------------------------------------------

def cmd_evaluate(args, cfg: WorkbenchConfig) -> int:
    if args.all == bool(args.protocols):
        raise UnknownProtocol("name protocols or pass --all")
    pids = available_protocols() if args.all else args.protocols
    for pid in pids:
        load_model(pid, cfg.suite)
    m = matrix(pids, cfg.seed, cfg.trials, cfg.suite, cfg.jobs)
    doc = {"command": "evaluate", **m.to_dict()}
    md = m.to_markdown()
    code = EXIT_OK
    if args.check_paper:
        report = check_against_reference(m)
        doc["check"] = report.to_dict()
        md += "\n\nReference check: " + ("all cells match" if report.ok else "MISMATCH")
        if not report.ok:
            md += "\n" + "\n".join(f"- {x}" for x in report.mismatches)
            for x in report.mismatches:
                print(x, file=sys.stderr)
            code = EXIT_MISMATCH
    _emit(doc, md, cfg.format)
    return code


# -- cost --------------------------------------------------------------------

def cmd_cost(args, cfg: WorkbenchConfig) -> int:
    profiles = load_profiles(_data_path(args.profiles, "") if args.profiles else None)
    units = load_units(_data_path(args.units, "") if args.units else None)
    measured = measure_primitives(cfg.suite, args.bench_trials) if args.measure else None
    rows = cost_report(profiles, units, measured, args.z)
    doc = {"command": "cost", "units": units.costs, "z": args.z, "rows": [r.to_dict() for r in rows]}
    if measured:
        doc["measured_units"] = {k: round(v, 4) for k, v in measured.costs.items()}
    _emit(doc, render_cost_markdown(rows), cfg.format)
    return EXIT_OK


# -- deduce ------------------------------------------------------------------

def cmd_deduce(args, cfg: WorkbenchConfig) -> int:
    path = _data_path(args.kb, "kb/")
    query = parse_kb(path.read_text(), cfg.suite, str(path))
    trace = derivable(query.kb, query.goal, cfg.suite)
    doc = {"command": "deduce", "kb": query.name, "goal": str(query.goal), "derivable": trace is not None,
           "trace": trace.to_dict() if trace else None}
    _emit(doc, trace.render() if trace else "not derivable", cfg.format)
    return EXIT_OK if trace else EXIT_MISMATCH


# -- report ------------------------------------------------------------------

def cmd_report(args, cfg: WorkbenchConfig) -> int:
    runs = []
    for pid in available_protocols():
        if load_model(pid, cfg.suite).executable:
            runs.append(honest_runs(pid, cfg.seed, cfg.trials, cfg.suite)[0])
    jobs = [(aid, pid, cfg.seed, cfg.trials, cfg.suite, None, True)
            for aid, spec in REGISTRY.items() for pid in spec.protocols]
    attacks = _map(attack_summary, jobs, cfg.jobs)
    for a in attacks:
        a.pop("first_outcome")
    m = matrix(None, cfg.seed, cfg.trials, cfg.suite, cfg.jobs)
    check = check_against_reference(m)
    costs = cost_report(load_profiles(), load_units(), None, args.z)
    doc = {"command": "report", "seed": str(cfg.seed), "trials": cfg.trials, "runs": runs, "attacks": attacks,
           "matrix": m.to_dict(), "check": check.to_dict(), "cost": [r.to_dict() for r in costs]}
    md = ["# Workbench report", "", "## Honest runs", "", "| Protocol | Agreed |", "|---|---|"]
    md += [f"| {r['protocol']} | {r['agreed']}/{r['trials']} |" for r in runs]
    md += ["", "## Attacks", "", "| Attack | Protocol | Successes |", "|---|---|---|"]
    md += [f"| {a['attack']} | {a['protocol']} | {a['successes']}/{a['trials']} |" for a in attacks]
    md += ["", "## Criteria", "", m.to_markdown(), "",
           "Reference check: " + ("all cells match" if check.ok else "; ".join(check.mismatches)),
           "", "## Cost", "", render_cost_markdown(costs)]
    _emit(doc, "\n".join(md), cfg.format)
    ok = check.ok and all(r["agreed"] == r["trials"] for r in runs) and all(
        a["successes"] == a["trials"] for a in attacks)
    return EXIT_OK if ok else EXIT_MISMATCH


# -- wiring ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", help="seed label for every random choice (default 0)")
    common.add_argument("--trials", type=int, help="seeded trials per experiment (default 5)")
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--format", choices=FORMATS, help="output format (default json)")
    common.add_argument("--jobs", type=int, help="worker processes for batch runs")

    parser = argparse.ArgumentParser(prog="mfawb", description="Multi-factor authentication protocol workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run honest sessions of one protocol")
    p.add_argument("protocol")
    p.add_argument("--transcripts", action="store_true", help="include every transcript, not just the first")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("attack", parents=[common], help="run a scripted attack")
    p.add_argument("attack", nargs="?")
    p.add_argument("--all", action="store_true", help="run every registered attack")
    p.add_argument("--protocol", help="restrict to one target protocol")
    p.add_argument("--no-compromise", action="store_true", help="strip every compromised factor and store")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", parents=[common], help="score protocols against C1..C8")
    p.add_argument("protocols", nargs="*")
    p.add_argument("--all", action="store_true")
    p.add_argument("--check-paper", "--check-reference", dest="check_paper", action="store_true",
                   help="compare with the packaged reference matrix")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cost", parents=[common], help="cost table with time estimates")
    p.add_argument("--units", help="unit-cost file (microseconds per operation)")
    p.add_argument("--profiles", help="cost-profile table (defaults to the packaged one)")
    p.add_argument("--z", type=int, help="value of the parameter z for affine counts")
    p.add_argument("--measure", action="store_true", help="add a column from local microbenchmarks")
    p.add_argument("--bench-trials", type=int, default=100)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("deduce", parents=[common], help="query the deduction engine with a .kb file")
    p.add_argument("kb")
    p.set_defaults(func=cmd_deduce)

    p = sub.add_parser("report", parents=[common], help="runs, attacks, criteria and costs in one report")
    p.add_argument("--z", type=int)
    p.set_defaults(func=cmd_report)
    return parser


def _configure(args) -> WorkbenchConfig:
    cfg = load_config(args.config) if args.config else WorkbenchConfig()
    if args.seed is not None:
        cfg.seed = int(args.seed) if args.seed.lstrip("-").isdigit() else args.seed
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be positive")
        cfg.trials = args.trials
    if args.format is not None:
        cfg.format = args.format
    if args.jobs is not None:
        cfg.jobs = max(1, args.jobs)
    if cfg.fixtures:
        os.environ[FIXTURE_ENV] = cfg.fixtures
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _configure(args)
        return args.func(args, cfg)
    except (ConfigError, SelectorError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnknownProtocol, UnknownAttack, AttackInapplicable) as exc:
        print(f"unknown: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_UNKNOWN
    except MetadataOnly as exc:
        print(f"metadata-fidelity only: {exc}", file=sys.stderr)
        return EXIT_METADATA
    except PrerequisiteUnmet as exc:
        print(f"prerequisite unmet: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except (FixtureParseError, CostError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"file not found: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_UNKNOWN


if __name__ == "__main__":
    sys.exit(main())
