"""Workbench configuration: a JSON document validated before anything runs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .adversary import CHANNEL_MODES, AdversaryModel, SelectorError
from .primitives import DEFAULT_SUITE, Suite

FORMATS = ("json", "markdown")
_TOP = {"seed", "trials", "format", "fixtures", "jobs", "suite", "adversary"}
_SUITE = set(DEFAULT_SUITE.to_dict())
_ADVERSARY = {"channel", "factors", "stores", "device_read", "longterm_leak", "historical_fraction"}


class ConfigError(ValueError):
    pass


@dataclass
class WorkbenchConfig:
    seed: int | str = 0
    trials: int = 5
    format: str = "json"
    fixtures: str | None = None
    jobs: int = 1
    suite: Suite = DEFAULT_SUITE
    adversary: AdversaryModel | None = None
    overrides: dict = field(default_factory=dict)


def _reject_unknown(block: dict, allowed: set[str], where: str) -> None:
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigError(f"unknown {where} key(s): {', '.join(extra)}")


def parse_config(data: dict) -> WorkbenchConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    _reject_unknown(data, _TOP, "top-level")
    cfg = WorkbenchConfig()
    if "seed" in data:
        if not isinstance(data["seed"], (int, str)) or isinstance(data["seed"], bool):
            raise ConfigError("seed must be an integer or a string")
        cfg.seed = data["seed"]
    for key in ("trials", "jobs"):
        if key in data:
            v = data[key]
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{key} must be a positive integer")
            setattr(cfg, key, v)
    if "format" in data:
        if data["format"] not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
        cfg.format = data["format"]
    if data.get("fixtures") is not None:
        cfg.fixtures = str(data["fixtures"])
    if "suite" in data:
        block = data["suite"]
        if not isinstance(block, dict):
            raise ConfigError("suite must be an object")
        _reject_unknown(block, _SUITE, "suite")
        try:
            cfg.suite = Suite(**{**DEFAULT_SUITE.to_dict(), **block})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"suite: {exc}") from None
    if "adversary" in data:
        block = data["adversary"]
        if not isinstance(block, dict):
            raise ConfigError("adversary must be an object")
        _reject_unknown(block, _ADVERSARY, "adversary")
        if block.get("channel", "eavesdrop") not in CHANNEL_MODES:
            raise ConfigError(f"adversary channel must be one of {', '.join(CHANNEL_MODES)}")
        try:
            cfg.adversary = AdversaryModel(
                channel=block.get("channel", "eavesdrop"),
                factors=tuple(block.get("factors", ())),
                stores=tuple(block.get("stores", ())),
                device_read=frozenset(block.get("device_read", ())),
                longterm_leak=bool(block.get("longterm_leak", False)),
                historical_fraction=float(block.get("historical_fraction", 1.0)))
        except (SelectorError, TypeError, ValueError) as exc:
            raise ConfigError(f"adversary: {exc}") from None
    return cfg


def load_config(path: str | Path) -> WorkbenchConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(data)
