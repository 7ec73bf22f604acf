"""Automaton and template configuration files.

Both are JSON documents carrying a ``config_version`` field. The automaton
maps each agent phase to a probability distribution over dialogue acts, plus
numeric parameters; the template set maps ``(speaker, act[, slot])`` to
utterance templates with ``{value}``, ``{slot}`` and ``{intent}`` placeholders.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from ..corpus import DEFAULT_ACTS, INTENT_ACTS, SYSTEM, USER, ActVocabulary

CONFIG_VERSION = 1
TOLERANCE = 1e-9

# Acts realized with a value placeholder; every other act must not use {value}.
VALUE_ACTS = {
    USER: frozenset({"INFORM"}),
    SYSTEM: frozenset({"INFORM", "CONFIRM", "OFFER", "INFORM_COUNT"}),
}

DISTRIBUTION_PARAMS = (
    "num_services",
    "intents_per_service",
    "slots_with_intent",
    "extra_slots_with_answer",
    "slots_per_request",
    "offer_extra_slots",
)
PROBABILITY_PARAMS = ("optional_goal_prob", "inform_count_prob", "carryover_prob")
COUNT_PARAMS = ("max_user_requests", "max_negations", "max_alternatives")


class ConfigError(ValueError):
    pass


def _check_distribution(dist: Mapping, where: str) -> None:
    if not dist:
        raise ConfigError(f"{where}: empty distribution")
    for k, p in dist.items():
        if not isinstance(p, (int, float)) or p < 0:
            raise ConfigError(f"{where}.{k}: probability must be a non-negative number")
    total = sum(dist.values())
    if abs(total - 1.0) > TOLERANCE:
        raise ConfigError(f"{where}: probabilities sum to {total!r}, expected 1")


def config_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


@dataclass(frozen=True)
class AutomatonConfig:
    phases: dict[str, dict[str, float]]
    params: dict
    max_turns: int = 40
    max_intents: int = 5
    slot_aliases: dict[str, tuple[str, ...]] = field(default_factory=dict)
    config_version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.max_turns < 2:
            raise ConfigError("max_turns must be at least 2")
        if self.max_intents < 1:
            raise ConfigError("max_intents must be at least 1")
        for phase, dist in self.phases.items():
            _check_distribution(dist, f"phases.{phase}")
        for name in DISTRIBUTION_PARAMS:
            if name not in self.params:
                raise ConfigError(f"params.{name} missing")
            _check_distribution(self.params[name], f"params.{name}")
            for k in self.params[name]:
                if not str(k).isdigit():
                    raise ConfigError(f"params.{name}: keys must be non-negative integers, got {k!r}")
        for name in PROBABILITY_PARAMS:
            p = self.params.get(name)
            if not isinstance(p, (int, float)) or not 0 <= p <= 1:
                raise ConfigError(f"params.{name} must be a probability")
        for name in COUNT_PARAMS:
            n = self.params.get(name)
            if not isinstance(n, int) or n < 0:
                raise ConfigError(f"params.{name} must be a non-negative integer")

    def distribution(self, name: str) -> list[tuple[int, float]]:
        return sorted((int(k), float(p)) for k, p in self.params[name].items())

    @classmethod
    def from_json(cls, raw: Mapping) -> "AutomatonConfig":
        version = raw.get("config_version")
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported automaton config_version {version!r}")
        return cls(
            phases={p: dict(d) for p, d in raw["phases"].items()},
            params=dict(raw["params"]),
            max_turns=raw.get("max_turns", 40),
            max_intents=raw.get("max_intents", 5),
            slot_aliases={k: tuple(v) for k, v in raw.get("slot_aliases", {}).items()},
            config_version=version,
        )

    def to_json(self) -> dict:
        return {
            "config_version": self.config_version,
            "max_turns": self.max_turns,
            "max_intents": self.max_intents,
            "phases": self.phases,
            "params": self.params,
            "slot_aliases": {k: list(v) for k, v in self.slot_aliases.items()},
        }

    def with_params(self, **changes) -> "AutomatonConfig":
        params = dict(self.params)
        params.update(changes)
        return AutomatonConfig(
            dict(self.phases), params, self.max_turns, self.max_intents, dict(self.slot_aliases), self.config_version
        )


@dataclass(frozen=True)
class TemplateSet:
    # (speaker, act, slot or None) -> templates
    templates: dict[tuple[str, str, str | None], tuple[str, ...]]
    config_version: int = CONFIG_VERSION

    def lookup(self, speaker: str, act: str, slot: str | None) -> tuple[str, ...]:
        specific = self.templates.get((speaker, act, slot))
        if specific:
            return specific
        generic = self.templates.get((speaker, act, None))
        if not generic:
            raise ConfigError(f"no template for {speaker} act {act!r} (slot {slot!r})")
        return generic

    @classmethod
    def from_json(cls, raw: Mapping, acts: ActVocabulary = DEFAULT_ACTS) -> "TemplateSet":
        version = raw.get("config_version")
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported template config_version {version!r}")
        table: dict[tuple[str, str, str | None], tuple[str, ...]] = {}
        for speaker, entries in raw["templates"].items():
            if speaker not in (USER, SYSTEM):
                raise ConfigError(f"templates.{speaker}: unknown speaker")
            for key, temps in entries.items():
                act, _, slot = key.partition(":")
                if not isinstance(temps, list) or not temps:
                    raise ConfigError(f"templates.{speaker}.{key}: expected a non-empty list")
                table[(speaker, act, slot or None)] = tuple(temps)
        ts = cls(table, version)
        ts.check(acts)
        return ts

    def check(self, acts: ActVocabulary = DEFAULT_ACTS) -> None:
        """Every vocabulary act needs a generic template; placeholders must fit the act."""
        for speaker in (USER, SYSTEM):
            for act in sorted(acts.for_speaker(speaker)):
                if (speaker, act, None) not in self.templates:
                    raise ConfigError(f"templates.{speaker}: no template for act {act!r}")
        for (speaker, act, slot), temps in self.templates.items():
            for t in temps:
                fields = {f for _, f, _, _ in string.Formatter().parse(t) if f is not None}
                where = f"templates.{speaker}.{act}{':' + slot if slot else ''}"
                unknown = fields - {"value", "slot", "intent"}
                if unknown:
                    raise ConfigError(f"{where}: unknown placeholder(s) {sorted(unknown)} in {t!r}")
                if act in INTENT_ACTS:
                    if fields != {"intent"}:
                        raise ConfigError(f"{where}: intent acts take exactly {{intent}}: {t!r}")
                elif act in VALUE_ACTS[speaker]:
                    if "value" not in fields:
                        raise ConfigError(f"{where}: act carries a value but {t!r} has no {{value}}")
                    if t.count("{value}") != 1:
                        raise ConfigError(f"{where}: {{value}} must appear exactly once in {t!r}")
                elif "value" in fields:
                    raise ConfigError(f"{where}: act takes no value but {t!r} uses {{value}}")


def _read(path: str | Path | None, default_name: str) -> bytes:
    if path is None:
        return resources.files("sgdkit.data").joinpath(default_name).read_bytes()
    return Path(path).read_bytes()


def load_automaton(path: str | Path | None = None) -> AutomatonConfig:
    """Load an automaton config; ``None`` gives the bundled default."""
    return AutomatonConfig.from_json(json.loads(_read(path, "automaton.json")))


def load_templates(path: str | Path | None = None, acts: ActVocabulary = DEFAULT_ACTS) -> TemplateSet:
    return TemplateSet.from_json(json.loads(_read(path, "templates.json")), acts)


def file_digest(path: str | Path | None, default_name: str) -> str:
    return config_digest(_read(path, default_name))
