"""Corpus statistics: counts, length and act histograms, per-domain tallies.

Tokens are whitespace-delimited units of the trimmed utterance; the
unique-token count lowercases them first. Averages are kept as exact
fractions and only converted to floats for display.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import USER, Dialogue
from .schema import ServiceSchema

LENGTHS_CSV = "dialogue_lengths.csv"
ACTS_CSV = "dialogue_acts.csv"


class StatsError(ValueError):
    pass


def default_domain(service: str) -> str:
    """``Restaurants_1`` -> ``Restaurants``: the part before the last version suffix."""
    head, sep, tail = service.rpartition("_")
    return head if sep and tail.isdigit() else service


def load_domain_map(path: str | Path) -> dict[str, str]:
    """A JSON object mapping service name to domain name."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or not all(isinstance(v, str) for v in raw.values()):
        raise StatsError(f"{path}: expected a JSON object of service -> domain")
    return dict(raw)


def load_service_list(path: str | Path) -> list[str]:
    """Newline-delimited service names; blank lines and ``#`` comments ignored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]


@dataclass
class DomainStats:
    intents: int = 0
    services: int = 0
    dialogues: int = 0


@dataclass
class StatsReport:
    num_domains: int
    num_dialogues: int
    total_turns: int
    total_tokens: int
    total_unique_tokens: int
    num_slots: int
    num_slot_values: int
    num_service_slot_values: int
    single_domain_lengths: dict[int, int]
    multi_domain_lengths: dict[int, int]
    act_histogram: dict[str, int]
    per_domain: dict[str, DomainStats]
    unseen_turns: int | None = None
    seen_services: tuple[str, ...] | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def avg_turns(self) -> Fraction:
        return Fraction(self.total_turns, self.num_dialogues)

    @property
    def avg_turns_per_dialogue(self) -> float:
        return float(self.avg_turns)

    @property
    def avg_tokens_per_turn(self) -> float:
        return float(Fraction(self.total_tokens, self.total_turns)) if self.total_turns else 0.0

    @property
    def unseen_turn_fraction(self) -> float | None:
        if self.unseen_turns is None:
            return None
        return float(Fraction(self.unseen_turns, self.total_turns)) if self.total_turns else 0.0

    def to_json(self) -> dict:
        return {
            "num_domains": self.num_domains,
            "num_dialogues": self.num_dialogues,
            "total_turns": self.total_turns,
            "avg_turns_per_dialogue": self.avg_turns_per_dialogue,
            "total_tokens": self.total_tokens,
            "avg_tokens_per_turn": self.avg_tokens_per_turn,
            "total_unique_tokens": self.total_unique_tokens,
            "num_slots": self.num_slots,
            "num_slot_values": self.num_slot_values,
            "num_service_slot_values": self.num_service_slot_values,
            "length_histograms": {
                "single_domain": {str(k): v for k, v in sorted(self.single_domain_lengths.items())},
                "multi_domain": {str(k): v for k, v in sorted(self.multi_domain_lengths.items())},
            },
            "act_histogram": dict(sorted(self.act_histogram.items())),
            "per_domain": {
                k: {"intents": d.intents, "services": d.services, "dialogues": d.dialogues}
                for k, d in sorted(self.per_domain.items())
            },
            "seen_services": None if self.seen_services is None else list(self.seen_services),
            "unseen_turns": self.unseen_turns,
            "unseen_turn_fraction": self.unseen_turn_fraction,
            "notes": list(self.notes),
        }


def compute_stats(
    corpus: Sequence[Dialogue],
    schemas: Mapping[str, ServiceSchema],
    seen_services: Iterable[str] | None = None,
    domain_map: Mapping[str, str] | None = None,
) -> StatsReport:
    """Corpus statistics.

    ``num_slots`` counts (service, slot) pairs over the schemas of services
    that occur in the corpus; ``num_slot_values`` counts distinct
    (slot, value) pairs in user states over all variants, and
    ``num_service_slot_values`` the (service, slot, value) alternative. A turn
    is unseen when any of its frames names a service outside
    ``seen_services``; without a seen set the fraction is not computed.
    """
    if not corpus:
        raise StatsError("empty corpus")
    domain_of = (lambda s: domain_map.get(s, default_domain(s))) if domain_map else default_domain
    seen = None if seen_services is None else frozenset(seen_services)

    total_turns = total_tokens = 0
    unseen_turns = 0
    vocab: set[str] = set()
    slot_values: set[tuple[str, str]] = set()
    service_slot_values: set[tuple[str, str, str]] = set()
    acts: Counter[str] = Counter()
    single: Counter[int] = Counter()
    multi: Counter[int] = Counter()
    services_used: set[str] = set()
    domain_dialogues: Counter[str] = Counter()

    for d in corpus:
        total_turns += len(d.turns)
        services = set(d.services)
        for turn in d.turns:
            words = turn.utterance.strip().split()
            total_tokens += len(words)
            vocab.update(w.lower() for w in words)
            if seen is not None and any(f.service not in seen for f in turn.frames):
                unseen_turns += 1
            for f in turn.frames:
                services.add(f.service)
                acts.update(a.act for a in f.actions)
                if turn.speaker == USER and f.state is not None:
                    for slot, variants in f.state.slot_values.items():
                        for v in variants:
                            slot_values.add((slot, v))
                            service_slot_values.add((f.service, slot, v))
        services_used |= services
        domains = {domain_of(s) for s in services}
        (single if len(domains) <= 1 else multi)[len(d.turns)] += 1
        domain_dialogues.update(domains)

    missing = sorted(s for s in services_used if s not in schemas)
    if missing:
        raise StatsError(f"no schema for service(s): {', '.join(missing)}")
    per_domain: dict[str, DomainStats] = {}
    for s in sorted(services_used):
        entry = per_domain.setdefault(domain_of(s), DomainStats())
        entry.services += 1
        entry.intents += len(schemas[s].intents)
    for dom, n in domain_dialogues.items():
        per_domain[dom].dialogues = n

    return StatsReport(
        num_domains=len(per_domain),
        num_dialogues=len(corpus),
        total_turns=total_turns,
        total_tokens=total_tokens,
        total_unique_tokens=len(vocab),
        num_slots=sum(len(schemas[s].slots) for s in services_used),
        num_slot_values=len(slot_values),
        num_service_slot_values=len(service_slot_values),
        single_domain_lengths=dict(single),
        multi_domain_lengths=dict(multi),
        act_histogram=dict(acts),
        per_domain=per_domain,
        unseen_turns=None if seen is None else unseen_turns,
        seen_services=None if seen is None else tuple(sorted(seen)),
    )


def _csv(rows: list[list]) -> bytes:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue().encode("utf-8")


def render_histograms(report: StatsReport) -> dict[str, bytes]:
    """Plot-ready CSV tables, keyed by file name.

    ``dialogue_lengths.csv`` has one row per distinct length with single- and
    multi-domain counts; ``dialogue_acts.csv`` one row per act, most frequent
    first (ties by name).
    """
    lengths = sorted(set(report.single_domain_lengths) | set(report.multi_domain_lengths))
    length_rows = [["length", "single_domain", "multi_domain"]] + [
        [n, report.single_domain_lengths.get(n, 0), report.multi_domain_lengths.get(n, 0)] for n in lengths
    ]
    act_rows = [["act", "count"]] + [
        [a, c] for a, c in sorted(report.act_histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return {LENGTHS_CSV: _csv(length_rows), ACTS_CSV: _csv(act_rows)}
