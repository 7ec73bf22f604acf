"""Rule-based dialogue state tracking, plus the oracle tracker used for testing.

The rule-based tracker reads user utterances and the system acts of the
previous turn. It is a reference point for the metrics, not a competitive
model. Per service it keeps a cumulative state and applies, per user turn:

1. intent: an intent is mentioned when every token of its humanized name
   occurs in the utterance (ties broken by description keywords); negated
   utterances never switch intent; otherwise the previous intent carries over;
2. categorical slots: whole-word match of a possible value inside a sentence.
   Numbers, and values shared by several slots of the service (True/False),
   also need every token of the slot name in that sentence;
3. non-categorical argument slots: longest non-overlapping, case-insensitive
   match against entity-table and value-pool strings. A string that fits
   several slots goes to the slot the system just requested, else to the slot
   named in the same sentence, else to the first candidate in schema order;
4. an affirmative, non-negated utterance adopts the values of the system's
   previous OFFER and CONFIRM acts;
5. requested slots: a question sentence containing every token of a slot name.
"""

from __future__ import annotations

import re
from dataclasses import replace
from typing import Iterable, Mapping, Sequence

from .corpus import NONE_INTENT, SYSTEM, USER, Dialogue, Frame, FrameState, Turn
from .schema import ServiceSchema
from .services import EntityTable
from .simulator.realize import humanize_intent, humanize_slot

STOPWORDS = frozenset(
    "a an and are be by can do for from i in is it me my of on or the this that to want what which with would you".split()
)
NEGATIONS = frozenset({"no", "not", "don't", "dont", "nope", "never", "n't"})
AFFIRMATIONS = frozenset({"yes", "yeah", "sure", "ok", "okay", "works", "good", "great", "right", "perfect", "fine"})
_TOKEN = re.compile(r"[a-z0-9']+")
_SENTENCE = re.compile(r"[^.?!]+[.?!]?")


def tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _content(words: Iterable[str]) -> set[str]:
    return {w for w in words if w not in STOPWORDS}


def sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE.findall(text) if s.strip()]


def is_negated(text: str) -> bool:
    return any(t in NEGATIONS or t.endswith("n't") for t in tokens(text))


def _word_spans(needle: str, haystack: str) -> list[tuple[int, int]]:
    pattern = r"(?<![\w])" + re.escape(needle.lower()) + r"(?![\w])"
    return [(m.start(), m.end()) for m in re.finditer(pattern, haystack.lower())]


class ServiceTracker:
    """Candidate values and name tokens for one service."""

    def __init__(self, schema: ServiceSchema, table: EntityTable | None, pools: Mapping[str, tuple[str, ...]]):
        self.schema = schema
        self.intent_tokens = {i.name: set(tokens(humanize_intent(i.name))) for i in schema.intents}
        self.intent_keywords = {i.name: _content(tokens(i.description)) for i in schema.intents}
        self.slot_tokens = {s.name: _content(tokens(humanize_slot(s.name))) for s in schema.slots}
        arguments = [s.name for s in schema.slots if any(s.name in i.argument_slots for i in schema.intents)]
        self.categorical = [s for s in schema.slots if s.is_categorical and s.name in arguments]
        owners: dict[str, int] = {}
        for s in self.categorical:
            for v in s.possible_values:
                owners[v.lower()] = owners.get(v.lower(), 0) + 1
        self.shared_values = {v for v, n in owners.items() if n > 1}
        # non-categorical: lowercase surface -> (canonical string, slots in schema order)
        self.candidates: dict[str, tuple[str, list[str]]] = {}
        for s in schema.slots:
            if s.is_categorical or s.name not in arguments:
                continue
            values: list[str] = []
            if table is not None and s.name in table.columns:
                values += table.values(s.name)
            values += pools.get(f"{schema.service_name}.{s.name}") or pools.get(s.name) or ()
            for v in values:
                canonical, slots = self.candidates.setdefault(v.lower(), (v, []))
                if s.name not in slots:
                    slots.append(s.name)

    def intent(self, utterance: str, previous: str) -> str:
        if is_negated(utterance):
            return previous
        words = set(tokens(utterance))
        best, best_score = None, 0
        for i in self.schema.intents:
            name = self.intent_tokens[i.name]
            if not name or not name <= words:
                continue
            score = 2 * len(name) + len(self.intent_keywords[i.name] & words)
            if score > best_score:
                best, best_score = i.name, score
        return best or previous

    def categorical_values(self, utterance: str) -> dict[str, str]:
        found: dict[str, str] = {}
        for sent in sentences(utterance):
            words = set(tokens(sent))
            for s in self.categorical:
                for v in s.possible_values:
                    if not _word_spans(v, sent):
                        continue
                    ambiguous = v.lower() in self.shared_values or v.isdigit()
                    if ambiguous and not self.slot_tokens[s.name] <= words:
                        continue
                    found[s.name] = v
        return found

    def noncategorical_values(self, utterance: str, requested: Sequence[str]) -> dict[str, str]:
        hits = []
        for surface, (canonical, slots) in self.candidates.items():
            for start, end in _word_spans(surface, utterance):
                hits.append((end - start, start, end, canonical, slots))
        hits.sort(key=lambda h: (-h[0], h[1]))
        taken: list[tuple[int, int]] = []
        found: dict[str, str] = {}
        for _, start, end, canonical, slots in hits:
            if any(start < e and s < end for s, e in taken):
                continue
            taken.append((start, end))
            slot = self._pick_slot(slots, utterance, start, requested, found)
            if slot is not None:
                found[slot] = canonical
        return found

    def _pick_slot(self, slots, utterance, start, requested, found) -> str | None:
        free = [s for s in slots if s not in found] or slots
        if len(free) == 1:
            return free[0]
        for s in free:
            if s in requested:
                return s
        sentence = utterance  # narrowed to the sentence holding the match
        pos = 0
        for sent in sentences(utterance):
            idx = utterance.find(sent, pos)
            if idx <= start < idx + len(sent):
                sentence = sent
                break
            pos = idx + len(sent)
        words = set(tokens(sentence))
        for s in free:
            if self.slot_tokens[s] and self.slot_tokens[s] <= words:
                return s
        return free[0]

    def requested_slots(self, utterance: str) -> tuple[str, ...]:
        out = []
        for sent in sentences(utterance):
            if not sent.endswith("?"):
                continue
            words = set(tokens(sent))
            for s in self.schema.slots:
                if self.slot_tokens[s.name] and self.slot_tokens[s.name] <= words and s.name not in out:
                    out.append(s.name)
        return tuple(out)


def _system_acts(turn: Turn | None, service: str) -> list:
    if turn is None or turn.speaker != SYSTEM:
        return []
    frame = turn.frame(service)
    return list(frame.actions) if frame else []


def track_dialogue(
    d: Dialogue,
    schemas: Mapping[str, ServiceSchema],
    tables: Mapping[str, EntityTable],
    pools: Mapping[str, tuple[str, ...]] | None = None,
    _cache: dict | None = None,
) -> Dialogue:
    """Fill every user frame's state; user annotations in ``d`` are ignored."""
    pools = pools or {}
    cache = _cache if _cache is not None else {}
    states: dict[str, tuple[str, dict[str, str]]] = {}
    turns = []
    for t, turn in enumerate(d.turns):
        if turn.speaker != USER:
            turns.append(turn)
            continue
        prev_system = d.turns[t - 1] if t > 0 else None
        frames = []
        for frame in turn.frames:
            schema = schemas[frame.service]
            tracker = cache.get(frame.service)
            if tracker is None:
                tracker = cache[frame.service] = ServiceTracker(schema, tables.get(frame.service), pools)
            intent, values = states.get(frame.service, (NONE_INTENT, {}))
            values = dict(values)
            text = turn.utterance
            sys_acts = _system_acts(prev_system, frame.service)
            asked = [a.slot for a in sys_acts if a.act == "REQUEST"]
            intent = tracker.intent(text, intent)
            words = set(tokens(text))
            if words & AFFIRMATIONS and not is_negated(text):
                for a in sys_acts:
                    if a.act in ("OFFER", "CONFIRM") and a.values and schema.has_slot(a.slot):
                        values[a.slot] = a.values[0]
            values.update(tracker.categorical_values(text))
            values.update(tracker.noncategorical_values(text, asked))
            states[frame.service] = (intent, values)
            state = FrameState(intent, tracker.requested_slots(text), {k: (v,) for k, v in values.items()})
            frames.append(Frame(service=frame.service, state=state))
        turns.append(replace(turn, frames=tuple(frames)))
    return replace(d, turns=tuple(turns))


def track_corpus(
    dialogues: Sequence[Dialogue],
    schemas: Mapping[str, ServiceSchema],
    tables: Mapping[str, EntityTable],
    pools: Mapping[str, tuple[str, ...]] | None = None,
) -> list[Dialogue]:
    cache: dict = {}
    return [track_dialogue(d, schemas, tables, pools, cache) for d in dialogues]


def oracle_track(dialogues: Sequence[Dialogue]) -> list[Dialogue]:
    """Hypotheses copied from the reference states (first variant per slot)."""
    out = []
    for d in dialogues:
        turns = []
        for turn in d.turns:
            if turn.speaker != USER:
                turns.append(turn)
                continue
            frames = []
            for f in turn.frames:
                st = f.state or FrameState()
                values = {k: (v[0],) for k, v in st.slot_values.items() if v}
                frames.append(Frame(service=f.service, state=FrameState(st.active_intent, st.requested_slots, values)))
            turns.append(replace(turn, frames=tuple(frames)))
        out.append(replace(d, turns=tuple(turns)))
    return out


def empty_track(dialogues: Sequence[Dialogue]) -> list[Dialogue]:
    """The all-empty predictor: NONE intent, nothing requested, no slot values."""
    return [
        replace(
            d,
            turns=tuple(
                replace(t, frames=tuple(Frame(service=f.service, state=FrameState()) for f in t.frames))
                if t.speaker == USER
                else t
                for t in d.turns
            ),
        )
        for d in dialogues
    ]
