"""Annotated dialogues in the released SGD dialogue-file format.

A dialogue is a list of alternating USER/SYSTEM turns. Each turn carries one
frame per service it touches; user frames hold the dialogue state for that
service, system frames hold the system actions. Character offsets in spans
count Unicode code points (Python ``str`` indices), never bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .schema import DONTCARE, SchemaValidationReport, ServiceSchema, _Reader, load_json_document

USER = "USER"
SYSTEM = "SYSTEM"
NONE_INTENT = "NONE"

# Acts whose slot parameter names an intent or a count rather than a schema slot.
INTENT_ACTS = frozenset({"INFORM_INTENT", "NEGATE_INTENT", "AFFIRM_INTENT", "OFFER_INTENT"})
COUNT_SLOT = "count"
INTENT_SLOT = "intent"


class CorpusParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.msg = message
        self.line = line
        self.column = column


class CorpusFormatError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.msg = message


class CorpusValidationError(ValueError):
    def __init__(self, dialogue_id: str, report: SchemaValidationReport):
        first = "; ".join(f"{loc}: {msg}" for loc, msg in report.errors[:5])
        super().__init__(f"dialogue {dialogue_id} is invalid: {first}")
        self.dialogue_id = dialogue_id
        self.report = report


@dataclass(frozen=True)
class ActVocabulary:
    user: frozenset[str]
    system: frozenset[str]

    def for_speaker(self, speaker: str) -> frozenset[str]:
        return self.user if speaker == USER else self.system

    @classmethod
    def from_json(cls, raw: Mapping) -> "ActVocabulary":
        return cls(user=frozenset(raw[USER]), system=frozenset(raw[SYSTEM]))


DEFAULT_ACTS = ActVocabulary(
    user=frozenset(
        {
            "INFORM_INTENT",
            "NEGATE_INTENT",
            "AFFIRM_INTENT",
            "INFORM",
            "REQUEST",
            "AFFIRM",
            "NEGATE",
            "SELECT",
            "REQUEST_ALTS",
            "THANK_YOU",
            "GOODBYE",
        }
    ),
    system=frozenset(
        {
            "INFORM",
            "REQUEST",
            "CONFIRM",
            "OFFER",
            "NOTIFY_SUCCESS",
            "NOTIFY_FAILURE",
            "INFORM_COUNT",
            "OFFER_INTENT",
            "REQ_MORE",
            "GOODBYE",
        }
    ),
)


@dataclass(frozen=True)
class DialogueAct:
    act: str
    slot: str | None = None
    values: tuple[str, ...] = ()
    canonical_values: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SlotSpan:
    """A slot value mention; ``end`` is exclusive.

    Spans copied from another service (``copy_from``) have no offsets, matching
    the released data; their ``value`` may then be a tuple of strings.
    """

    slot: str
    start: int | None
    end: int | None
    value: str | tuple[str, ...]
    copy_from: str | None = None


@dataclass(frozen=True)
class FrameState:
    active_intent: str = NONE_INTENT
    requested_slots: tuple[str, ...] = ()
    # slot -> accepted value variants (non-empty)
    slot_values: dict[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class Frame:
    service: str
    state: FrameState | None = None
    actions: tuple[DialogueAct, ...] = ()
    spans: tuple[SlotSpan, ...] = ()
    service_call: dict | None = None
    service_results: list | None = None


@dataclass(frozen=True)
class Turn:
    speaker: str
    utterance: str
    frames: tuple[Frame, ...]

    def frame(self, service: str) -> Frame | None:
        for f in self.frames:
            if f.service == service:
                return f
        return None


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    services: tuple[str, ...]
    turns: tuple[Turn, ...]


# ---------------------------------------------------------------- parsing

_DIALOGUE_FIELDS = ("dialogue_id", "services", "turns")
_TURN_FIELDS = ("speaker", "utterance", "frames")
_FRAME_FIELDS = ("service", "slots", "state", "actions", "service_call", "service_results")
_STATE_FIELDS = ("active_intent", "requested_slots", "slot_values")
_ACT_FIELDS = ("act", "slot", "values", "canonical_values")
_SPAN_FIELDS = ("slot", "start", "exclusive_end", "copy_from", "value")


def _parse_act(r: _Reader, raw, path: str) -> DialogueAct:
    obj = r.obj(raw, path, _ACT_FIELDS, ("act",))
    slot = r.str(obj.get("slot", ""), f"{path}.slot")
    canonical = obj.get("canonical_values")
    return DialogueAct(
        act=r.str(obj["act"], f"{path}.act"),
        slot=slot or None,
        values=r.str_list(obj.get("values", []), f"{path}.values"),
        canonical_values=None if canonical is None else r.str_list(canonical, f"{path}.canonical_values"),
    )


def _parse_span(r: _Reader, raw, path: str, utterance: str) -> SlotSpan:
    obj = r.obj(raw, path, _SPAN_FIELDS, ("slot",))
    slot = r.str(obj["slot"], f"{path}.slot")
    if "copy_from" in obj:
        value = obj.get("value", "")
        value = r.str_list(value, f"{path}.value") if isinstance(value, list) else r.str(value, f"{path}.value")
        return SlotSpan(slot, None, None, value, copy_from=r.str(obj["copy_from"], f"{path}.copy_from"))
    for key in ("start", "exclusive_end"):
        if key not in obj:
            raise CorpusFormatError(path, f"missing field {key!r}")
    start = r.int(obj["start"], f"{path}.start")
    end = r.int(obj["exclusive_end"], f"{path}.exclusive_end")
    value = obj.get("value")
    if value is None:
        value = utterance[max(start, 0) : max(end, 0)]
    return SlotSpan(slot, start, end, r.str(value, f"{path}.value"))


def _parse_state(r: _Reader, raw, path: str, hypothesis: bool) -> FrameState:
    obj = r.obj(raw, path, _STATE_FIELDS, ())
    values = obj.get("slot_values", {})
    if not isinstance(values, dict):
        raise CorpusFormatError(f"{path}.slot_values", "expected an object")
    slot_values = {}
    for slot, v in values.items():
        vpath = f"{path}.slot_values.{slot}"
        if isinstance(v, str) and hypothesis:
            slot_values[slot] = (v,)
        else:
            slot_values[slot] = r.str_list(v, vpath)
    return FrameState(
        active_intent=r.str(obj.get("active_intent", NONE_INTENT), f"{path}.active_intent"),
        requested_slots=r.str_list(obj.get("requested_slots", []), f"{path}.requested_slots"),
        slot_values=slot_values,
    )


def _parse_frame(r: _Reader, raw, path: str, utterance: str, hypothesis: bool) -> Frame:
    obj = r.obj(raw, path, _FRAME_FIELDS, ("service",))
    state = obj.get("state")
    return Frame(
        service=r.str(obj["service"], f"{path}.service"),
        state=None if state is None else _parse_state(r, state, f"{path}.state", hypothesis),
        actions=tuple(
            _parse_act(r, a, f"{path}.actions[{i}]") for i, a in enumerate(r.list(obj.get("actions", []), path))
        ),
        spans=tuple(
            _parse_span(r, s, f"{path}.slots[{i}]", utterance)
            for i, s in enumerate(r.list(obj.get("slots", []), path))
        ),
        service_call=obj.get("service_call"),
        service_results=obj.get("service_results"),
    )


def dialogue_from_json(raw, path: str = "$", *, strict: bool = True, warnings=None, hypothesis=False) -> Dialogue:
    r = _Reader(strict, warnings, CorpusFormatError)
    obj = r.obj(raw, path, _DIALOGUE_FIELDS, ("dialogue_id", "turns"))
    turns = []
    for t, traw in enumerate(r.list(obj["turns"], f"{path}.turns")):
        tpath = f"{path}.turns[{t}]"
        tobj = r.obj(traw, tpath, _TURN_FIELDS, ("speaker",))
        utterance = r.str(tobj.get("utterance", ""), f"{tpath}.utterance")
        frames = tuple(
            _parse_frame(r, f, f"{tpath}.frames[{i}]", utterance, hypothesis)
            for i, f in enumerate(r.list(tobj.get("frames", []), f"{tpath}.frames"))
        )
        turns.append(Turn(r.str(tobj["speaker"], f"{tpath}.speaker"), utterance, frames))
    return Dialogue(
        dialogue_id=r.str(obj["dialogue_id"], f"{path}.dialogue_id"),
        services=r.str_list(obj.get("services", []), f"{path}.services"),
        turns=tuple(turns),
    )


def parse_dialogues(
    data: bytes | str, *, strict: bool = True, warnings: list | None = None, hypothesis: bool = False
) -> list[Dialogue]:
    """Parse a dialogue document (a JSON array of dialogues).

    ``hypothesis=True`` additionally accepts single-string slot values, the
    form used by tracker output files.
    """
    doc = load_json_document(data, CorpusParseError)
    if not isinstance(doc, list):
        raise CorpusFormatError("$", "top-level value must be a list of dialogues")
    return [
        dialogue_from_json(raw, f"$[{i}]", strict=strict, warnings=warnings, hypothesis=hypothesis)
        for i, raw in enumerate(doc)
    ]


# ---------------------------------------------------------- serialization


def _act_to_json(a: DialogueAct) -> dict:
    out = {"act": a.act, "slot": a.slot or "", "values": list(a.values)}
    if a.canonical_values is not None:
        out["canonical_values"] = list(a.canonical_values)
    return out


def _span_to_json(s: SlotSpan) -> dict:
    if s.copy_from is not None:
        value = list(s.value) if isinstance(s.value, tuple) else s.value
        return {"copy_from": s.copy_from, "slot": s.slot, "value": value}
    return {"exclusive_end": s.end, "slot": s.slot, "start": s.start}


def _frame_to_json(f: Frame, single_values: bool) -> dict:
    out: dict = {"actions": [_act_to_json(a) for a in f.actions], "service": f.service}
    if f.service_call is not None:
        out["service_call"] = f.service_call
    if f.service_results is not None:
        out["service_results"] = f.service_results
    out["slots"] = [_span_to_json(s) for s in f.spans]
    if f.state is not None:
        values = {
            k: (v[0] if single_values else list(v)) for k, v in f.state.slot_values.items() if v or not single_values
        }
        out["state"] = {
            "active_intent": f.state.active_intent,
            "requested_slots": list(f.state.requested_slots),
            "slot_values": values,
        }
    return out


def dialogue_to_json(d: Dialogue, single_values: bool = False) -> dict:
    return {
        "dialogue_id": d.dialogue_id,
        "services": list(d.services),
        "turns": [
            {
                "frames": [_frame_to_json(f, single_values) for f in t.frames],
                "speaker": t.speaker,
                "utterance": t.utterance,
            }
            for t in d.turns
        ],
    }


def serialize_dialogues(dialogues: Sequence[Dialogue], *, single_values: bool = False) -> bytes:
    """Canonical bytes: sorted keys, two-space indent, like the released files."""
    doc = [dialogue_to_json(d, single_values) for d in dialogues]
    return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


# ------------------------------------------------------------- validation


def _check_state(report, loc: str, state: FrameState, schema: ServiceSchema) -> None:
    if state.active_intent != NONE_INTENT and not schema.has_intent(state.active_intent):
        report.error(f"{loc}.active_intent", f"unknown intent {state.active_intent!r}")
    for j, slot in enumerate(state.requested_slots):
        if not schema.has_slot(slot):
            report.error(f"{loc}.requested_slots[{j}]", f"unknown slot {slot!r}")
    for slot, variants in state.slot_values.items():
        vloc = f"{loc}.slot_values.{slot}"
        if not schema.has_slot(slot):
            report.error(vloc, f"unknown slot {slot!r}")
            continue
        if not variants:
            report.error(vloc, "empty value list")
        if len(set(variants)) != len(variants):
            report.error(vloc, "duplicate value variants")
        sdef = schema.slot(slot)
        if sdef.is_categorical:
            for v in variants:
                if v != DONTCARE and v not in sdef.possible_values:
                    report.error(vloc, f"value {v!r} is not a possible value of {slot!r}")


def _check_act(report, loc: str, act: DialogueAct, speaker: str, schema: ServiceSchema, acts: ActVocabulary):
    if act.act not in acts.for_speaker(speaker):
        report.error(f"{loc}.act", f"act {act.act!r} is not in the {speaker} vocabulary")
    if act.values and not act.slot:
        report.error(f"{loc}.slot", "act carries values but no slot")
    if act.slot is None:
        return
    if act.act in INTENT_ACTS:
        for v in act.values:
            if not schema.has_intent(v):
                report.error(f"{loc}.values", f"unknown intent {v!r}")
    elif act.slot != COUNT_SLOT and not schema.has_slot(act.slot):
        report.error(f"{loc}.slot", f"unknown slot {act.slot!r}")


def validate_dialogue(
    d: Dialogue, schemas: Mapping[str, ServiceSchema], acts: ActVocabulary = DEFAULT_ACTS
) -> SchemaValidationReport:
    """Report every representation-rule violation in ``d``, in document order."""
    report = SchemaValidationReport()
    if not d.dialogue_id:
        report.error("dialogue_id", "empty dialogue id")
    if not d.turns:
        report.error("turns", "dialogue has no turns")
    for t, turn in enumerate(d.turns):
        tloc = f"turns[{t}]"
        expected = USER if t % 2 == 0 else SYSTEM
        if turn.speaker not in (USER, SYSTEM):
            report.error(f"{tloc}.speaker", f"unknown speaker {turn.speaker!r}")
        elif turn.speaker != expected:
            report.error(f"{tloc}.speaker", f"expected {expected} (turns alternate starting with USER)")
        if not turn.frames:
            report.error(f"{tloc}.frames", "turn has no frames")
        seen: dict[str, int] = {}
        for i, frame in enumerate(turn.frames):
            floc = f"{tloc}.frames[{i}]"
            if frame.service in seen:
                report.error(f"{floc}.service", f"service {frame.service!r} also has frame {seen[frame.service]}")
            seen.setdefault(frame.service, i)
            if frame.service not in d.services:
                report.error(f"{floc}.service", f"service {frame.service!r} not listed in dialogue services")
            schema = schemas.get(frame.service)
            if schema is None:
                report.error(f"{floc}.service", f"no schema for service {frame.service!r}")
                continue
            if turn.speaker == USER:
                if frame.state is None:
                    report.error(f"{floc}.state", "user frame without state")
                else:
                    _check_state(report, f"{floc}.state", frame.state, schema)
            elif frame.state is not None:
                report.error(f"{floc}.state", "system frame carries a state")
            for j, act in enumerate(frame.actions):
                _check_act(report, f"{floc}.actions[{j}]", act, turn.speaker, schema, acts)
            for j, span in enumerate(frame.spans):
                sloc = f"{floc}.slots[{j}]"
                if not schema.has_slot(span.slot):
                    report.error(f"{sloc}.slot", f"unknown slot {span.slot!r}")
                if span.copy_from is not None:
                    continue
                n = len(turn.utterance)
                if span.start is None or span.end is None or not (0 <= span.start < span.end <= n):
                    report.error(sloc, f"span [{span.start}, {span.end}) outside utterance of length {n}")
                elif turn.utterance[span.start : span.end] != span.value:
                    report.error(sloc, f"span text {turn.utterance[span.start:span.end]!r} != value {span.value!r}")
    return report


def validate_corpus(
    dialogues: Iterable[Dialogue], schemas: Mapping[str, ServiceSchema], acts: ActVocabulary = DEFAULT_ACTS
) -> dict[str, SchemaValidationReport]:
    """Reports for every dialogue that has at least one error."""
    bad = {}
    for d in dialogues:
        rep = validate_dialogue(d, schemas, acts)
        if not rep.ok:
            bad[d.dialogue_id] = rep
    return bad


def pertinent_frames(d: Dialogue, turn_index: int) -> list[tuple[str, FrameState]]:
    """The (service, state) pairs scored at a user turn.

    Only services annotated on that turn are pertinent; a service whose intent
    has been fulfilled simply has no frame any more.
    """
    turn = d.turns[turn_index]
    if turn.speaker != USER:
        raise ValueError(f"turn {turn_index} of {d.dialogue_id} is a {turn.speaker} turn")
    return [(f.service, f.state if f.state is not None else FrameState()) for f in turn.frames]


def strip_user_annotations(d: Dialogue) -> Dialogue:
    """Tracker input: user frames keep only their service; system frames are untouched."""
    turns = tuple(
        replace(t, frames=tuple(Frame(service=f.service) for f in t.frames)) if t.speaker == USER else t
        for t in d.turns
    )
    return replace(d, turns=turns)


# ----------------------------------------------------------------- files


def read_corpus(path: str | Path, *, strict: bool = True, hypothesis: bool = False) -> list[Dialogue]:
    """Read one dialogue file, or every ``dialogues_*.json`` in a directory (sorted)."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("dialogues_*.json"))
        if not files:
            raise FileNotFoundError(f"no dialogues_*.json files in {path}")
    else:
        files = [path]
    out: list[Dialogue] = []
    for f in files:
        try:
            out.extend(parse_dialogues(f.read_bytes(), strict=strict, hypothesis=hypothesis))
        except CorpusParseError as exc:
            raise CorpusParseError(f"{f}: {exc.msg}", exc.line, exc.column) from None
        except CorpusFormatError as exc:
            raise CorpusFormatError(f"{f}:{exc.path}", exc.msg) from None
    return out


def write_corpus(
    out_dir: str | Path, dialogues: Sequence[Dialogue], shard_size: int = 128, *, single_values: bool = False
) -> list[Path]:
    """Write ``dialogues_001.json``, ``dialogues_002.json``, ...; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(0, max(len(dialogues), 1), shard_size):
        p = out_dir / f"dialogues_{k // shard_size + 1:03d}.json"
        p.write_bytes(serialize_dialogues(dialogues[k : k + shard_size], single_values=single_values))
        paths.append(p)
    return paths
