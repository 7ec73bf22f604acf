"""Template realization: turn act outlines into utterances with slot spans."""

from __future__ import annotations

import re
import string
from dataclasses import replace
from typing import Mapping

from ..corpus import COUNT_SLOT, INTENT_ACTS, Dialogue, DialogueAct, SlotSpan, Turn
from ..rng import SplitMix64
from ..schema import DONTCARE, ServiceSchema
from .config import TemplateSet

_FORMATTER = string.Formatter()


def humanize_slot(slot: str) -> str:
    return slot.replace("_", " ")


def humanize_intent(intent: str) -> str:
    return " ".join(w.lower() for w in re.findall(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+", intent)) or intent


def fill(template: str, slot: str | None, value: str | None, intent: str | None) -> tuple[str, int | None]:
    """Substitute placeholders; returns the text and the offset of ``{value}`` (or None)."""
    parts = []
    offset = None
    pos = 0
    for literal, name, _, _ in _FORMATTER.parse(template):
        parts.append(literal)
        pos += len(literal)
        if name is None:
            continue
        if name == "value":
            offset = pos
            text = value or ""
        elif name == "slot":
            text = humanize_slot(slot or "")
        else:
            text = humanize_intent(intent or "")
        parts.append(text)
        pos += len(text)
    return "".join(parts), offset


def realize_turn(
    turn: Turn, templates: TemplateSet, schemas: Mapping[str, ServiceSchema], rng: SplitMix64
) -> Turn:
    pieces: list[str] = []
    pos = 0
    spans_by_frame = []
    for frame in turn.frames:
        schema = schemas[frame.service]
        spans = []
        for act in frame.actions:
            phrase, offset = _phrase(turn.speaker, act, templates, rng)
            if pieces:
                pos += 1  # joining space
            value = act.values[0] if act.values else None
            if (
                offset is not None
                and value
                and value != DONTCARE
                and act.act not in INTENT_ACTS
                and act.slot != COUNT_SLOT
                and schema.has_slot(act.slot)
                and not schema.slot(act.slot).is_categorical
            ):
                spans.append(SlotSpan(act.slot, pos + offset, pos + offset + len(value), value))
            pieces.append(phrase)
            pos += len(phrase)
        spans_by_frame.append(tuple(spans))
    frames = tuple(replace(f, spans=s) for f, s in zip(turn.frames, spans_by_frame))
    return Turn(turn.speaker, " ".join(pieces), frames)


def _phrase(speaker: str, act: DialogueAct, templates: TemplateSet, rng: SplitMix64) -> tuple[str, int | None]:
    template = rng.choice(templates.lookup(speaker, act.act, act.slot))
    if act.act in INTENT_ACTS:
        return fill(template, None, None, act.values[0] if act.values else "")
    return fill(template, act.slot, act.values[0] if act.values else None, None)


def realize(
    outline: Dialogue, templates: TemplateSet, schemas: Mapping[str, ServiceSchema], rng_seed: int
) -> Dialogue:
    """Give every turn of an outline an utterance; spans mark non-categorical values."""
    rng = SplitMix64(rng_seed)
    return replace(outline, turns=tuple(realize_turn(t, templates, schemas, rng) for t in outline.turns))
