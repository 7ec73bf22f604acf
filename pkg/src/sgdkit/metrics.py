"""Dialogue state tracking metrics with all/seen/unseen bucketing.

Hypothesis frames are aligned to reference user frames by
``(dialogue_id, turn_index, service)``. Only reference frames are scored, so a
service is pertinent exactly when the reference annotates it on that turn.

All accumulation is done with :class:`fractions.Fraction`: the fuzzy score is
rational (``1 - distance/length``), so every metric is an exact ratio and the
result does not depend on summation order or on how work is split.

Two choices are not pinned down by the task definition and are isolated here:

* the fuzzy score is normalized Levenshtein similarity on lowercased,
  whitespace-collapsed strings (:func:`fuzzy_score`);
* a frame's joint score is the product of its per-slot scores
  (:func:`frame_joint_score`). With exact-match scores only, this is the usual
  all-slots-correct indicator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .corpus import NONE_INTENT, USER, Dialogue, FrameState
from .schema import ServiceSchema

ALL, SEEN, UNSEEN = "ALL", "SEEN", "UNSEEN"
METRICS = ("active_intent_accuracy", "requested_slot_f1", "average_goal_accuracy", "joint_goal_accuracy")


class AlignmentError(ValueError):
    pass


def normalize_value(s: str) -> str:
    return " ".join(s.lower().split())


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def fuzzy_fraction(hyp: str, ref: str) -> Fraction:
    a, b = normalize_value(hyp), normalize_value(ref)
    if a == b:
        return Fraction(1)
    longest = max(len(a), len(b))
    if longest == 0:
        return Fraction(1)
    if not a or not b:
        return Fraction(0)
    return 1 - Fraction(levenshtein(a, b), longest)


def fuzzy_score(hyp: str, ref: str) -> float:
    """Similarity in [0, 1]: ``1 - lev(a, b) / max(|a|, |b|)`` after normalization."""
    return float(fuzzy_fraction(hyp, ref))


@dataclass(frozen=True)
class HypothesisFrame:
    service: str
    active_intent: str = NONE_INTENT
    requested_slots: frozenset[str] = frozenset()
    slot_values: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_state(cls, service: str, state: FrameState | None) -> "HypothesisFrame":
        if state is None:
            return cls(service)
        values = {k: v[0] for k, v in state.slot_values.items() if v and v[0] != ""}
        return cls(service, state.active_intent, frozenset(state.requested_slots), values)


Key = tuple[str, int, str]


def index_hypotheses(hyps: Iterable[Dialogue]) -> dict[Key, HypothesisFrame]:
    """Map ``(dialogue_id, turn_index, service)`` to the hypothesis for that user frame."""
    index: dict[Key, HypothesisFrame] = {}
    for d in hyps:
        for t, turn in enumerate(d.turns):
            if turn.speaker != USER:
                continue
            for f in turn.frames:
                key = (d.dialogue_id, t, f.service)
                if key in index:
                    raise AlignmentError(f"duplicate hypothesis frame for {key}")
                index[key] = HypothesisFrame.from_state(f.service, f.state)
    return index


def per_slot_scores(
    ref_state: FrameState, hyp: HypothesisFrame, schema: ServiceSchema | None
) -> dict[str, Fraction]:
    """Score every slot present in the reference or the hypothesis.

    Categorical slots need an exact match with one reference variant; the rest
    take the best fuzzy score over the variants. A slot present on one side
    only scores 0.
    """
    scores: dict[str, Fraction] = {}
    ref_values = {k: v for k, v in ref_state.slot_values.items() if v}
    for slot in list(ref_values) + [s for s in hyp.slot_values if s not in ref_values]:
        variants = ref_values.get(slot)
        predicted = hyp.slot_values.get(slot)
        if not variants or predicted is None:
            scores[slot] = Fraction(0)
            continue
        categorical = schema is not None and schema.has_slot(slot) and schema.slot(slot).is_categorical
        if categorical:
            scores[slot] = Fraction(int(predicted in variants))
        else:
            scores[slot] = max(fuzzy_fraction(predicted, v) for v in variants)
    return scores


def frame_joint_score(slot_scores: Mapping[str, Fraction]) -> Fraction:
    return math.prod(slot_scores.values(), start=Fraction(1))


def requested_f1(ref: Iterable[str], hyp: Iterable[str]) -> Fraction | None:
    """Set F1, or None when both sets are empty (the frame is skipped)."""
    r, h = set(ref), set(hyp)
    if not r and not h:
        return None
    if not r or not h:
        return Fraction(0)
    return Fraction(2 * len(r & h), len(r) + len(h))


@dataclass(frozen=True)
class FrameScore:
    dialogue_id: str
    turn_index: int
    service: str
    intent: Fraction
    requested: Fraction | None
    slots: tuple[Fraction, ...]  # reference slots only: the average-GA pool
    joint: Fraction


def score_frames(
    refs: Iterable[Dialogue],
    hyps: Mapping[Key, HypothesisFrame],
    schemas: Mapping[str, ServiceSchema],
) -> list[FrameScore]:
    """Per-frame scores for every reference user frame, in corpus order."""
    out = []
    for d in refs:
        for t, turn in enumerate(d.turns):
            if turn.speaker != USER:
                continue
            for f in turn.frames:
                ref_state = f.state if f.state is not None else FrameState()
                hyp = hyps.get((d.dialogue_id, t, f.service))
                n_ref = sum(1 for v in ref_state.slot_values.values() if v)
                if hyp is None:
                    req = None if not ref_state.requested_slots else Fraction(0)
                    out.append(
                        FrameScore(d.dialogue_id, t, f.service, Fraction(0), req, (Fraction(0),) * n_ref, Fraction(0))
                    )
                    continue
                slot_scores = per_slot_scores(ref_state, hyp, schemas.get(f.service))
                ref_slots = tuple(slot_scores[s] for s, v in ref_state.slot_values.items() if v)
                out.append(
                    FrameScore(
                        d.dialogue_id,
                        t,
                        f.service,
                        Fraction(int(hyp.active_intent == ref_state.active_intent)),
                        requested_f1(ref_state.requested_slots, hyp.requested_slots),
                        ref_slots,
                        frame_joint_score(slot_scores),
                    )
                )
    return out


@dataclass
class Tally:
    numerator: Fraction = Fraction(0)
    denominator: int = 0

    def add(self, value: Fraction) -> None:
        self.numerator += value
        self.denominator += 1

    @property
    def value(self) -> float | None:
        return None if self.denominator == 0 else float(self.numerator / self.denominator)


@dataclass
class EvalBucket:
    label: str
    tallies: dict[str, Tally] = field(default_factory=lambda: {m: Tally() for m in METRICS})

    def add(self, s: FrameScore) -> None:
        self.tallies["active_intent_accuracy"].add(s.intent)
        if s.requested is not None:
            self.tallies["requested_slot_f1"].add(s.requested)
        for v in s.slots:
            self.tallies["average_goal_accuracy"].add(v)
        self.tallies["joint_goal_accuracy"].add(s.joint)

    def __getattr__(self, name):
        if name in METRICS:
            return self.tallies[name].value
        raise AttributeError(name)

    def denominators(self) -> dict[str, int]:
        return {m: t.denominator for m, t in self.tallies.items()}

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "metrics": {m: t.value for m, t in self.tallies.items()},
            "numerators": {m: float(t.numerator) for m, t in self.tallies.items()},
            "denominators": self.denominators(),
        }


@dataclass
class EvalReport:
    buckets: dict[str, EvalBucket]
    per_service: dict[str, EvalBucket]
    seen_services: tuple[str, ...]
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "buckets": {k: b.to_json() for k, b in self.buckets.items()},
            "per_service": {k: b.to_json() for k, b in sorted(self.per_service.items())},
            "seen_services": list(self.seen_services),
            "warnings": list(self.warnings),
        }


def _aggregate(scores: Iterable[FrameScore], label: str = ALL) -> EvalBucket:
    bucket = EvalBucket(label)
    for s in scores:
        bucket.add(s)
    return bucket


def _prepare(refs, hyps) -> Mapping[Key, HypothesisFrame]:
    return hyps if isinstance(hyps, Mapping) else index_hypotheses(hyps)


def active_intent_accuracy(refs: Sequence[Dialogue], hyps, schemas=None) -> float | None:
    return _aggregate(score_frames(refs, _prepare(refs, hyps), schemas or {})).active_intent_accuracy


def requested_slot_f1(refs: Sequence[Dialogue], hyps, schemas=None) -> float | None:
    return _aggregate(score_frames(refs, _prepare(refs, hyps), schemas or {})).requested_slot_f1


def average_goal_accuracy(refs: Sequence[Dialogue], hyps, schemas=None) -> float | None:
    return _aggregate(score_frames(refs, _prepare(refs, hyps), schemas or {})).average_goal_accuracy


def joint_goal_accuracy(refs: Sequence[Dialogue], hyps, schemas=None) -> float | None:
    return _aggregate(score_frames(refs, _prepare(refs, hyps), schemas or {})).joint_goal_accuracy


def evaluate(
    refs: Sequence[Dialogue],
    hyps: Sequence[Dialogue],
    schemas: Mapping[str, ServiceSchema],
    seen_services: Iterable[str] | None = None,
) -> EvalReport:
    """Score a hypothesis corpus against references.

    Frames of services in ``seen_services`` go to the SEEN bucket, all others
    to UNSEEN. A metric with an empty denominator reports ``None``.
    """
    ref_ids = {d.dialogue_id for d in refs}
    hyp_ids = set()
    for d in hyps:
        if d.dialogue_id not in ref_ids:
            raise AlignmentError(f"hypothesis dialogue {d.dialogue_id!r} has no reference")
        if d.dialogue_id in hyp_ids:
            raise AlignmentError(f"duplicate hypothesis dialogue {d.dialogue_id!r}")
        hyp_ids.add(d.dialogue_id)
    warnings = [f"no hypothesis for dialogue {d.dialogue_id!r}; its frames score 0" for d in refs if d.dialogue_id not in hyp_ids]

    seen = frozenset(seen_services or ())
    buckets = {label: EvalBucket(label) for label in (ALL, SEEN, UNSEEN)}
    per_service: dict[str, EvalBucket] = {}
    for s in score_frames(refs, index_hypotheses(hyps), schemas):
        buckets[ALL].add(s)
        buckets[SEEN if s.service in seen else UNSEEN].add(s)
        per_service.setdefault(s.service, EvalBucket(s.service)).add(s)
    return EvalReport(buckets, per_service, tuple(sorted(seen)), warnings)
