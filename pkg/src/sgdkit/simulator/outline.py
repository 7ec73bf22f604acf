"""Dialogue outlines from two agents talking over a probabilistic automaton.

Both agents exchange dialogue acts only. At each turn the speaking agent is in
a *phase* determined by the conversation so far (for the user: what the
system just did; for the system: what the user asked for and what the
service reports). The automaton config gives a distribution over acts for each
phase; acts that are not legal in the current situation are dropped and the
rest renormalized. If nothing legal with positive probability is left, the
config is broken for that phase and :class:`AutomatonDeadlock` is raised.

Outline turns carry acts and user states but empty utterances; see
:mod:`sgdkit.simulator.realize` for surface text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..corpus import (
    INTENT_SLOT,
    COUNT_SLOT,
    NONE_INTENT,
    SYSTEM,
    USER,
    Dialogue,
    DialogueAct,
    Frame,
    FrameState,
    Turn,
)
from ..rng import SplitMix64
from ..schema import DONTCARE, IntentDef, ServiceSchema
from ..services import SUCCESS, EntityTable, IntentCall, call, find_rows
from .config import AutomatonConfig
from .scenario import Scenario, _pool_for, validate_scenario


class AutomatonDeadlock(RuntimeError):
    def __init__(self, phase: str, legal: list[str]):
        super().__init__(f"no legal act with positive probability in phase {phase!r} (legal: {legal})")
        self.phase = phase


@dataclass
class _Item:
    service: str
    intent: IntentDef
    goal: dict[str, str]
    done: bool = False


@dataclass
class _ServiceState:
    intent: str = NONE_INTENT
    values: dict[str, str] = field(default_factory=dict)


def apply_user_acts(
    state: _ServiceState, acts: list[DialogueAct], prev_system_acts: list[DialogueAct]
) -> tuple[str, ...]:
    """Update a service state with user acts; returns the requested slots of the turn."""
    requested = []
    for a in acts:
        if a.act in ("INFORM_INTENT", "AFFIRM_INTENT"):
            state.intent = a.values[0]
        elif a.act == "INFORM":
            state.values[a.slot] = a.values[0]
        elif a.act == "REQUEST":
            requested.append(a.slot)
        elif a.act in ("SELECT", "AFFIRM"):
            source = "OFFER" if a.act == "SELECT" else "CONFIRM"
            for p in prev_system_acts:
                if p.act == source:
                    state.values[p.slot] = p.values[0]
    return tuple(requested)


class _Session:
    def __init__(self, scenario, schemas, tables, automaton: AutomatonConfig, rng: SplitMix64, pools):
        self.schemas = schemas
        self.tables = tables
        self.cfg = automaton
        self.params = automaton.params
        self.rng = rng
        self.pools = pools
        self.items = [
            _Item(s, schemas[s].intent(i), dict(goal)) for (s, i), goal in zip(scenario.items, scenario.constraints)
        ]
        self.k = 0
        self.started = False
        self.states: dict[str, _ServiceState] = {}
        self.turns: list[Turn] = []
        self.finished = False
        # user-side counters, reset per item
        self.user_requests = 0
        self.negations = 0
        self.alternatives = 0
        self.thanked = False
        self.closing_req_more = False
        self.forced = False
        # system-side view of the current entity
        self.results: tuple = ()
        self.offer_idx = -1
        self.offered: dict[str, str] = {}
        self.entity: dict[str, str] | None = None
        self.mentioned: set[str] = set()
        self.offered_intent: str | None = None

    # ------------------------------------------------------------ helpers

    @property
    def item(self) -> _Item:
        return self.items[self.k]

    @property
    def service(self) -> str:
        return self.item.service

    @property
    def schema(self) -> ServiceSchema:
        return self.schemas[self.service]

    @property
    def table(self) -> EntityTable:
        return self.tables[self.service]

    def state(self, service: str | None = None) -> _ServiceState:
        return self.states.setdefault(service or self.service, _ServiceState())

    def remaining(self) -> bool:
        """Items after the current one still to be started (or the first, before the start)."""
        return not self.started or self.k + 1 < len(self.items)

    def all_done(self) -> bool:
        return self.started and self.k == len(self.items) - 1 and self.item.done

    def last_acts(self, speaker: str) -> list[DialogueAct]:
        for turn in reversed(self.turns):
            if turn.speaker == speaker:
                return [a for f in turn.frames for a in f.actions]
        return []

    def choose(self, phase: str, legal: dict[str, bool]) -> str:
        dist = self.cfg.phases.get(phase)
        if dist is None:
            raise AutomatonDeadlock(phase, [a for a, ok in legal.items() if ok])
        options = [(act, p) for act, p in dist.items() if p > 0 and legal.get(act, False)]
        if not options:
            raise AutomatonDeadlock(phase, [a for a, ok in legal.items() if ok])
        return self.rng.weighted(options)

    def count(self, name: str) -> int:
        return self.rng.weighted(self.cfg.distribution(name))

    def reset_entity(self) -> None:
        self.results = ()
        self.offer_idx = -1
        self.offered = {}
        self.entity = None
        self.mentioned = set()

    def start_next_item(self) -> None:
        if self.started:
            self.k += 1
        self.started = True
        self.user_requests = self.negations = self.alternatives = 0
        self.reset_entity()
        self.offered_intent = None

    def emit(self, speaker: str, service: str, acts: list[DialogueAct], **frame_extra) -> None:
        self.turns.append(Turn(speaker, "", (Frame(service=service, actions=tuple(acts), **frame_extra),)))

    # --------------------------------------------------------------- user

    def requestable(self) -> list[str]:
        if self.entity is None:
            return []
        state = self.state()
        return [
            s
            for s in self.item.intent.result_slots
            if s in self.table.columns and s not in state.values and s not in self.mentioned
        ]

    def changeable(self) -> list[str]:
        """Confirmed slots the user may change without invalidating the chosen entity."""
        out = []
        for act in self.last_acts(SYSTEM):
            if act.act != "CONFIRM" or act.slot in self.table.columns:
                continue
            sdef = self.schema.slot(act.slot)
            pool = sdef.possible_values if sdef.is_categorical else _pool_for(self.pools, self.service, act.slot)
            if any(v != act.values[0] for v in pool):
                out.append(act.slot)
        return out

    def user_phase(self) -> str:
        if not self.turns:
            return "user.start"
        prev = {a.act for a in self.last_acts(SYSTEM)}
        if "REQUEST" in prev:
            return "user.answer"
        if "OFFER_INTENT" in prev:
            return "user.offered_intent"
        if "CONFIRM" in prev:
            return "user.confirm"
        if "OFFER" in prev:
            return "user.offer"
        if "NOTIFY_SUCCESS" in prev:
            return "user.success"
        if "NOTIFY_FAILURE" in prev:
            return "user.failure"
        if "INFORM" in prev:
            return "user.success" if self.item.done else "user.informed"
        return "user.req_more"

    def user_turn(self) -> None:
        if len(self.turns) >= self.cfg.max_turns - 2:
            # out of budget: close with the system's GOODBYE as the last turn
            self.forced = True
            self.emit(USER, self.service, [DialogueAct("GOODBYE")], state=self.snapshot(()))
            return
        phase = self.user_phase()
        prev_sys = self.last_acts(SYSTEM)
        done = self.all_done()
        next_item = self.items[self.k + 1] if self.started and self.k + 1 < len(self.items) else None
        legal = {
            "INFORM_INTENT": self.remaining() and (self.item.done or not self.started) and phase != "user.offered_intent",
            "AFFIRM_INTENT": next_item is not None
            and self.offered_intent is not None
            and (next_item.service, next_item.intent.name) == (self.service, self.offered_intent),
            "NEGATE_INTENT": self.offered_intent is not None
            and (next_item is None or (next_item.service, next_item.intent.name) != (self.service, self.offered_intent)),
            "INFORM": phase == "user.answer",
            "SELECT": bool(self.offered) and not self.item.done,
            "REQUEST_ALTS": bool(self.offered)
            and not self.item.done
            and self.offer_idx + 1 < len(self.results)
            and self.alternatives < self.params["max_alternatives"],
            "REQUEST": bool(self.requestable()) and self.user_requests < self.params["max_user_requests"],
            "AFFIRM": phase == "user.confirm",
            "NEGATE": phase == "user.confirm"
            and self.negations < self.params["max_negations"]
            and bool(self.changeable()),
            "THANK_YOU": done and not self.thanked and not self.closing_req_more,
            "GOODBYE": done,
        }
        act = self.choose(phase, legal)

        acts: list[DialogueAct] = []
        if act in ("INFORM_INTENT", "AFFIRM_INTENT"):
            self.start_next_item()
            acts.append(DialogueAct(act, INTENT_SLOT, (self.item.intent.name,)))
            if act == "INFORM_INTENT":
                acts += self.goal_informs(self.count("slots_with_intent"), exclude=())
        elif act == "NEGATE_INTENT":
            acts.append(DialogueAct(act, INTENT_SLOT, (self.offered_intent,)))
            self.offered_intent = None
        elif act == "INFORM":
            asked = [a.slot for a in prev_sys if a.act == "REQUEST"]
            acts += [DialogueAct("INFORM", s, (self.item.goal[s],)) for s in asked]
            acts += self.goal_informs(self.count("extra_slots_with_answer"), exclude=asked)
        elif act == "REQUEST":
            slot = self.rng.choice(self.requestable())
            self.user_requests += 1
            acts.append(DialogueAct("REQUEST", slot))
        elif act == "REQUEST_ALTS":
            self.alternatives += 1
            acts.append(DialogueAct(act))
        elif act == "NEGATE":
            self.negations += 1
            slot = self.rng.choice(self.changeable())
            current = next(a.values[0] for a in prev_sys if a.act == "CONFIRM" and a.slot == slot)
            sdef = self.schema.slot(slot)
            pool = sdef.possible_values if sdef.is_categorical else _pool_for(self.pools, self.service, slot)
            value = self.rng.choice([v for v in pool if v != current])
            self.item.goal[slot] = value
            acts += [DialogueAct("NEGATE"), DialogueAct("INFORM", slot, (value,))]
        else:
            if act == "THANK_YOU":
                self.thanked = True
            acts.append(DialogueAct(act))
            if act == "SELECT" and not self.item.intent.is_transactional:
                self.item.done = True
        if act == "SELECT":
            self.mentioned |= set(self.offered)

        state = self.state()
        requested = apply_user_acts(state, acts, prev_sys)
        self.emit(USER, self.service, acts, state=self.snapshot(requested))

    def goal_informs(self, n: int, exclude) -> list[DialogueAct]:
        state = self.state()
        pending = [s for s in self.item.goal if s not in state.values and s not in exclude]
        picked = self.rng.sample(pending, min(n, len(pending)))
        picked.sort(key=pending.index)
        return [DialogueAct("INFORM", s, (self.item.goal[s],)) for s in picked]

    def snapshot(self, requested: tuple[str, ...]) -> FrameState:
        state = self.state()
        return FrameState(state.intent, requested, {k: (v,) for k, v in state.values.items()})

    # ------------------------------------------------------------- system

    def arguments(self) -> dict[str, str]:
        state = self.state()
        return {s: state.values[s] for s in self.item.intent.argument_slots if s in state.values}

    def offerable(self) -> list[str]:
        intent, state = self.item.intent, self.state()
        if intent.is_transactional:
            return [
                s
                for s in intent.result_slots
                if s in intent.argument_slots and s in self.table.columns and s not in state.values
            ]
        return [s for s in intent.result_slots if s in self.table.columns and s not in state.values]

    def system_turn(self) -> None:
        user_acts = self.last_acts(USER)
        tags = {a.act for a in user_acts}
        service = self.service
        legal_all = {a: True for a in ("REQUEST", "OFFER", "INFORM", "CONFIRM", "GOODBYE")}

        if "GOODBYE" in tags:
            self.choose("system.goodbye", {"GOODBYE": True})
            self.emit(SYSTEM, service, [DialogueAct("GOODBYE")])
            self.finished = True
            return
        if "THANK_YOU" in tags:
            act = self.choose("system.closing", {"GOODBYE": True, "REQ_MORE": not self.closing_req_more})
            if act == "REQ_MORE":
                self.closing_req_more = True
            self.emit(SYSTEM, service, [DialogueAct(act)])
            self.finished = act == "GOODBYE"
            return
        if "REQUEST" in tags:
            self.choose("system.info", legal_all)
            acts = []
            for a in user_acts:
                if a.act == "REQUEST":
                    self.mentioned.add(a.slot)
                    acts.append(DialogueAct("INFORM", a.slot, (self.entity[a.slot],)))
            self.emit(SYSTEM, service, acts)
            return
        if "NEGATE_INTENT" in tags:
            self.choose("system.negated_intent", {"REQ_MORE": True})
            self.emit(SYSTEM, service, [DialogueAct("REQ_MORE")])
            return

        item, state = self.item, self.state()
        intent = item.intent
        missing = [s for s in intent.required_slots if s not in state.values]
        if missing:
            self.choose("system.request", legal_all)
            n = max(1, self.count("slots_per_request"))
            self.emit(SYSTEM, service, [DialogueAct("REQUEST", s) for s in missing[:n]])
            return

        if not intent.is_transactional and "SELECT" in tags:
            next_item = self.items[self.k + 1] if self.k + 1 < len(self.items) else None
            candidates = [
                i.name for i in self.schema.intents if i.is_transactional and i.name != intent.name
            ]
            act = self.choose("system.search_done", {"REQ_MORE": True, "OFFER_INTENT": bool(candidates)})
            if act == "OFFER_INTENT":
                if next_item is not None and next_item.service == service and next_item.intent.name in candidates:
                    offered = next_item.intent.name
                else:
                    offered = self.rng.choice(candidates)
                self.offered_intent = offered
                self.emit(SYSTEM, service, [DialogueAct("OFFER_INTENT", INTENT_SLOT, (offered,))])
            else:
                self.emit(SYSTEM, service, [DialogueAct("REQ_MORE")])
            return

        if intent.is_transactional and "AFFIRM" in tags:
            args = self.arguments()
            result = call(self.table, self.schema, IntentCall(intent.name, args))
            act = "NOTIFY_SUCCESS" if result.status == SUCCESS else "NOTIFY_FAILURE"
            self.choose("system.execute", {act: True})
            item.done = True
            if result.matches:
                self.entity = self.table.row_dict(result.matches[0])
            self.emit(
                SYSTEM,
                service,
                [DialogueAct(act)],
                service_call={"method": intent.name, "parameters": args},
                service_results=[self.table.row_dict(r) for r in result.matches],
            )
            return

        if self.offerable() and "SELECT" not in tags:
            if "REQUEST_ALTS" in tags and self.offer_idx + 1 < len(self.results):
                self.offer_idx += 1
                fresh = False
            else:
                args = self.arguments()
                if intent.is_transactional:
                    full = {**intent.optional_slots, **args}
                    self.results = find_rows(self.table, full)
                else:
                    self.results = call(self.table, self.schema, IntentCall(intent.name, args)).matches
                self.offer_idx = 0
                fresh = True
            call_extra = {}
            if fresh:
                call_extra = {
                    "service_call": {"method": intent.name, "parameters": self.arguments()},
                    "service_results": [self.table.row_dict(r) for r in self.results],
                }
            if not self.results:
                self.choose("system.no_results", {"NOTIFY_FAILURE": True})
                item.done = True
                self.emit(SYSTEM, service, [DialogueAct("NOTIFY_FAILURE")], **call_extra)
                return
            self.choose("system.offer", legal_all)
            row = self.table.row_dict(self.results[self.offer_idx])
            self.entity = row
            slots = self.offerable()
            if not intent.is_transactional:
                key, rest = slots[0], slots[1:]
                extra = self.rng.sample(rest, min(self.count("offer_extra_slots"), len(rest)))
                slots = [key] + sorted(extra, key=rest.index)
            self.offered = {s: row[s] for s in slots}
            self.mentioned = set(slots)
            acts = [DialogueAct("OFFER", s, (row[s],)) for s in slots]
            if fresh and self.rng.chance(self.params["inform_count_prob"]):
                acts.append(DialogueAct("INFORM_COUNT", COUNT_SLOT, (str(len(self.results)),)))
            self.emit(SYSTEM, service, acts, **call_extra)
            return

        if intent.is_transactional:
            self.choose("system.confirm", legal_all)
            acts = []
            for s in intent.argument_slots:
                value = state.values.get(s, intent.optional_slots.get(s))
                if value is not None and value != DONTCARE:
                    acts.append(DialogueAct("CONFIRM", s, (value,)))
            self.emit(SYSTEM, service, acts)
            return

        # search intent whose result slots are all already known: nothing left to offer
        self.choose("system.search_done", {"REQ_MORE": True, "OFFER_INTENT": False})
        item.done = True
        self.emit(SYSTEM, service, [DialogueAct("REQ_MORE")])

    # ---------------------------------------------------------------- run

    def run(self) -> list[Turn]:
        while not self.finished:
            self.user_turn()
            self.system_turn()
        return self.turns


def generate_outline(
    scenario: Scenario,
    schemas: Mapping[str, ServiceSchema],
    tables: Mapping[str, EntityTable],
    automaton: AutomatonConfig,
    rng_seed: int,
    pools: Mapping[str, tuple[str, ...]] | None = None,
    dialogue_id: str = "outline",
) -> Dialogue:
    """Simulate one dialogue for ``scenario``; utterances are left empty."""
    validate_scenario(scenario, schemas, automaton.max_intents)
    session = _Session(scenario, schemas, tables, automaton, SplitMix64(rng_seed), pools or {})
    turns = session.run()
    services = tuple(dict.fromkeys(f.service for t in turns for f in t.frames))
    return Dialogue(dialogue_id, services, tuple(turns))
