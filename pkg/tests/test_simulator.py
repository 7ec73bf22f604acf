import copy
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdkit.corpus import SYSTEM, USER, validate_corpus, validate_dialogue
from sgdkit.schema import IntentDef, ServiceSchema, SlotDef
from sgdkit.services import parse_entity_table
from sgdkit.simulator import (
    AutomatonConfig,
    AutomatonDeadlock,
    ConfigError,
    FlowSignature,
    Scenario,
    TemplateSet,
    generate_corpus,
    generate_outline,
    load_automaton,
    load_templates,
    realize,
    sample_scenario,
    simulate_one,
)
from sgdkit.simulator.generate import corpus_digest

SALON = ServiceSchema(
    "Salons_1",
    "Hair stylists",
    (SlotDef("city", "City"), SlotDef("stylist_name", "Stylist")),
    (IntentDef("BookStylist", "Book a stylist", True, ("city",), {"stylist_name": "dontcare"}, ("stylist_name",)),),
)
SALON_TABLE = parse_entity_table("city,stylist_name\nOakland,Ana Cuts\nBerkeley,Top Hair\n", SALON)


def trace_automaton() -> AutomatonConfig:
    raw = load_automaton().to_json()
    raw = copy.deepcopy(raw)
    raw["phases"].update(
        {
            "user.offer": {"SELECT": 1.0},
            "user.confirm": {"AFFIRM": 1.0},
            "user.success": {"THANK_YOU": 1.0},
            "system.closing": {"GOODBYE": 1.0},
        }
    )
    raw["params"].update(
        {
            "num_services": {"1": 1.0},
            "intents_per_service": {"1": 1.0},
            "slots_with_intent": {"0": 1.0},
            "extra_slots_with_answer": {"0": 1.0},
            "slots_per_request": {"1": 1.0},
            "offer_extra_slots": {"0": 1.0},
            "optional_goal_prob": 0.0,
            "inform_count_prob": 0.0,
        }
    )
    return AutomatonConfig.from_json(raw)


def user_acts(turn):
    return [a for f in turn.frames for a in f.actions]


def test_deterministic_trace():
    schemas, tables = {"Salons_1": SALON}, {"Salons_1": SALON_TABLE}
    cfg = trace_automaton()
    for seed in range(5):
        scenario = sample_scenario(seed, schemas, tables, cfg)
        outline = generate_outline(scenario, schemas, tables, cfg, seed)
        acts = [[a.act for a in user_acts(t)] for t in outline.turns]
        assert acts == [
            ["INFORM_INTENT"],
            ["REQUEST"],
            ["INFORM"],
            ["OFFER"],
            ["SELECT"],
            ["CONFIRM", "CONFIRM"],
            ["AFFIRM"],
            ["NOTIFY_SUCCESS"],
            ["THANK_YOU"],
            ["GOODBYE"],
        ]
        assert user_acts(outline.turns[1])[0].slot == "city"
        final = outline.turns[6].frames[0].state
        city = scenario.constraints[0]["city"]
        offered = user_acts(outline.turns[3])[0].values[0]
        assert final.slot_values == {"city": (city,), "stylist_name": (offered,)}
        call = outline.turns[7].frames[0].service_call
        assert call == {"method": "BookStylist", "parameters": {"city": city, "stylist_name": offered}}


def test_deadlock_names_phase():
    raw = copy.deepcopy(trace_automaton().to_json())
    raw["phases"]["user.start"] = {"GOODBYE": 1.0}
    cfg = AutomatonConfig.from_json(raw)
    schemas, tables = {"Salons_1": SALON}, {"Salons_1": SALON_TABLE}
    scenario = sample_scenario(0, schemas, tables, cfg)
    with pytest.raises(AutomatonDeadlock) as exc:
        generate_outline(scenario, schemas, tables, cfg, 0)
    assert exc.value.phase == "user.start"


def test_bad_distribution_rejected():
    raw = copy.deepcopy(load_automaton().to_json())
    raw["phases"]["user.start"] = {"INFORM_INTENT": 0.5}
    with pytest.raises(ConfigError):
        AutomatonConfig.from_json(raw)
    raw = copy.deepcopy(load_automaton().to_json())
    raw["config_version"] = 99
    with pytest.raises(ConfigError):
        AutomatonConfig.from_json(raw)


def test_missing_template_is_config_error():
    raw = {"config_version": 1, "templates": {"USER": {"INFORM": ["{value}"]}, "SYSTEM": {}}}
    with pytest.raises(ConfigError):
        TemplateSet.from_json(raw)
    ts = load_templates()
    with pytest.raises(ConfigError):
        ts.lookup(USER, "SING", None)


def test_template_needs_value_placeholder():
    raw = copy.deepcopy({"config_version": 1, "templates": {}})
    base = load_templates()
    for (speaker, act, slot), temps in base.templates.items():
        key = act + (":" + slot if slot else "")
        raw["templates"].setdefault(speaker, {})[key] = list(temps)
    raw["templates"][USER]["INFORM"] = ["I like it."]
    with pytest.raises(ConfigError):
        TemplateSet.from_json(raw)


def replay_states(d):
    """Independent act-replay: rebuild every user state from acts alone."""
    states = {}
    out = []
    prev_sys = {}
    for turn in d.turns:
        if turn.speaker == SYSTEM:
            prev_sys = {f.service: list(f.actions) for f in turn.frames}
            continue
        for f in turn.frames:
            intent, values = states.get(f.service, ("NONE", {}))
            values = dict(values)
            requested = []
            for a in f.actions:
                if a.act in ("INFORM_INTENT", "AFFIRM_INTENT"):
                    intent = a.values[0]
                elif a.act == "INFORM":
                    values[a.slot] = a.values[0]
                elif a.act == "REQUEST":
                    requested.append(a.slot)
                elif a.act == "SELECT":
                    values.update({p.slot: p.values[0] for p in prev_sys.get(f.service, []) if p.act == "OFFER"})
                elif a.act == "AFFIRM":
                    values.update({p.slot: p.values[0] for p in prev_sys.get(f.service, []) if p.act == "CONFIRM"})
            states[f.service] = (intent, values)
            out.append((intent, tuple(requested), {k: (v,) for k, v in values.items()}, f.state))
    return out


def required_slot_violations(d, schemas):
    """System OFFER / NOTIFY_SUCCESS before the active intent's required slots are in the state."""
    bad = []
    last_state = {}
    for t, turn in enumerate(d.turns):
        for f in turn.frames:
            if turn.speaker == USER:
                last_state[f.service] = f.state
                continue
            acts = {a.act for a in f.actions}
            if not acts & {"OFFER", "NOTIFY_SUCCESS"}:
                continue
            state = last_state.get(f.service)
            intent = schemas[f.service].intent(state.active_intent)
            if any(s not in state.slot_values for s in intent.required_slots):
                bad.append((d.dialogue_id, t))
    return bad


def check_dialogue(d, schemas):
    assert validate_dialogue(d, schemas).ok, validate_dialogue(d, schemas).errors
    for intent, requested, values, state in replay_states(d):
        assert state.active_intent == intent
        assert state.requested_slots == requested
        assert state.slot_values == values
    assert required_slot_violations(d, schemas) == []


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**63 - 1), st.integers(min_value=0, max_value=10_000))
def test_fuzz_bundled_config(bundled, seed, index):
    b = bundled
    d = simulate_one(index, seed, b["schemas"], b["tables"], b["automaton"], b["templates"], b["pools"], "fz")
    check_dialogue(d, b["schemas"])
    assert len(d.turns) <= b["automaton"].max_turns


def test_corpus_valid_and_unique(bundled, sim_corpus):
    assert len(sim_corpus) == 100
    assert validate_corpus(sim_corpus, bundled["schemas"]) == {}
    for d in sim_corpus:
        check_dialogue(d, bundled["schemas"])
    sigs = [FlowSignature.of(d) for d in sim_corpus]
    assert len(set(sigs)) == len(sigs)
    assert len({s for d in sim_corpus for s in d.services}) >= 2


def test_second_service_after_first(sim_corpus):
    multi = [d for d in sim_corpus if len(d.services) >= 2]
    assert multi
    for d in multi:
        first_turn = {}
        for t, turn in enumerate(d.turns):
            for f in turn.frames:
                first_turn.setdefault(f.service, t)
        order = sorted(first_turn, key=first_turn.get)
        assert first_turn[order[1]] > 0


def test_multi_domain_dialogues_are_longer(sim_corpus):
    single = [len(d.turns) for d in sim_corpus if len(d.services) == 1]
    multi = [len(d.turns) for d in sim_corpus if len(d.services) > 1]
    assert sum(multi) / len(multi) > sum(single) / len(single)


def test_max_intents_one(bundled):
    b = bundled
    raw = copy.deepcopy(b["automaton"].to_json())
    raw["max_intents"] = 1
    cfg = AutomatonConfig.from_json(raw)
    res = generate_corpus(b["schemas"], b["tables"], cfg, b["templates"], 20, 9, pools=b["pools"])
    for d in res.dialogues:
        intents = [a for t in d.turns for a in user_acts(t) if a.act in ("INFORM_INTENT", "AFFIRM_INTENT")]
        assert len(intents) == 1
        assert len(d.services) == 1


def test_realized_spans_and_text(sim_corpus):
    for d in sim_corpus[:20]:
        for t in d.turns:
            assert t.utterance
            for f in t.frames:
                for s in f.spans:
                    assert t.utterance[s.start : s.end] == s.value


def test_outline_utterances_empty_then_realized(bundled):
    b = bundled
    scenario = sample_scenario(1, b["schemas"], b["tables"], b["automaton"], b["pools"])
    outline = generate_outline(scenario, b["schemas"], b["tables"], b["automaton"], 1, b["pools"])
    assert all(t.utterance == "" for t in outline.turns)
    d = realize(outline, b["templates"], b["schemas"], 1)
    assert all(t.utterance for t in d.turns)
    assert [t.frames[0].actions for t in d.turns] == [t.frames[0].actions for t in outline.turns]


def test_scenario_fixed_intents_roundtrip(bundled):
    b = bundled
    scenario = Scenario(
        (("Restaurants_1", "FindRestaurants"), ("Restaurants_1", "ReserveRestaurant")),
        ({"city": "Oakland", "cuisine": "Italian"}, {"restaurant_name": "x", "city": "Oakland", "date": "today", "time": "6 pm"}),
        {"Restaurants_1": {}},
    )
    d = generate_outline(scenario, b["schemas"], b["tables"], b["automaton"], 3, b["pools"])
    assert validate_dialogue(d, b["schemas"]).ok


def test_determinism_and_jobs(bundled):
    b = bundled
    args = (b["schemas"], b["tables"], b["automaton"], b["templates"], 40, 77)
    one = generate_corpus(*args, pools=b["pools"])
    again = generate_corpus(*args, pools=b["pools"])
    par = generate_corpus(*args, pools=b["pools"], jobs=3)
    assert corpus_digest(one.dialogues) == corpus_digest(again.dialogues) == corpus_digest(par.dialogues)
    assert (one.attempts, one.rejected_duplicates) == (par.attempts, par.rejected_duplicates)
    other = generate_corpus(*args[:-1], 78, pools=b["pools"])
    assert corpus_digest(other.dialogues) != corpus_digest(one.dialogues)


def test_shortfall_reported(bundled):
    schemas, tables = {"Salons_1": SALON}, {"Salons_1": SALON_TABLE}
    res = generate_corpus(schemas, tables, trace_automaton(), bundled["templates"], 5, 1, retry_budget=20)
    # every dialogue has the same flow, so only one survives at quota 1
    assert len(res.dialogues) == 1
    assert res.shortfall == 4 and res.rejected_duplicates == 19
    assert res.warnings
    res3 = generate_corpus(schemas, tables, trace_automaton(), bundled["templates"], 3, 1, duplicate_quota=3)
    assert len(res3.dialogues) == 3 and res3.shortfall == 0


def test_thousand_dialogues_fast(bundled):
    b = bundled
    t0 = time.perf_counter()
    res = generate_corpus(b["schemas"], b["tables"], b["automaton"], b["templates"], 1000, 5, pools=b["pools"])
    assert time.perf_counter() - t0 < 60
    assert len(res.dialogues) == 1000
