"""Scenario sampling: the ordered intents (with goal values) that seed the user agent."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from ..rng import SplitMix64
from ..schema import ServiceSchema
from ..services import EntityTable
from .config import AutomatonConfig


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    items: tuple[tuple[str, str], ...]  # (service, intent)
    constraints: tuple[dict[str, str], ...]  # per item: slot -> goal value
    # per service: the entity row the user has in mind (column -> value)
    entities: dict[str, dict[str, str]]

    def services(self) -> list[str]:
        return list(dict.fromkeys(s for s, _ in self.items))


def _pool_for(pools: Mapping[str, tuple[str, ...]], service: str, slot: str) -> tuple[str, ...]:
    return pools.get(f"{service}.{slot}") or pools.get(slot) or ()


def _related(slot: str, aliases: Mapping[str, tuple[str, ...]]) -> list[str]:
    return [slot, *aliases.get(slot, ())]


def validate_scenario(scenario: Scenario, schemas: Mapping[str, ServiceSchema], max_intents: int) -> None:
    if not 1 <= len(scenario.items) <= max_intents:
        raise ScenarioError(f"scenario has {len(scenario.items)} items, expected 1..{max_intents}")
    for service, intent in scenario.items:
        schema = schemas.get(service)
        if schema is None or not schema.has_intent(intent):
            raise ScenarioError(f"unknown (service, intent) {(service, intent)}")


def sample_scenario(
    rng_seed: int,
    schemas: Mapping[str, ServiceSchema],
    tables: Mapping[str, EntityTable],
    config: AutomatonConfig,
    pools: Mapping[str, tuple[str, ...]] | None = None,
) -> Scenario:
    """Draw a scenario: a few services, one or two intents each, goals from table rows.

    Services appear as contiguous blocks so a service's frames never come
    back once the dialogue has moved on. When a slot (or an alias of it) was
    already part of an earlier service's goal, the value is reused with
    probability ``carryover_prob``, restricted to rows that contain it.
    """
    pools = pools or {}
    missing = [name for name in schemas if name not in tables or not tables[name].rows]
    if missing:
        raise ScenarioError(f"no entity table for service(s) {', '.join(sorted(missing))}")
    if not schemas:
        raise ScenarioError("no services to sample from")
    rng = SplitMix64(rng_seed)
    params = config.params
    names = sorted(schemas)
    n_services = min(rng.weighted(config.distribution("num_services")), len(names))
    chosen = rng.sample(names, max(n_services, 1))

    items: list[tuple[str, str]] = []
    constraints: list[dict[str, str]] = []
    entities: dict[str, dict[str, str]] = {}
    known: dict[str, str] = {}  # slot -> value from earlier services' goals

    for service in chosen:
        if len(items) >= config.max_intents:
            break
        schema, table = schemas[service], tables[service]
        searches = [i for i in schema.intents if not i.is_transactional]
        transactions = [i for i in schema.intents if i.is_transactional]
        n_intents = rng.weighted(config.distribution("intents_per_service"))
        if n_intents >= 2 and searches and transactions:
            intents = [rng.choice(searches), rng.choice(transactions)]
        else:
            intents = [rng.choice(list(schema.intents))]
        intents = intents[: config.max_intents - len(items)]

        rows = list(table.rows)
        carried: dict[str, str] = {}
        for col in table.columns:
            for src in _related(col, config.slot_aliases):
                if src in known and rng.chance(params["carryover_prob"]):
                    narrowed = [r for r in rows if r[table.columns.index(col)] == known[src]]
                    if narrowed:
                        rows = narrowed
                        carried[col] = known[src]
                    break
        row = table.row_dict(rng.choice(rows))
        entities[service] = row

        goal: dict[str, str] = {}
        for intent in intents:
            wanted = list(intent.required_slots)
            wanted += [s for s in intent.optional_slots if rng.chance(params["optional_goal_prob"])]
            item_goal = {}
            for slot in wanted:
                if slot not in goal:
                    goal[slot] = _goal_value(rng, schema, slot, row, known, config, pools)
                item_goal[slot] = goal[slot]
            items.append((service, intent.name))
            constraints.append(item_goal)
        for slot, value in {**goal, **row}.items():
            known.setdefault(slot, value)
        known.update(carried)

    scenario = Scenario(tuple(items), tuple(constraints), entities)
    validate_scenario(scenario, schemas, config.max_intents)
    return scenario


def _goal_value(rng, schema: ServiceSchema, slot: str, row, known, config, pools) -> str:
    if slot in row:
        return row[slot]
    sdef = schema.slot(slot)
    for src in _related(slot, config.slot_aliases):
        if src in known and (not sdef.is_categorical or known[src] in sdef.possible_values):
            if rng.chance(config.params["carryover_prob"]):
                return known[src]
            break
    if sdef.is_categorical:
        return rng.choice(sdef.possible_values)
    pool = _pool_for(pools, schema.service_name, slot)
    if not pool:
        raise ScenarioError(f"no value source for {schema.service_name}.{slot}: not a table column and no pool")
    return rng.choice(pool)
