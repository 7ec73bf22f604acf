"""End-to-end corpus generation: scenario, outline, realization and flow dedup.

Attempt ``i`` is a pure function of ``(seed, i)``: its scenario, outline and
realization seeds are derived from those two numbers only. Attempts may run
in worker processes, but they are accepted or rejected strictly in index
order, so the corpus does not depend on ``jobs``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from ..corpus import Dialogue, serialize_dialogues, write_corpus
from ..rng import derive_seed
from ..schema import ServiceSchema, serialize_schemas
from ..services import EntityTable
from .config import AutomatonConfig, TemplateSet
from .outline import generate_outline
from .realize import realize
from .scenario import sample_scenario

log = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
BUDGET_PER_DIALOGUE = 50


@dataclass(frozen=True)
class FlowSignature:
    """Hash of the delexicalized act sequence: speaker, service and (act, slot) pairs per turn."""

    digest: str

    @staticmethod
    def delexicalize(d: Dialogue) -> list:
        return [
            [t.speaker, [[f.service, [[a.act, a.slot or ""] for a in f.actions]] for f in t.frames]]
            for t in d.turns
        ]

    @classmethod
    def of(cls, d: Dialogue) -> "FlowSignature":
        text = json.dumps(cls.delexicalize(d), separators=(",", ":"))
        return cls(hashlib.sha256(text.encode("utf-8")).hexdigest())


@dataclass
class GenerationResult:
    dialogues: list[Dialogue]
    seed: int
    requested: int
    attempts: int = 0
    rejected_duplicates: int = 0
    duplicate_quota: int = 1
    warnings: list[str] = field(default_factory=list)

    @property
    def shortfall(self) -> int:
        return self.requested - len(self.dialogues)


_WORKER: dict = {}


def _init_worker(schemas, tables, automaton, templates, pools):
    _WORKER.update(schemas=schemas, tables=tables, automaton=automaton, templates=templates, pools=pools)


def simulate_one(
    index: int,
    seed: int,
    schemas: Mapping[str, ServiceSchema],
    tables: Mapping[str, EntityTable],
    automaton: AutomatonConfig,
    templates: TemplateSet,
    pools=None,
    dialogue_id: str = "",
) -> Dialogue:
    """Attempt ``index`` of the run seeded with ``seed``."""
    scenario = sample_scenario(derive_seed(seed, index, "scenario"), schemas, tables, automaton, pools)
    outline = generate_outline(
        scenario, schemas, tables, automaton, derive_seed(seed, index, "outline"), pools, dialogue_id or f"attempt_{index}"
    )
    return realize(outline, templates, schemas, derive_seed(seed, index, "realize"))


def _attempt(args: tuple[int, int]) -> Dialogue:
    index, seed = args
    w = _WORKER
    return simulate_one(index, seed, w["schemas"], w["tables"], w["automaton"], w["templates"], w["pools"])


def generate_corpus(
    schemas: Mapping[str, ServiceSchema],
    tables: Mapping[str, EntityTable],
    automaton: AutomatonConfig,
    templates: TemplateSet,
    n: int,
    rng_seed: int,
    *,
    pools=None,
    duplicate_quota: int = 1,
    retry_budget: int | None = None,
    jobs: int = 1,
    id_prefix: str = "sim",
) -> GenerationResult:
    """Generate up to ``n`` dialogues; at most ``duplicate_quota`` per flow signature.

    Gives up after ``retry_budget`` attempts (default ``50 * n``) and reports
    the shortfall in ``warnings`` instead of raising.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if duplicate_quota < 1:
        raise ValueError("duplicate_quota must be at least 1")
    budget = retry_budget if retry_budget is not None else BUDGET_PER_DIALOGUE * n
    result = GenerationResult([], rng_seed, n, duplicate_quota=duplicate_quota)
    counts: dict[FlowSignature, int] = {}

    def accept(d: Dialogue) -> None:
        sig = FlowSignature.of(d)
        if counts.get(sig, 0) >= duplicate_quota:
            result.rejected_duplicates += 1
            return
        counts[sig] = counts.get(sig, 0) + 1
        result.dialogues.append(replace(d, dialogue_id=f"{id_prefix}_{len(result.dialogues):05d}"))

    if jobs <= 1:
        while len(result.dialogues) < n and result.attempts < budget:
            accept(simulate_one(result.attempts, rng_seed, schemas, tables, automaton, templates, pools))
            result.attempts += 1
    else:
        init = (dict(schemas), dict(tables), automaton, templates, dict(pools or {}))
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=init) as pool:
            while len(result.dialogues) < n and result.attempts < budget:
                batch = min(budget - result.attempts, max(2 * (n - len(result.dialogues)), 4 * jobs))
                indices = [(i, rng_seed) for i in range(result.attempts, result.attempts + batch)]
                for d in pool.map(_attempt, indices, chunksize=max(1, batch // (4 * jobs))):
                    if len(result.dialogues) >= n:
                        break
                    accept(d)
                    result.attempts += 1

    if result.shortfall:
        msg = (
            f"only {len(result.dialogues)} of {n} dialogues with distinct flows after "
            f"{result.attempts} attempts ({result.rejected_duplicates} duplicates rejected)"
        )
        log.warning(msg)
        result.warnings.append(msg)
    return result


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def config_hashes(schemas, tables, automaton: AutomatonConfig, templates: TemplateSet, pools=None) -> dict:
    """Content hashes of every generation input, independent of file layout."""
    template_json = {f"{s}|{a}|{sl or ''}": list(v) for (s, a, sl), v in templates.templates.items()}
    return {
        "schemas": _sha256(serialize_schemas([schemas[k] for k in sorted(schemas)])),
        "entities": {k: _sha256(_canonical([list(t.columns), [list(r) for r in t.rows]])) for k, t in sorted(tables.items())},
        "automaton": _sha256(_canonical(automaton.to_json())),
        "templates": _sha256(_canonical(template_json)),
        "value_pools": _sha256(_canonical({k: list(v) for k, v in (pools or {}).items()})),
    }


def write_simulation(
    out_dir: str | Path,
    result: GenerationResult,
    hashes: Mapping,
    shard_size: int = 128,
) -> dict:
    """Write dialogue shards and ``manifest.json``; returns the manifest.

    The manifest holds only deterministic content (no timestamps, no worker
    count), so two runs with the same inputs produce identical bytes.
    """
    out_dir = Path(out_dir)
    paths = write_corpus(out_dir, result.dialogues, shard_size)
    manifest = {
        "seed": result.seed,
        "requested": result.requested,
        "num_dialogues": len(result.dialogues),
        "num_turns": sum(len(d.turns) for d in result.dialogues),
        "attempts": result.attempts,
        "rejected_duplicates": result.rejected_duplicates,
        "duplicate_quota": result.duplicate_quota,
        "shortfall": result.shortfall,
        "config_hashes": dict(hashes),
        "shards": [{"file": p.name, "sha256": _sha256(p.read_bytes())} for p in paths],
    }
    (out_dir / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def corpus_digest(dialogues: Sequence[Dialogue]) -> str:
    return _sha256(serialize_dialogues(dialogues))
