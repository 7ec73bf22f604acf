"""Command-line entry point: ``sgdkit <subcommand> ...``.

Exit codes: 0 success, 1 validation failure (the report is still written),
2 usage or I/O error. Every run that writes outputs also writes
``run_manifest.json`` next to them.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

from . import DATA_DIR, __version__
from .corpus import (
    CorpusFormatError,
    CorpusParseError,
    read_corpus,
    strip_user_annotations,
    validate_corpus,
    write_corpus,
)
from .metrics import ALL, METRICS, SEEN, UNSEEN, AlignmentError, evaluate
from .schema import SchemaError, SchemaValidationError, SchemaValidationReport, parse_schemas, schema_index, validate_schemas
from .services import EntityTableError, load_entities, load_value_pools
from .simulator.config import ConfigError, file_digest, load_automaton, load_templates
from .simulator.generate import config_hashes, generate_corpus, write_simulation
from .simulator.scenario import ScenarioError
from .stats import StatsError, compute_stats, load_domain_map, load_service_list, render_histograms
from .tracker import oracle_track, track_corpus

log = logging.getLogger("sgdkit")

RUN_MANIFEST = "run_manifest.json"
EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _data_dir() -> Path:
    return DATA_DIR


def _digest_path(path: Path) -> dict[str, str]:
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    return {str(p): hashlib.sha256(p.read_bytes()).hexdigest() for p in files}


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _write_run_manifest(out_dir: Path, args, started: str, inputs: dict, extra: dict | None = None) -> None:
    manifest = {
        "command": args.command,
        "argv": list(args.argv),
        "tool_version": __version__,
        "python": platform.python_version(),
        "seed": getattr(args, "seed", None),
        "input_digests": inputs,
        "started": started,
        "finished": _now(),
    }
    manifest.update(extra or {})
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RUN_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_schemas(path: str | None, report: SchemaValidationReport | None = None):
    p = Path(path) if path else _data_dir() / "schema.json"
    if p.is_dir():
        p = p / "schema.json"
    if not p.exists():
        raise UsageError(f"schema file not found: {p}")
    schemas = parse_schemas(p.read_bytes())
    rep = validate_schemas(schemas)
    if report is not None:
        report.extend(rep)
    elif not rep.ok:
        raise SchemaValidationError(rep)
    return schema_index(schemas), p


def _print_report(report: SchemaValidationReport, fmt: str, stream=None) -> None:
    stream = stream or sys.stdout
    if fmt == "json":
        print(json.dumps(report.to_json(), indent=2), file=stream)
        return
    for loc, msg in report.errors:
        print(f"error   {loc}: {msg}", file=stream)
    for loc, msg in report.warnings:
        print(f"warning {loc}: {msg}", file=stream)
    print("ok" if report.ok else f"{len(report.errors)} error(s)", file=stream)


# ----------------------------------------------------------------- commands


def cmd_schema_validate(args) -> int:
    started = _now()
    report = SchemaValidationReport()
    schemas, path = _load_schemas(args.schemas, report)
    inputs = _digest_path(path)
    if args.data and report.ok:
        dialogues = read_corpus(args.data)
        inputs.update(_digest_path(Path(args.data)))
        for did, rep in validate_corpus(dialogues, schemas).items():
            report.extend(rep, prefix=f"{did}:")
    _print_report(report, args.format)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation_report.json").write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
        _write_run_manifest(out, args, started, inputs)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_simulate(args) -> int:
    started = _now()
    schemas, schema_path = _load_schemas(args.schemas)
    entities = Path(args.entities) if args.entities else _data_dir() / "entities"
    tables = load_entities(entities, schemas)
    pools = load_value_pools(args.pools or entities)
    automaton = load_automaton(args.automaton)
    templates = load_templates(args.templates)
    result = generate_corpus(
        schemas,
        tables,
        automaton,
        templates,
        args.num,
        args.seed,
        pools=pools,
        duplicate_quota=args.duplicate_quota,
        jobs=args.jobs,
    )
    out = Path(args.out)
    hashes = config_hashes(schemas, tables, automaton, templates, pools)
    manifest = write_simulation(out, result, hashes, args.shard_size)
    for w in result.warnings:
        log.warning(w)
    inputs = {**_digest_path(schema_path), **_digest_path(entities)}
    inputs["automaton"] = file_digest(args.automaton, "automaton.json")
    inputs["templates"] = file_digest(args.templates, "templates.json")
    _write_run_manifest(out, args, started, inputs, {"jobs": args.jobs, "config_hashes": hashes})
    log.info("wrote %d dialogues to %s", manifest["num_dialogues"], out)
    return EXIT_OK


def cmd_track(args) -> int:
    started = _now()
    schemas, schema_path = _load_schemas(args.schemas)
    dialogues = read_corpus(args.data)
    if args.oracle:
        hyps = oracle_track(dialogues)
    else:
        entities = Path(args.entities) if args.entities else None
        tables = load_entities(entities, schemas) if entities else {}
        pools = load_value_pools(args.pools or entities) if (args.pools or entities) else {}
        hyps = track_corpus([strip_user_annotations(d) for d in dialogues], schemas, tables, pools)
    out = Path(args.out)
    write_corpus(out, hyps, args.shard_size, single_values=True)
    inputs = {**_digest_path(schema_path), **_digest_path(Path(args.data))}
    _write_run_manifest(out, args, started, inputs, {"tracker": "oracle" if args.oracle else "rules"})
    return EXIT_OK


def _format_eval(report) -> str:
    header = f"{'metric':<24}" + "".join(f"{b:>10}" for b in (ALL, SEEN, UNSEEN))
    lines = [header]
    for m in METRICS:
        cells = []
        for b in (ALL, SEEN, UNSEEN):
            v = getattr(report.buckets[b], m)
            cells.append(f"{'n/a' if v is None else f'{v:.4f}':>10}")
        lines.append(f"{m:<24}" + "".join(cells))
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    started = _now()
    schemas, schema_path = _load_schemas(args.schemas)
    refs = read_corpus(args.ref)
    hyps = read_corpus(args.hyp, hypothesis=True)
    seen = load_service_list(args.seen_services) if args.seen_services else []
    out = Path(args.out) if args.out else None
    try:
        report = evaluate(refs, hyps, schemas, seen)
    except AlignmentError as exc:
        log.error("%s", exc)
        if out:
            out.mkdir(parents=True, exist_ok=True)
            (out / "eval_report.json").write_text(json.dumps({"error": str(exc)}, indent=2) + "\n", encoding="utf-8")
        return EXIT_INVALID
    for w in report.warnings:
        log.warning(w)
    doc = report.to_json()
    print(json.dumps(doc, indent=2) if args.format == "json" else _format_eval(report))
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        inputs = {**_digest_path(schema_path), **_digest_path(Path(args.ref)), **_digest_path(Path(args.hyp))}
        _write_run_manifest(out, args, started, inputs)
    return EXIT_OK


def cmd_stats(args) -> int:
    started = _now()
    default = Path(args.data) / "schema.json" if Path(args.data).is_dir() else Path(args.data).parent / "schema.json"
    schemas, schema_path = _load_schemas(args.schemas or (default if default.exists() else None))
    dialogues = read_corpus(args.data)
    seen = load_service_list(args.seen_services) if args.seen_services else None
    domains = load_domain_map(args.domains) if args.domains else None
    report = compute_stats(dialogues, schemas, seen, domains)
    out = Path(args.out)
    if out.suffix == ".json":
        out_dir, report_path = out.parent, out
    else:
        out_dir, report_path = out, out / "stats_report.json"
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = report.to_json()
    report_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    for name, data in render_histograms(report).items():
        (out_dir / name).write_bytes(data)
    if args.format == "json":
        print(json.dumps(doc, indent=2))
    else:
        for k in ("num_dialogues", "total_turns", "avg_turns_per_dialogue", "num_slots", "num_slot_values",
                  "total_unique_tokens", "unseen_turn_fraction"):
            print(f"{k:<24}{doc[k]}")
    inputs = {**_digest_path(schema_path), **_digest_path(Path(args.data))}
    _write_run_manifest(out_dir, args, started, inputs)
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgdkit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("schema-validate", help="validate a schema file (and optionally dialogues)")
    s.add_argument("schemas", help="schema.json or a directory holding it")
    s.add_argument("--data", help="dialogue file or directory to validate against the schemas")
    s.add_argument("--out", help="directory for validation_report.json")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_schema_validate)

    s = sub.add_parser("simulate", help="generate a synthetic annotated corpus")
    s.add_argument("--schemas", help="schema file or directory (default: bundled services)")
    s.add_argument("--entities", help="directory of <service>.csv tables (default: bundled)")
    s.add_argument("--pools", help="value_pools.json (default: next to the entity tables)")
    s.add_argument("--automaton", help="automaton config JSON (default: bundled)")
    s.add_argument("--templates", help="template set JSON (default: bundled)")
    s.add_argument("--num", type=int, required=True, help="number of dialogues")
    s.add_argument("--seed", type=int, required=True, help="random seed (required)")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1, help="worker processes; output does not depend on it")
    s.add_argument("--duplicate-quota", type=int, default=1, help="max dialogues per flow signature")
    s.add_argument("--shard-size", type=int, default=128)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("track", help="produce a hypothesis corpus with the rule-based tracker")
    s.add_argument("--data", required=True, help="reference dialogues (user states are ignored)")
    s.add_argument("--schemas", help="schema file or directory (default: bundled services)")
    s.add_argument("--entities", help="entity tables used for value matching")
    s.add_argument("--pools", help="value_pools.json")
    s.add_argument("--oracle", action="store_true", help="copy reference states instead of tracking")
    s.add_argument("--out", required=True)
    s.add_argument("--shard-size", type=int, default=128)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("evaluate", help="score hypotheses against references")
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp", required=True)
    s.add_argument("--schemas", help="schema file or directory (default: bundled services)")
    s.add_argument("--seen-services", help="file with one seen service name per line")
    s.add_argument("--out", help="directory for eval_report.json")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("stats", help="corpus statistics and histogram tables")
    s.add_argument("--data", required=True)
    s.add_argument("--schemas", help="schema file or directory (default: schema.json next to the data, else bundled)")
    s.add_argument("--seen-services", help="file with one seen service name per line")
    s.add_argument("--domains", help="JSON map of service name to domain")
    s.add_argument("--out", required=True, help="report path (*.json) or output directory")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_stats)
    return p


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    args.argv = argv
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    if getattr(args, "num", 1) < 1 or getattr(args, "jobs", 1) < 1:
        print("sgdkit: --num and --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except SchemaValidationError as exc:
        _print_report(exc.report, "text", sys.stderr)
        return EXIT_INVALID
    except (UsageError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"sgdkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, CorpusParseError, CorpusFormatError, EntityTableError, ConfigError, ScenarioError, StatsError) as exc:
        print(f"sgdkit: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
