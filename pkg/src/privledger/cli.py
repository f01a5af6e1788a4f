"""Command-line front end.

Subcommands: init, provider add, accessor add, policy set, query,
ledger list-streams / items / verify, bench.  Exit status is 0 for
success, 1 for general errors, 2 for usage errors, 3 for an aborted
mediation, 4 for failed authentication and 5 for a failed chain
verification.  With --json every record prints as one JSON line.
"""

from __future__ import annotations

import argparse
import datetime as dt
import fcntl
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

from . import bench as bench_mod
from . import fixtures
from .engine import (
    DATA_DIR_ENV,
    AlreadyInitialized,
    ConfigError,
    Engine,
    EngineConfig,
    EngineError,
    NotInitialized,
    apply_env_overrides,
)
from .ledger import ChainReport, LedgerError, verify_file
from .mediator import MediationStatus, QueryRequest
from .policy import (
    AccessorProfile,
    AccessorRole,
    PolicyError,
    Sensitivity,
    parse_policy_document,
)
from .store import AuthenticationFailed, StoreError
from .tuples import TupleError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_ABORTED = 3
EXIT_AUTH_FAILED = 4
EXIT_VERIFY_FAILED = 5

DEFAULT_DATA_DIR = "privledger-data"
LOCK_FILE = ".lock"


class CliError(Exception):
    """Operator-facing failure with a chosen exit status."""

    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


class Output:
    def __init__(self, as_json: bool):
        self.as_json = as_json

    def emit(self, record: dict, text: str):
        if self.as_json:
            print(json.dumps(record, sort_keys=True))
        else:
            print(text)


@contextmanager
def data_dir_lock(data_dir: Path):
    """One process per data directory; the second fails fast."""
    data_dir.mkdir(parents=True, exist_ok=True)
    handle = open(data_dir / LOCK_FILE, "a+")
    try:
        try:
            fcntl.flock(handle.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            raise CliError(
                f"data directory is locked by another process: {data_dir}"
            ) from None
        yield
    finally:
        handle.close()


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privledger",
        description="Privacy-aware data engine over an append-only stream ledger.",
    )
    parser.add_argument("--config", help="path to a key = value configuration file")
    parser.add_argument("--data-dir", help="data directory (overrides config and env)")
    parser.add_argument("--json", action="store_true", help="line-delimited JSON output")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("init", help="initialize a fresh data directory")

    provider = commands.add_parser("provider", help="provider records")
    provider_sub = provider.add_subparsers(dest="subcommand", required=True)
    provider_add = provider_sub.add_parser("add", help="add or replace a provider record")
    provider_add.add_argument("--id", type=int, required=True)
    provider_add.add_argument(
        "--set",
        dest="values",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="attribute value, repeatable",
    )

    accessor = commands.add_parser("accessor", help="accessor accounts")
    accessor_sub = accessor.add_subparsers(dest="subcommand", required=True)
    accessor_add = accessor_sub.add_parser("add", help="register an accessor")
    accessor_add.add_argument("--id", type=int, required=True)
    accessor_add.add_argument("--login", required=True)
    accessor_add.add_argument("--password", required=True)
    accessor_add.add_argument(
        "--role", required=True, choices=[r.token for r in AccessorRole]
    )
    accessor_add.add_argument(
        "--permission",
        required=True,
        choices=[level.token for level in Sensitivity],
        help="maximum readable sensitivity",
    )

    policy = commands.add_parser("policy", help="privacy policies")
    policy_sub = policy.add_subparsers(dest="subcommand", required=True)
    policy_set = policy_sub.add_parser(
        "set", help="bind, hash, publish and store one policy version"
    )
    policy_set.add_argument("--provider", type=int, required=True)
    policy_set.add_argument("--attribute", type=int, required=True)
    policy_set.add_argument("--accessor", type=int, required=True)
    policy_set.add_argument("--file", required=True, help="policy document path")

    query = commands.add_parser("query", help="run a mediated query")
    query.add_argument("--login", required=True)
    query.add_argument("--password", required=True)
    query.add_argument("--purpose", required=True)
    query.add_argument(
        "--attributes", required=True, help="comma-separated attribute names"
    )
    query.add_argument("--provider", type=int, help="restrict to one provider")
    query.add_argument(
        "--where",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="predicate conjunct, repeatable",
    )
    query.add_argument(
        "--native",
        action="store_true",
        help="bypass mediation (benchmark configurations only)",
    )
    query.add_argument("--now", help="policy evaluation date, ISO-8601")

    ledger = commands.add_parser("ledger", help="inspect the stream ledger")
    ledger_sub = ledger.add_subparsers(dest="subcommand", required=True)
    ledger_sub.add_parser("list-streams", help="streams with item counts")
    items = ledger_sub.add_parser("items", help="transaction items of a stream")
    items.add_argument("stream")
    items.add_argument("--start", type=int, default=0, help="negative counts from the end")
    items.add_argument("--count", type=int, help="maximum items")
    ledger_sub.add_parser("verify", help="walk the hash chain from genesis")

    bench = commands.add_parser("bench", help="run the benchmark harness")
    bench.add_argument(
        "--archetype",
        default="all",
        choices=[a.token for a in bench_mod.Archetype] + ["all"],
    )
    bench.add_argument("--trials", type=int, help="trials per archetype")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--providers", type=int, default=100, help="fixture size")
    bench.add_argument("--out", help="write per-archetype rows as JSON lines")

    return parser


def resolve_config(args) -> EngineConfig:
    if args.config:
        config = EngineConfig.from_file(args.config)
    else:
        config = EngineConfig(data_dir=Path(DEFAULT_DATA_DIR))
    config = apply_env_overrides(config)
    if args.data_dir:
        config = config.with_data_dir(args.data_dir)
    return config


def _parse_assignments(pairs, what: str) -> dict:
    values = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise CliError(f"{what} must read NAME=VALUE, got {pair!r}", EXIT_USAGE)
        try:
            values[name] = int(value, 10)
        except ValueError:
            values[name] = value
    return values


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_init(config: EngineConfig, out: Output) -> int:
    with data_dir_lock(config.data_dir):
        engine = Engine.initialize(config)
        try:
            genesis = engine.ledger.item(0)
            out.emit(
                {
                    "record": "init",
                    "data_dir": str(config.data_dir),
                    "root_seq": genesis.seq,
                },
                f"initialized {config.data_dir} (root stream at seq {genesis.seq})",
            )
        finally:
            engine.close()
    return EXIT_OK


def cmd_provider_add(config: EngineConfig, args, out: Output) -> int:
    values = _parse_assignments(args.values, "--set")
    with data_dir_lock(config.data_dir):
        engine = Engine.open(config)
        try:
            engine.add_provider(args.id, values)
            out.emit(
                {"record": "provider", "provider_id": args.id, "attributes": len(values)},
                f"stored provider {args.id} with {len(values)} attribute values",
            )
        finally:
            engine.close()
    return EXIT_OK


def cmd_accessor_add(config: EngineConfig, args, out: Output) -> int:
    profile = AccessorProfile(
        accessor_id=args.id,
        role=AccessorRole.from_token(args.role),
        permission_level=Sensitivity.from_token(args.permission),
    )
    with data_dir_lock(config.data_dir):
        engine = Engine.open(config)
        try:
            engine.add_accessor(args.login, args.password, profile)
            out.emit(
                {"record": "accessor", "accessor_id": args.id, "login": args.login},
                f"registered accessor {args.id} ({args.login}, {args.role})",
            )
        finally:
            engine.close()
    return EXIT_OK


def cmd_policy_set(config: EngineConfig, args, out: Output) -> int:
    text = Path(args.file).read_text()
    records = parse_policy_document(text)
    if len(records) != 1:
        raise CliError(
            f"policy file must hold exactly one record, found {len(records)}"
        )
    with data_dir_lock(config.data_dir):
        engine = Engine.open(config)
        try:
            publication = engine.set_policy(
                args.provider, args.accessor, records[0], attribute_id=args.attribute
            )
            out.emit(
                {
                    "record": "publication",
                    "stream": publication.stream,
                    "seq": publication.seq,
                    "version": publication.version,
                    "key": publication.key,
                },
                f"published {publication.stream} seq {publication.seq} "
                f"version {publication.version} key {publication.key}",
            )
        finally:
            engine.close()
    return EXIT_OK


def _render_cell(value) -> str:
    return "" if value is None else str(value)


def cmd_query(config: EngineConfig, args, out: Output) -> int:
    attributes = tuple(a.strip() for a in args.attributes.split(",") if a.strip())
    predicate = _parse_assignments(args.where, "--where")
    now = None
    if args.now:
        try:
            now = dt.date.fromisoformat(args.now)
        except ValueError:
            raise CliError(f"--now must be an ISO-8601 date, got {args.now!r}", EXIT_USAGE)
    if args.native and not config.bench_mode:
        raise CliError("--native is only available when bench_mode is enabled")
    with data_dir_lock(config.data_dir):
        engine = Engine.open(config)
        try:
            profile = engine.store.authenticate(args.login, args.password)
            request = QueryRequest(
                accessor_id=profile.accessor_id,
                requested_purpose=args.purpose,
                attributes=attributes,
                predicate=predicate,
                provider_id=args.provider,
            )
            if args.native:
                native = engine.native_query(request)
                out.emit(
                    {
                        "record": "native",
                        "columns": list(native.columns),
                        "duration_ms": round(native.duration_ms, 2),
                    },
                    f"native columns: {', '.join(native.columns)} "
                    f"({native.duration_ms:.2f} ms)",
                )
                for row in native.rows:
                    out.emit(
                        {
                            "record": "row",
                            "provider_id": row.provider_id,
                            "cells": list(row.cells),
                        },
                        f"provider {row.provider_id}: "
                        + " | ".join(_render_cell(c) for c in row.cells),
                    )
                return EXIT_OK
            result = engine.mediate(request, now=now)
        finally:
            engine.close()

    out.emit(
        {"record": "status", "status": result.status.value},
        f"status = {result.status.value}",
    )
    for entry in result.verification:
        out.emit(
            {
                "record": "verification",
                "stream": entry.lineage.stream,
                "seq": entry.seq,
                "verified": entry.verified,
                "note": entry.note,
            },
            f"  {entry.lineage.stream}  seq={entry.seq}  "
            f"verified={'yes' if entry.verified else 'no'} ({entry.note})",
        )
    for name, reason in result.denials:
        out.emit(
            {"record": "denial", "attribute": name, "reason": reason},
            f"  denied {name}: {reason}",
        )
    out.emit(
        {"record": "columns", "columns": list(result.columns)},
        "columns: " + " | ".join(result.columns),
    )
    for row in result.rows:
        out.emit(
            {"record": "row", "provider_id": row.provider_id, "cells": list(row.cells)},
            f"provider {row.provider_id}: "
            + " | ".join(_render_cell(c) for c in row.cells),
        )
    out.emit(
        {
            "record": "timing",
            "native_ms": round(result.timing.native_ms, 2),
            "total_ms": round(result.timing.total_ms, 2),
        },
        f"timing: native={result.timing.native_ms:.2f} ms "
        f"total={result.timing.total_ms:.2f} ms",
    )
    if result.status is MediationStatus.ABORTED:
        return EXIT_ABORTED
    return EXIT_OK


def cmd_ledger_list_streams(config: EngineConfig, out: Output) -> int:
    with data_dir_lock(config.data_dir):
        engine = Engine.open(config)
        try:
            for stream in engine.ledger.streams():
                out.emit(
                    {
                        "record": "stream",
                        "name": stream.name,
                        "items": stream.item_count,
                        "created_by": stream.created_by,
                        "subscribed": stream.subscribed,
                    },
                    f"{stream.name}  items={stream.item_count}  "
                    f"created_by={stream.created_by}  "
                    f"subscribed={'yes' if stream.subscribed else 'no'}",
                )
        finally:
            engine.close()
    return EXIT_OK


def cmd_ledger_items(config: EngineConfig, args, out: Output) -> int:
    with data_dir_lock(config.data_dir):
        engine = Engine.open(config)
        try:
            items = engine.ledger.list_items(
                args.stream, start=args.start, count=args.count
            )
            for item in items:
                try:
                    payload_text = item.payload.decode("ascii")
                except UnicodeDecodeError:
                    payload_text = item.payload.hex()
                out.emit(
                    {
                        "record": "item",
                        "seq": item.seq,
                        "key": item.key,
                        "publisher": item.publisher,
                        "timestamp": item.timestamp.isoformat(),
                        "payload": payload_text,
                        "confirmed": item.confirmed,
                    },
                    f"seq={item.seq}  key={item.key}  "
                    f"time={item.timestamp.isoformat()}  "
                    f"confirmed={'yes' if item.confirmed else 'no'}  "
                    f"payload={payload_text}",
                )
        finally:
            engine.close()
    return EXIT_OK


def cmd_ledger_verify(config: EngineConfig, out: Output) -> int:
    ledger_path = config.resolved_ledger_path
    if not ledger_path.exists():
        raise CliError(f"no ledger at {ledger_path}")
    report: ChainReport = verify_file(ledger_path)
    out.emit(
        {
            "record": "verification",
            "intact": report.intact,
            "records": report.records,
            "first_bad_seq": report.first_bad_seq,
            "detail": report.detail,
        },
        f"{report.detail} ({report.records} records)"
        if report.intact
        else f"chain verification failed: {report.detail}",
    )
    return EXIT_OK if report.intact else EXIT_VERIFY_FAILED


def cmd_bench(config: EngineConfig, args, out: Output) -> int:
    if not config.bench_mode:
        raise CliError("bench requires bench_mode = true in the configuration")
    trials = args.trials or config.default_trials
    if args.archetype == "all":
        archetypes = list(bench_mod.Archetype)
    else:
        archetypes = [bench_mod.Archetype.from_token(args.archetype)]
    fixture_dir = config.data_dir / f"bench-n{args.providers}-s{args.seed}"
    fixture_config = config.with_data_dir(fixture_dir)
    with data_dir_lock(fixture_dir):
        if (fixture_dir / "content.db").exists():
            engine = Engine.open(fixture_config)
        else:
            engine = Engine.initialize(fixture_config)
            fixtures.install_archetype_fixture(
                engine, provider_count=args.providers, seed=args.seed
            )
        try:
            results = []
            for archetype in archetypes:
                spec = bench_mod.BenchSpec(
                    archetype=archetype, trials=trials, seed=args.seed
                )
                results.append(
                    bench_mod.run_bench(
                        engine,
                        spec,
                        accessor_id=fixtures.BENCH_ACCESSOR_ID,
                        requested_purpose=fixtures.BENCH_PURPOSE,
                    )
                )
        finally:
            engine.close()

    report = bench_mod.build_report([r.row for r in results])
    rows = [*report.rows, report.aggregate_row]
    if out.as_json:
        for row in rows:
            out.emit(
                {
                    "record": "bench",
                    "label": row.label,
                    "native_ms": round(row.native_ms, 2),
                    "private_ms": round(row.private_ms, 2),
                    "overhead_ms": round(row.overhead_ms, 2),
                    "overhead_pct": row.overhead_pct,
                },
                "",
            )
    else:
        print(bench_mod.render_report(report))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(
                    json.dumps(
                        {
                            "label": row.label,
                            "native_ms": row.native_ms,
                            "private_ms": row.private_ms,
                            "overhead_ms": row.overhead_ms,
                            "overhead_pct": row.overhead_pct,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def run(args) -> int:
    config = resolve_config(args)
    out = Output(args.json)
    if args.command == "init":
        return cmd_init(config, out)
    if args.command == "provider":
        return cmd_provider_add(config, args, out)
    if args.command == "accessor":
        return cmd_accessor_add(config, args, out)
    if args.command == "policy":
        return cmd_policy_set(config, args, out)
    if args.command == "query":
        return cmd_query(config, args, out)
    if args.command == "ledger":
        if args.subcommand == "list-streams":
            return cmd_ledger_list_streams(config, out)
        if args.subcommand == "items":
            return cmd_ledger_items(config, args, out)
        return cmd_ledger_verify(config, out)
    if args.command == "bench":
        return cmd_bench(config, args, out)
    raise CliError(f"unknown command: {args.command}", EXIT_USAGE)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return run(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except AuthenticationFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_AUTH_FAILED
    except (
        AlreadyInitialized,
        NotInitialized,
        ConfigError,
        EngineError,
        LedgerError,
        StoreError,
        PolicyError,
        TupleError,
        bench_mod.BenchError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
