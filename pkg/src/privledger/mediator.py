"""Privacy-aware query mediation.

Every query is decomposed into (provider, attribute, accessor) lineages.
For each lineage the stored tuple instance is re-encoded and checked
against the hash published on the lineage's ledger stream; a single
mismatch aborts the whole request with zero disclosed cells.  Verified
lineages then pass through policy evaluation, the query is rewritten to
the allowed attribute set, executed once, and each disclosed cell is
transformed to its granted granularity.
"""

from __future__ import annotations

import datetime as dt
import time
from dataclasses import dataclass, field
from enum import Enum

from .ledger import EmptyStream, Ledger, UnknownStream, stream_name_for
from .policy import AccessorProfile, apply_granularity, evaluate_access
from .store import Store, TupleInstance, UnknownProvider
from .tuples import MalformedRecord, canonical_encode, verify_hash


class MediationStatus(str, Enum):
    COMPLETED = "Completed"
    ABORTED = "Aborted"


WITHHELD = "WITHHELD"

# Denial vocabulary seen in mediation results: the four policy reasons plus
# the two mediator-level outcomes below.
NO_PUBLISHED_POLICY = "NoPublishedPolicy"
INTEGRITY_ABORT = "IntegrityAbort"

VERIFIED_OK = "ok"
VERIFIED_MISMATCH = "mismatch"
VERIFIED_NO_POLICY = "no-policy"


@dataclass(frozen=True)
class Lineage:
    provider_id: int
    attribute_id: int
    accessor_id: int

    @property
    def stream(self) -> str:
        return stream_name_for(self.provider_id, self.attribute_id, self.accessor_id)

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.provider_id, self.attribute_id, self.accessor_id)


@dataclass(frozen=True)
class QueryRequest:
    accessor_id: int
    requested_purpose: str
    attributes: tuple[str, ...]
    predicate: dict = field(default_factory=dict)
    provider_id: int | None = None  # None means every provider

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.attributes:
            raise ValueError("a query must request at least one attribute")
        if len(set(self.attributes)) != len(self.attributes):
            raise ValueError("requested attributes must be distinct")


@dataclass(frozen=True)
class VerificationEntry:
    lineage: Lineage
    seq: int | None
    verified: bool
    note: str  # ok | mismatch | no-policy


@dataclass(frozen=True)
class ResultRow:
    provider_id: int
    cells: tuple


@dataclass(frozen=True)
class Timing:
    native_ms: float
    total_ms: float


@dataclass
class OpCounters:
    """Instrumented operation counts for one query execution."""

    ledger_reads: int = 0
    hash_verifications: int = 0
    policy_evaluations: int = 0
    selects: int = 0


@dataclass(frozen=True)
class MediationResult:
    status: MediationStatus
    columns: tuple[str, ...]
    rows: tuple[ResultRow, ...]
    denials: tuple[tuple[str, str], ...]
    verification: tuple[VerificationEntry, ...]
    timing: Timing
    ops: OpCounters


@dataclass(frozen=True)
class NativeResult:
    columns: tuple[str, ...]
    rows: tuple[ResultRow, ...]
    duration_ms: float
    ops: OpCounters


class Mediator:
    """Mediates queries between accessors, the store and the ledger."""

    def __init__(self, store: Store, ledger: Ledger):
        self._store = store
        self._ledger = ledger

    # -- analysis -----------------------------------------------------------

    def analyze(self, request: QueryRequest) -> list[Lineage]:
        """Lineages touched by a request, provider then attribute ascending."""
        attribute_ids = [
            self._store.catalog.by_name(name).attribute_id
            for name in request.attributes
        ]
        if request.provider_id is None:
            providers = self._store.provider_ids()
        else:
            if not self._store.has_provider(request.provider_id):
                raise UnknownProvider(f"no provider with id {request.provider_id}")
            providers = [request.provider_id]
        self._store.get_accessor(request.accessor_id)
        return [
            Lineage(provider_id, attribute_id, request.accessor_id)
            for provider_id in sorted(providers)
            for attribute_id in sorted(attribute_ids)
        ]

    # -- verification -------------------------------------------------------

    def _verify_lineage(
        self, lineage: Lineage, ops: OpCounters
    ) -> tuple[VerificationEntry, TupleInstance | None]:
        instance = self._store.latest_tuple_instance(lineage.key)
        try:
            item = self._ledger.latest_item(lineage.stream)
        except (UnknownStream, EmptyStream):
            return (
                VerificationEntry(lineage, None, False, VERIFIED_NO_POLICY),
                None,
            )
        ops.ledger_reads += 1
        if instance is None:
            # A published hash with no stored plaintext cannot be verified.
            return (
                VerificationEntry(lineage, item.seq, False, VERIFIED_MISMATCH),
                None,
            )
        encoded = canonical_encode(instance.privacy_tuple)
        try:
            ok = verify_hash(encoded, item.payload)
        except MalformedRecord:
            ok = False
        ops.hash_verifications += 1
        note = VERIFIED_OK if ok else VERIFIED_MISMATCH
        return (VerificationEntry(lineage, item.seq, ok, note), instance)

    def verify_lineage(self, lineage: Lineage) -> VerificationEntry:
        """Standalone integrity check of one lineage."""
        entry, _ = self._verify_lineage(lineage, OpCounters())
        return entry

    # -- mediation ----------------------------------------------------------

    def mediate(self, request: QueryRequest, now: dt.date | None = None) -> MediationResult:
        """Run one privacy-aware query.

        Hash inconsistency on any touched lineage aborts the whole
        request before anything is read from content.  Lineages without
        a published policy are denied, not aborted.  Equal requests over
        unchanged state produce equal results.
        """
        started = time.perf_counter()
        now = now or dt.date.today()
        ops = OpCounters()
        accessor = self._store.get_accessor(request.accessor_id)
        lineages = self.analyze(request)

        entries: list[VerificationEntry] = []
        instances: dict[Lineage, TupleInstance | None] = {}
        for lineage in lineages:
            entry, instance = self._verify_lineage(lineage, ops)
            entries.append(entry)
            instances[lineage] = instance

        if any(entry.note == VERIFIED_MISMATCH for entry in entries):
            total = (time.perf_counter() - started) * 1000.0
            return MediationResult(
                status=MediationStatus.ABORTED,
                columns=request.attributes,
                rows=(),
                denials=tuple(
                    (name, INTEGRITY_ABORT) for name in request.attributes
                ),
                verification=tuple(entries),
                timing=Timing(native_ms=0.0, total_ms=total),
                ops=ops,
            )

        # Per-lineage access decisions.  A provider-specific denial withholds
        # that provider's cell; an attribute denied on every lineage is
        # reported in the denial table.
        id_to_name = {
            self._store.catalog.by_name(name).attribute_id: name
            for name in request.attributes
        }
        granted: dict[tuple[int, str], object] = {}
        first_reason: dict[str, str] = {}
        for lineage, entry in zip(lineages, entries):
            name = id_to_name[lineage.attribute_id]
            instance = instances[lineage]
            if instance is None:
                first_reason.setdefault(name, NO_PUBLISHED_POLICY)
                continue
            decision = evaluate_access(
                instance.privacy_tuple.prefs,
                accessor,
                request.requested_purpose,
                now,
            )
            ops.policy_evaluations += 1
            if decision.allowed:
                granted[(lineage.provider_id, name)] = decision.granularity
            else:
                first_reason.setdefault(name, decision.reason.token)

        granted_names = {name for _, name in granted}
        allowed_names = [
            name for name in request.attributes if name in granted_names
        ]
        denials = tuple(
            (name, first_reason[name])
            for name in request.attributes
            if name not in allowed_names
        )

        native_ms = 0.0
        rows: list[ResultRow] = []
        if allowed_names:
            predicate = dict(request.predicate)
            if request.provider_id is not None:
                predicate["provider_id"] = request.provider_id
            select_started = time.perf_counter()
            raw = self._store.select_rows(allowed_names, predicate)
            native_ms = (time.perf_counter() - select_started) * 1000.0
            ops.selects += 1
            for provider_id, values in raw:
                by_name = dict(zip(allowed_names, values))
                cells = []
                for name in request.attributes:
                    mode = granted.get((provider_id, name))
                    if name in by_name and mode is not None:
                        cells.append(apply_granularity(by_name[name], mode))
                    else:
                        cells.append(WITHHELD)
                rows.append(ResultRow(provider_id, tuple(cells)))

        total = (time.perf_counter() - started) * 1000.0
        return MediationResult(
            status=MediationStatus.COMPLETED,
            columns=request.attributes,
            rows=tuple(rows),
            denials=denials,
            verification=tuple(entries),
            timing=Timing(native_ms=native_ms, total_ms=total),
            ops=ops,
        )

    # -- native baseline ----------------------------------------------------

    def native_query(self, request: QueryRequest) -> NativeResult:
        """Direct select with no ledger reads, verification or policy.

        Benchmark baseline only; never exposed to accessors.
        """
        started = time.perf_counter()
        ops = OpCounters()
        predicate = dict(request.predicate)
        if request.provider_id is not None:
            predicate["provider_id"] = request.provider_id
        raw = self._store.select_rows(list(request.attributes), predicate)
        ops.selects += 1
        duration = (time.perf_counter() - started) * 1000.0
        return NativeResult(
            columns=request.attributes,
            rows=tuple(
                ResultRow(provider_id, tuple(values)) for provider_id, values in raw
            ),
            duration_ms=duration,
            ops=ops,
        )


# Re-exported for callers that build lineage streams without a Mediator.
__all__ = [
    "INTEGRITY_ABORT",
    "Lineage",
    "MediationResult",
    "MediationStatus",
    "Mediator",
    "NO_PUBLISHED_POLICY",
    "NativeResult",
    "OpCounters",
    "QueryRequest",
    "ResultRow",
    "Timing",
    "VerificationEntry",
    "WITHHELD",
    "stream_name_for",
]
