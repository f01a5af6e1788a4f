"""Benchmark harness: native versus privacy-aware query timing.

Runs seeded trials of one query archetype both ways against the same
engine and reports mean wall-clock per archetype plus the relative
overhead.  The aggregate row averages the per-archetype percentages
directly; it is never recomputed from the aggregate means, which would
weight archetypes by duration instead of equally.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass
from enum import Enum

from .mediator import MediationStatus, OpCounters, QueryRequest


class BenchError(Exception):
    pass


class ZeroDuration(BenchError):
    """Private mean duration must be positive to express an overhead."""


class EmptyInput(BenchError):
    pass


class Archetype(str, Enum):
    DEMOGRAPHIC = "Demographic"
    HEALTHCARE = "Healthcare"
    CONSENT_WITNESS = "ConsentWitness"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, text: str) -> Archetype:
        try:
            return cls(text)
        except ValueError:
            raise BenchError(f"unknown archetype: {text!r}") from None


# Attribute sets queried by each archetype.
ARCHETYPE_ATTRIBUTES: dict[Archetype, tuple[str, ...]] = {
    Archetype.DEMOGRAPHIC: (
        "street_name",
        "city",
        "province",
        "postal_code",
        "original_province",
        "phone_number",
    ),
    Archetype.HEALTHCARE: (
        "personal_health_number",
        "medical_record_number",
        "chart_number",
        "personal_care_physician_name",
        "dentist_physician_name",
    ),
    Archetype.CONSENT_WITNESS: (
        "witness_last_name",
        "witness_first_name",
        "witness_phone_number",
        "witness_street",
        "witness_city",
        "witness_province",
        "witness_postal_code",
    ),
}

ARCHETYPE_LABELS = {
    Archetype.DEMOGRAPHIC: "Demographic",
    Archetype.HEALTHCARE: "Healthcare",
    Archetype.CONSENT_WITNESS: "Consent Witness",
}

AGGREGATE_LABEL = "All Queries"

DEFAULT_TRIALS = 100


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------


def overhead_percent(native_ms: float, private_ms: float) -> float:
    """Overhead of the private path as a percentage of its own duration,
    rounded to two decimals: 100 * (private - native) / private."""
    if private_ms <= 0:
        raise ZeroDuration("private duration must be positive")
    return round(100.0 * (private_ms - native_ms) / private_ms, 2)


@dataclass(frozen=True)
class ArchetypeRow:
    label: str
    native_ms: float
    private_ms: float
    overhead_ms: float
    overhead_pct: float


def row_from_means(label: str, native_ms: float, private_ms: float) -> ArchetypeRow:
    return ArchetypeRow(
        label=label,
        native_ms=native_ms,
        private_ms=private_ms,
        overhead_ms=private_ms - native_ms,
        overhead_pct=overhead_percent(native_ms, private_ms),
    )


def aggregate(rows) -> ArchetypeRow:
    """Aggregate row over per-archetype rows.

    Means average the per-row means; the percentage averages the per-row
    percentages (mean of percents, not percent of means).
    """
    rows = list(rows)
    if not rows:
        raise EmptyInput("nothing to aggregate")
    return ArchetypeRow(
        label=AGGREGATE_LABEL,
        native_ms=statistics.fmean(r.native_ms for r in rows),
        private_ms=statistics.fmean(r.private_ms for r in rows),
        overhead_ms=statistics.fmean(r.overhead_ms for r in rows),
        overhead_pct=round(statistics.fmean(r.overhead_pct for r in rows), 2),
    )


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[ArchetypeRow, ...]
    aggregate_row: ArchetypeRow


def build_report(rows) -> BenchReport:
    rows = tuple(rows)
    return BenchReport(rows=rows, aggregate_row=aggregate(rows))


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchSpec:
    archetype: Archetype
    trials: int = DEFAULT_TRIALS
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.trials, int) or self.trials < 1:
            raise BenchError("trials must be a positive integer")


@dataclass(frozen=True)
class TrialSample:
    provider_id: int
    native_ms: float
    private_ms: float
    native_ops: OpCounters
    private_ops: OpCounters
    lineages: int


@dataclass(frozen=True)
class ArchetypeResult:
    row: ArchetypeRow
    samples: tuple[TrialSample, ...]


def predicate_sequence(spec: BenchSpec, provider_ids) -> list[int]:
    """Deterministic per-trial provider choices for a spec.

    The same spec over the same provider set always yields the same
    sequence, which is what makes runs reproducible.
    """
    provider_ids = list(provider_ids)
    if not provider_ids:
        raise EmptyInput("no providers to draw predicates from")
    rng = random.Random(f"bench:{spec.seed}:{spec.archetype.token}")
    return [rng.choice(provider_ids) for _ in range(spec.trials)]


def run_bench(
    engine,
    spec: BenchSpec,
    accessor_id: int,
    requested_purpose: str,
    now=None,
) -> ArchetypeResult:
    """Execute trials native and trials mediated runs for one archetype."""
    attributes = ARCHETYPE_ATTRIBUTES[spec.archetype]
    providers = predicate_sequence(spec, engine.store.provider_ids())
    samples = []
    for provider_id in providers:
        request = QueryRequest(
            accessor_id=accessor_id,
            requested_purpose=requested_purpose,
            attributes=attributes,
            provider_id=provider_id,
        )
        native = engine.native_query(request)
        mediated = engine.mediate(request, now=now)
        if mediated.status is not MediationStatus.COMPLETED:
            raise BenchError(
                f"mediation did not complete for provider {provider_id}: "
                f"{mediated.status.value}"
            )
        samples.append(
            TrialSample(
                provider_id=provider_id,
                native_ms=native.duration_ms,
                private_ms=mediated.timing.total_ms,
                native_ops=native.ops,
                private_ops=mediated.ops,
                lineages=len(mediated.verification),
            )
        )
    row = row_from_means(
        ARCHETYPE_LABELS[spec.archetype],
        statistics.fmean(s.native_ms for s in samples),
        statistics.fmean(s.private_ms for s in samples),
    )
    return ArchetypeResult(row=row, samples=tuple(samples))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_report(report: BenchReport) -> str:
    """Fixed-width table with the overhead cell shown as 'X.XX (Y.YY%)'."""
    header = ("Queries", "Native (ms)", "Privacy-Aware (ms)", "Privacy Overhead Cost")
    body = []
    for row in (*report.rows, report.aggregate_row):
        body.append(
            (
                row.label,
                f"{row.native_ms:.2f}",
                f"{row.private_ms:.2f}",
                f"{row.overhead_ms:.2f} ({row.overhead_pct:.2f}%)",
            )
        )
    widths = [
        max(len(header[col]), *(len(line[col]) for line in body))
        for col in range(len(header))
    ]

    def fmt(cells) -> str:
        return " | ".join(
            cell.ljust(widths[col]) if col == 0 else cell.rjust(widths[col])
            for col, cell in enumerate(cells)
        )

    rule = "-+-".join("-" * w for w in widths)
    lines = [fmt(header), rule]
    lines.extend(fmt(line) for line in body[:-1])
    lines.append(rule)
    lines.append(fmt(body[-1]))
    return "\n".join(lines)
