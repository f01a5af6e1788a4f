"""Append-only hash-chained ledger with named streams.

A single global chain of items crosses every stream: each item's digest
covers its content plus the previous item's digest, with the genesis
item chained to 32 zero bytes.  Streams are named channels over the
chain; creating one appends an administrative item (empty key, reserved
payload tag) and transaction items are published onto it under an
application-chosen key.

Persistence is one line per item in append order.  The file is the
source of truth; in-memory indexes are rebuilt on open.  Records are
written in a canonical form so that verification can reject any byte
that deviates from what the chain digests committed to.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import re
import secrets
from dataclasses import dataclass
from pathlib import Path


class LedgerError(Exception):
    """Base error for ledger operations."""


class InvalidStreamName(LedgerError):
    pass


class DuplicateStream(LedgerError):
    pass


class UnknownStream(LedgerError):
    pass


class NotSubscribed(LedgerError):
    pass


class InvalidKey(LedgerError):
    pass


class EmptyStream(LedgerError):
    pass


class RootPublishForbidden(LedgerError):
    """The root stream carries no transaction items."""


class ReservedPayload(LedgerError):
    """Payload value is reserved for administrative items."""


# ---------------------------------------------------------------------------
# Naming, keys, timestamps
# ---------------------------------------------------------------------------

ROOT_STREAM = "root"
ZERO_DIGEST = b"\x00" * 32
ADMIN_PAYLOAD = b"!stream-create"
MAX_KEY_LENGTH = 256

_STREAM_NAME_RE = re.compile(r"stream-[1-9][0-9]*-[1-9][0-9]*-[1-9][0-9]*")
_FIELD_RE = re.compile(r"[\x21-\x7e]+")  # printable ASCII, no whitespace
_TS_RE = re.compile(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{3}Z")
_HEX_RE = re.compile(r"(?:[0-9a-f][0-9a-f])*")
_DIGEST_HEX_RE = re.compile(r"[0-9a-f]{64}")
_SEQ_RE = re.compile(r"0|[1-9][0-9]*")


def stream_name_for(provider_id: int, attribute_id: int, accessor_id: int) -> str:
    """Canonical stream name for one (provider, attribute, accessor) lineage."""
    for value in (provider_id, attribute_id, accessor_id):
        if not isinstance(value, int) or value < 1:
            raise InvalidStreamName("lineage ids must be positive integers")
    return f"stream-{provider_id}-{attribute_id}-{accessor_id}"


def _valid_key(key: str) -> bool:
    if not isinstance(key, str) or len(key) > MAX_KEY_LENGTH:
        return False
    return all(0x21 <= ord(ch) <= 0x7E and ch not in "'\"" for ch in key)


def _format_ts(moment: dt.datetime) -> str:
    if moment.tzinfo is None:
        raise LedgerError("ledger timestamps must be timezone-aware")
    moment = moment.astimezone(dt.timezone.utc)
    millis = moment.microsecond // 1000
    return f"{moment:%Y-%m-%dT%H:%M:%S}.{millis:03d}Z"


def _parse_ts(text: str) -> dt.datetime:
    if not _TS_RE.fullmatch(text):
        raise ValueError(f"invalid timestamp: {text!r}")
    base = dt.datetime.strptime(text[:19], "%Y-%m-%dT%H:%M:%S")
    return base.replace(
        microsecond=int(text[20:23], 10) * 1000, tzinfo=dt.timezone.utc
    )


def system_clock() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


class TickingClock:
    """Deterministic clock for tests: fixed start, one millisecond per call."""

    def __init__(self, start: dt.datetime | None = None):
        self._moment = start or dt.datetime(
            2021, 6, 1, 12, 0, 0, tzinfo=dt.timezone.utc
        )

    def __call__(self) -> dt.datetime:
        moment = self._moment
        self._moment = moment + dt.timedelta(milliseconds=1)
        return moment


# ---------------------------------------------------------------------------
# Items and streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StreamItem:
    seq: int
    stream: str
    key: str
    publisher: str
    timestamp: dt.datetime  # UTC, millisecond precision
    payload: bytes
    prev_digest: bytes
    item_digest: bytes
    confirmed: bool

    @property
    def is_admin(self) -> bool:
        return self.key == "" and self.payload == ADMIN_PAYLOAD


@dataclass
class Stream:
    name: str
    created_by: str
    subscribed: bool = False
    item_count: int = 0  # transaction items only


def _item_digest(
    seq: int,
    stream: str,
    key: str,
    publisher: str,
    ts_text: str,
    payload: bytes,
    prev_digest: bytes,
) -> bytes:
    # Length-prefixed field concatenation keeps the input injective.
    h = hashlib.sha256()
    for part in (
        str(seq).encode("ascii"),
        stream.encode("ascii"),
        key.encode("ascii"),
        publisher.encode("ascii"),
        ts_text.encode("ascii"),
        payload,
        prev_digest,
    ):
        h.update(len(part).to_bytes(8, "big"))
        h.update(part)
    return h.digest()


def _render_line(item: StreamItem) -> str:
    return "\t".join(
        (
            str(item.seq),
            item.stream,
            item.key,
            item.publisher,
            _format_ts(item.timestamp),
            item.payload.hex(),
            item.prev_digest.hex(),
            item.item_digest.hex(),
            "true" if item.confirmed else "false",
        )
    )


def _parse_line(line: str) -> StreamItem:
    fields = line.split("\t")
    if len(fields) != 9:
        raise ValueError(f"expected 9 fields, got {len(fields)}")
    seq_text, stream, key, publisher, ts_text, payload_hex, prev_hex, digest_hex, confirmed_text = fields
    if not _SEQ_RE.fullmatch(seq_text):
        raise ValueError(f"invalid seq: {seq_text!r}")
    if stream != ROOT_STREAM and not _STREAM_NAME_RE.fullmatch(stream):
        raise ValueError(f"invalid stream name: {stream!r}")
    if key != "" and not _valid_key(key):
        raise ValueError(f"invalid key: {key!r}")
    if not _FIELD_RE.fullmatch(publisher):
        raise ValueError(f"invalid publisher: {publisher!r}")
    timestamp = _parse_ts(ts_text)
    if not _HEX_RE.fullmatch(payload_hex):
        raise ValueError("payload is not lowercase hex")
    if not _DIGEST_HEX_RE.fullmatch(prev_hex):
        raise ValueError("previous digest is not a 64-char lowercase hex digest")
    if not _DIGEST_HEX_RE.fullmatch(digest_hex):
        raise ValueError("item digest is not a 64-char lowercase hex digest")
    if confirmed_text not in ("true", "false"):
        raise ValueError(f"invalid confirmation flag: {confirmed_text!r}")
    return StreamItem(
        seq=int(seq_text, 10),
        stream=stream,
        key=key,
        publisher=publisher,
        timestamp=timestamp,
        payload=bytes.fromhex(payload_hex),
        prev_digest=bytes.fromhex(prev_hex),
        item_digest=bytes.fromhex(digest_hex),
        confirmed=confirmed_text == "true",
    )


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainReport:
    intact: bool
    first_bad_seq: int | None
    records: int
    detail: str


def verify_records(
    content: bytes, expected: list[StreamItem] | None = None
) -> ChainReport:
    """Walk a persisted chain from genesis and report the first divergence.

    Re-derives every item digest, checks the previous-digest links, the
    sequence numbering, the confirmation flags and the canonical record
    encoding.  When the caller supplies its in-memory chain, the file is
    also required to match it record for record, which catches deletion
    of a self-consistent tail.  Corruption is a report outcome, never an
    exception.
    """
    text = content.decode("utf-8", errors="replace")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    def bad(seq: int, detail: str) -> ChainReport:
        return ChainReport(
            intact=False,
            first_bad_seq=seq,
            records=len(lines),
            detail=f"seq {seq}: {detail}",
        )

    prev = ZERO_DIGEST
    for index, line in enumerate(lines):
        try:
            item = _parse_line(line)
        except ValueError as exc:
            return bad(index, f"unparseable record ({exc})")
        if _render_line(item) != line:
            return bad(index, "non-canonical record encoding")
        if item.seq != index:
            return bad(index, f"sequence discontinuity (record claims {item.seq})")
        if not item.confirmed:
            return bad(index, "unconfirmed item in a confirmed chain")
        if item.prev_digest != prev:
            return bad(index, "previous-digest link mismatch")
        recomputed = _item_digest(
            item.seq,
            item.stream,
            item.key,
            item.publisher,
            _format_ts(item.timestamp),
            item.payload,
            item.prev_digest,
        )
        if recomputed != item.item_digest:
            return bad(index, "item digest mismatch")
        if expected is not None and index < len(expected):
            if expected[index].item_digest != item.item_digest:
                return bad(index, "diverges from the in-memory chain")
        prev = item.item_digest

    if expected is not None:
        if len(lines) < len(expected):
            return bad(len(lines), "missing link at former chain tail")
        if len(lines) > len(expected):
            return bad(len(expected), "records appended out of band")
    return ChainReport(
        intact=True, first_bad_seq=None, records=len(lines), detail="chain intact"
    )


def verify_file(path, expected: list[StreamItem] | None = None) -> ChainReport:
    return verify_records(Path(path).read_bytes(), expected)


# ---------------------------------------------------------------------------
# The ledger
# ---------------------------------------------------------------------------


class Ledger:
    """Single-writer stream ledger over one append-only file."""

    def __init__(self, path, clock=None, publisher: str | None = None, create: bool = False):
        self._path = Path(path)
        self._clock = clock or system_clock
        self._items: list[StreamItem] = []
        self._streams: dict[str, Stream] = {}
        self._stream_tx: dict[str, list[int]] = {}
        self._key_index: dict[tuple[str, str], list[int]] = {}
        self._handle = None
        if create:
            if self._path.exists() and self._path.stat().st_size > 0:
                raise LedgerError(f"ledger already exists at {self._path}")
            self._publisher = publisher or f"node-{secrets.token_hex(8)}"
            self._handle = open(self._path, "a", encoding="ascii", newline="")
            self._register_stream(ROOT_STREAM)
        else:
            if not self._path.exists() or self._path.stat().st_size == 0:
                raise LedgerError(f"no ledger at {self._path}")
            self._load()
            self._publisher = publisher or self._items[0].publisher
            self._handle = open(self._path, "a", encoding="ascii", newline="")

    # -- lifecycle ----------------------------------------------------------

    def close(self):
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def _load(self):
        with open(self._path, "r", encoding="utf-8", newline="") as fh:
            for index, raw in enumerate(fh.read().split("\n")):
                if raw == "":
                    continue
                try:
                    item = _parse_line(raw)
                except ValueError as exc:
                    raise LedgerError(
                        f"corrupt ledger record at position {index}: {exc}; "
                        "run chain verification"
                    ) from None
                if item.seq != len(self._items):
                    raise LedgerError(
                        f"ledger sequence discontinuity at position {index}; "
                        "run chain verification"
                    )
                self._index_item(item)
        if not self._items:
            raise LedgerError(f"no ledger records in {self._path}")
        if ROOT_STREAM not in self._streams:
            raise LedgerError("ledger has no root stream")

    def _index_item(self, item: StreamItem):
        self._items.append(item)
        if item.is_admin:
            self._streams[item.stream] = Stream(
                name=item.stream, created_by=item.publisher
            )
            self._stream_tx.setdefault(item.stream, [])
        else:
            self._stream_tx.setdefault(item.stream, []).append(item.seq)
            stream = self._streams.get(item.stream)
            if stream is not None:
                stream.item_count += 1
            self._key_index.setdefault((item.stream, item.key), []).append(item.seq)

    # -- writing ------------------------------------------------------------

    def _append(self, stream: str, key: str, payload: bytes) -> StreamItem:
        seq = len(self._items)
        prev = self._items[-1].item_digest if self._items else ZERO_DIGEST
        moment = self._clock()
        if moment.tzinfo is None:
            raise LedgerError("clock must produce timezone-aware instants")
        # Truncate to the millisecond grid and keep the chain non-decreasing
        # in time even if the wall clock steps backwards.
        moment = moment.replace(microsecond=(moment.microsecond // 1000) * 1000)
        if self._items and moment < self._items[-1].timestamp:
            moment = self._items[-1].timestamp
        ts_text = _format_ts(moment)
        digest = _item_digest(seq, stream, key, self._publisher, ts_text, payload, prev)
        item = StreamItem(
            seq=seq,
            stream=stream,
            key=key,
            publisher=self._publisher,
            timestamp=_parse_ts(ts_text),
            payload=payload,
            prev_digest=prev,
            item_digest=digest,
            confirmed=True,
        )
        self._handle.write(_render_line(item) + "\n")
        self._handle.flush()
        self._index_item(item)
        return item

    def _register_stream(self, name: str) -> Stream:
        if name in self._streams:
            raise DuplicateStream(f"stream already exists: {name}")
        self._append(name, "", ADMIN_PAYLOAD)
        return self._streams[name]

    def create_stream(self, name: str) -> Stream:
        """Create a named stream by appending its administrative item."""
        if name != ROOT_STREAM and not _STREAM_NAME_RE.fullmatch(name):
            raise InvalidStreamName(
                f"stream name must read stream-<provider>-<attribute>-<accessor>, got {name!r}"
            )
        return self._register_stream(name)

    def publish(self, stream: str, key: str, payload: bytes) -> StreamItem:
        """Append one confirmed transaction item to a stream."""
        target = self._streams.get(stream)
        if target is None:
            raise UnknownStream(f"unknown stream: {stream}")
        if stream == ROOT_STREAM:
            raise RootPublishForbidden("the root stream holds no transaction items")
        if not _valid_key(key):
            raise InvalidKey(
                "keys are at most 256 printable ASCII characters with no "
                "whitespace or quotes"
            )
        if not isinstance(payload, bytes):
            raise LedgerError("payload must be bytes")
        if payload == ADMIN_PAYLOAD:
            raise ReservedPayload("payload value is reserved for stream creation")
        return self._append(stream, key, payload)

    # -- reading ------------------------------------------------------------

    @property
    def publisher(self) -> str:
        return self._publisher

    @property
    def path(self) -> Path:
        return self._path

    def chain_length(self) -> int:
        return len(self._items)

    def has_stream(self, name: str) -> bool:
        return name in self._streams

    def streams(self) -> list[Stream]:
        """All streams in creation order."""
        return list(self._streams.values())

    def stream(self, name: str) -> Stream:
        try:
            return self._streams[name]
        except KeyError:
            raise UnknownStream(f"unknown stream: {name}") from None

    def subscribe(self, name: str) -> Stream:
        stream = self.stream(name)
        stream.subscribed = True
        return stream

    def _require_subscribed(self, name: str) -> Stream:
        stream = self.stream(name)
        if not stream.subscribed:
            raise NotSubscribed(f"not subscribed to stream: {name}")
        return stream

    def list_items(self, name: str, start: int = 0, count: int | None = None) -> list[StreamItem]:
        """Transaction items of a stream in ascending seq order.

        A negative start counts back from the end, so start=-1 with
        count=1 yields the latest item.
        """
        self._require_subscribed(name)
        seqs = self._stream_tx.get(name, [])
        if count is None:
            count = len(seqs)
        elif not isinstance(count, int) or count < 1:
            raise LedgerError("count must be a positive integer")
        if start < 0:
            start = max(0, len(seqs) + start)
        return [self._items[s] for s in seqs[start : start + count]]

    def latest_item(self, name: str) -> StreamItem:
        self.stream(name)
        seqs = self._stream_tx.get(name, [])
        if not seqs:
            raise EmptyStream(f"stream has no items: {name}")
        return self._items[seqs[-1]]

    def get_by_key(self, name: str, key: str) -> list[StreamItem]:
        self._require_subscribed(name)
        return [self._items[s] for s in self._key_index.get((name, key), [])]

    def item(self, seq: int) -> StreamItem:
        try:
            return self._items[seq]
        except IndexError:
            raise LedgerError(f"no item at seq {seq}") from None

    # -- verification -------------------------------------------------------

    def verify_chain(self) -> ChainReport:
        """Verify the persisted file against itself and the in-memory chain."""
        return verify_file(self._path, expected=self._items)
