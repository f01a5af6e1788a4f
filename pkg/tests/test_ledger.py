"""Stream ledger: chaining, stream discipline, persistence, verification."""

from __future__ import annotations

import datetime as dt

import pytest

from privledger.ledger import (
    ADMIN_PAYLOAD,
    ROOT_STREAM,
    ZERO_DIGEST,
    DuplicateStream,
    EmptyStream,
    InvalidKey,
    InvalidStreamName,
    Ledger,
    LedgerError,
    NotSubscribed,
    ReservedPayload,
    RootPublishForbidden,
    TickingClock,
    UnknownStream,
    stream_name_for,
    verify_file,
    verify_records,
)


@pytest.fixture
def ledger(tmp_path):
    led = Ledger(tmp_path / "ledger.db", clock=TickingClock(), create=True)
    yield led
    led.close()


def fill(led, stream="stream-4-5-3", items=3):
    led.create_stream(stream)
    led.subscribe(stream)
    out = []
    for i in range(items):
        out.append(led.publish(stream, f"key{i}", f"payload-{i}".encode()))
    return out


# ---------------------------------------------------------------------------
# genesis and naming
# ---------------------------------------------------------------------------


def test_genesis_creates_root_with_zero_prev(ledger):
    assert ledger.chain_length() == 1
    genesis = ledger.item(0)
    assert genesis.stream == ROOT_STREAM
    assert genesis.prev_digest == ZERO_DIGEST
    assert genesis.is_admin
    assert genesis.confirmed
    assert ledger.stream(ROOT_STREAM).item_count == 0


def test_stream_name_for_lineage():
    assert stream_name_for(4, 5, 3) == "stream-4-5-3"
    assert stream_name_for(120, 8, 14) == "stream-120-8-14"
    for bad in ((0, 1, 1), (1, -2, 1), (1, 1, "3")):
        with pytest.raises(InvalidStreamName):
            stream_name_for(*bad)


@pytest.mark.parametrize(
    "name",
    [
        "mystream",
        "stream-4-5",
        "stream-4-5-3-2",
        "stream-0-5-3",
        "stream-04-5-3",
        "stream-4-5-3x",
        "Stream-4-5-3",
        "stream-4-5-",
        "",
    ],
)
def test_create_stream_rejects_bad_grammar(ledger, name):
    with pytest.raises(InvalidStreamName):
        ledger.create_stream(name)


def test_create_stream_appends_admin_item(ledger):
    before = ledger.chain_length()
    stream = ledger.create_stream("stream-4-5-3")
    assert ledger.chain_length() == before + 1
    assert stream.item_count == 0
    admin = ledger.item(before)
    assert admin.is_admin
    assert admin.key == ""
    assert admin.payload == ADMIN_PAYLOAD


def test_duplicate_stream_rejected(ledger):
    ledger.create_stream("stream-4-5-3")
    with pytest.raises(DuplicateStream):
        ledger.create_stream("stream-4-5-3")
    with pytest.raises(DuplicateStream):
        ledger.create_stream(ROOT_STREAM)


# ---------------------------------------------------------------------------
# publishing
# ---------------------------------------------------------------------------


def test_publish_appends_confirmed_items(ledger):
    items = fill(ledger, items=3)
    assert [i.key for i in items] == ["key0", "key1", "key2"]
    assert all(i.confirmed for i in items)
    assert ledger.stream("stream-4-5-3").item_count == 3
    # admin items never count as stream items
    assert ledger.chain_length() == 1 + 1 + 3


def test_publish_to_unknown_stream(ledger):
    with pytest.raises(UnknownStream):
        ledger.publish("stream-9-9-9", "k", b"x")


def test_publish_to_root_forbidden(ledger):
    with pytest.raises(RootPublishForbidden):
        ledger.publish(ROOT_STREAM, "k", b"x")
    assert ledger.stream(ROOT_STREAM).item_count == 0


def test_reserved_payload_rejected(ledger):
    ledger.create_stream("stream-4-5-3")
    with pytest.raises(ReservedPayload):
        ledger.publish("stream-4-5-3", "k", ADMIN_PAYLOAD)


@pytest.mark.parametrize(
    "key",
    ["bad key", "ta\tb", "qu'ote", 'qu"ote', "unié", "k" * 257, None, 7],
)
def test_invalid_keys_rejected(ledger, key):
    ledger.create_stream("stream-4-5-3")
    with pytest.raises(InvalidKey):
        ledger.publish("stream-4-5-3", key, b"x")


def test_long_but_legal_key_accepted(ledger):
    ledger.create_stream("stream-4-5-3")
    item = ledger.publish("stream-4-5-3", "k" * 256, b"x")
    assert item.key == "k" * 256


def test_empty_key_is_a_valid_transaction_key(ledger):
    # Only the reserved payload marks an item administrative.
    ledger.create_stream("stream-4-5-3")
    item = ledger.publish("stream-4-5-3", "", b"x")
    assert not item.is_admin
    assert ledger.stream("stream-4-5-3").item_count == 1


def test_payload_must_be_bytes(ledger):
    ledger.create_stream("stream-4-5-3")
    with pytest.raises(LedgerError):
        ledger.publish("stream-4-5-3", "k", "text")


# ---------------------------------------------------------------------------
# chaining
# ---------------------------------------------------------------------------


def test_items_chain_across_streams(ledger):
    ledger.create_stream("stream-1-1-1")
    ledger.create_stream("stream-2-2-2")
    ledger.publish("stream-1-1-1", "a", b"1")
    ledger.publish("stream-2-2-2", "b", b"2")
    ledger.publish("stream-1-1-1", "c", b"3")
    for seq in range(1, ledger.chain_length()):
        assert ledger.item(seq).prev_digest == ledger.item(seq - 1).item_digest
        assert ledger.item(seq).seq == seq


def test_timestamps_never_decrease(tmp_path):
    moments = iter(
        [
            dt.datetime(2021, 6, 1, 12, 0, 0, tzinfo=dt.timezone.utc),
            dt.datetime(2021, 6, 1, 11, 0, 0, tzinfo=dt.timezone.utc),  # steps back
            dt.datetime(2021, 6, 1, 13, 0, 0, tzinfo=dt.timezone.utc),
        ]
    )
    led = Ledger(tmp_path / "l.db", clock=lambda: next(moments), create=True)
    led.create_stream("stream-1-1-1")
    led.publish("stream-1-1-1", "k", b"x")
    assert led.item(1).timestamp == led.item(0).timestamp
    assert led.item(2).timestamp > led.item(1).timestamp
    led.close()


def test_naive_clock_rejected(tmp_path):
    led = Ledger(tmp_path / "l.db", clock=TickingClock(), create=True)
    led._clock = lambda: dt.datetime(2021, 6, 1, 12, 0, 0)  # no tzinfo
    with pytest.raises(LedgerError):
        led.create_stream("stream-1-1-1")
    led.close()


# ---------------------------------------------------------------------------
# reading
# ---------------------------------------------------------------------------


def test_list_items_requires_subscription(ledger):
    ledger.create_stream("stream-4-5-3")
    ledger.publish("stream-4-5-3", "k", b"x")
    with pytest.raises(NotSubscribed):
        ledger.list_items("stream-4-5-3")
    ledger.subscribe("stream-4-5-3")
    assert len(ledger.list_items("stream-4-5-3")) == 1


def test_list_items_windows(ledger):
    items = fill(ledger, items=5)
    listed = ledger.list_items("stream-4-5-3")
    assert listed == items
    assert ledger.list_items("stream-4-5-3", start=1, count=2) == items[1:3]
    assert ledger.list_items("stream-4-5-3", start=-1, count=1) == [items[-1]]
    assert ledger.list_items("stream-4-5-3", start=-2, count=2) == items[-2:]
    assert ledger.list_items("stream-4-5-3", start=99, count=1) == []
    with pytest.raises(LedgerError):
        ledger.list_items("stream-4-5-3", count=0)


def test_list_items_of_empty_stream(ledger):
    ledger.create_stream("stream-4-5-3")
    ledger.subscribe("stream-4-5-3")
    assert ledger.list_items("stream-4-5-3") == []


def test_latest_item(ledger):
    fill(ledger, items=3)
    assert ledger.latest_item("stream-4-5-3").key == "key2"
    with pytest.raises(UnknownStream):
        ledger.latest_item("stream-8-8-8")
    ledger.create_stream("stream-8-8-8")
    with pytest.raises(EmptyStream):
        ledger.latest_item("stream-8-8-8")


def test_get_by_key(ledger):
    ledger.create_stream("stream-4-5-3")
    ledger.subscribe("stream-4-5-3")
    ledger.publish("stream-4-5-3", "key17", b"v1")
    ledger.publish("stream-4-5-3", "key18", b"v2")
    ledger.publish("stream-4-5-3", "key18", b"v3")
    assert [i.payload for i in ledger.get_by_key("stream-4-5-3", "key18")] == [
        b"v2",
        b"v3",
    ]
    assert ledger.get_by_key("stream-4-5-3", "missing") == []


def test_streams_listing_in_creation_order(ledger):
    ledger.create_stream("stream-2-2-2")
    ledger.create_stream("stream-1-1-1")
    names = [s.name for s in ledger.streams()]
    assert names == [ROOT_STREAM, "stream-2-2-2", "stream-1-1-1"]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def test_reopen_restores_state(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=3)
    led.create_stream("stream-7-7-7")
    digests = [led.item(s).item_digest for s in range(led.chain_length())]
    publisher = led.publisher
    led.close()

    again = Ledger(path, clock=TickingClock())
    assert again.chain_length() == len(digests)
    assert [again.item(s).item_digest for s in range(again.chain_length())] == digests
    assert again.publisher == publisher
    assert again.stream("stream-4-5-3").item_count == 3
    assert again.stream("stream-7-7-7").item_count == 0
    assert not again.stream("stream-4-5-3").subscribed  # subscriptions are per-session
    again.subscribe("stream-4-5-3")
    assert [i.key for i in again.list_items("stream-4-5-3")] == [
        "key0",
        "key1",
        "key2",
    ]
    again.close()


def test_appends_survive_reopen(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=2)
    led.close()
    led = Ledger(path, clock=TickingClock(dt.datetime(2021, 6, 2, tzinfo=dt.timezone.utc)))
    led.publish("stream-4-5-3", "key2", b"payload-2")
    assert led.verify_chain().intact
    led.close()


def test_create_refuses_existing_file(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    led.close()
    with pytest.raises(LedgerError):
        Ledger(path, clock=TickingClock(), create=True)


def test_open_requires_existing_file(tmp_path):
    with pytest.raises(LedgerError):
        Ledger(tmp_path / "absent.db")


def test_file_has_one_line_per_item(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=4)
    lines = path.read_text().splitlines()
    assert len(lines) == led.chain_length()
    assert all(len(line.split("\t")) == 9 for line in lines)
    led.close()


def test_corrupt_file_refuses_to_load(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=2)
    led.close()
    data = path.read_bytes().replace(b"true", b"truE", 1)
    path.write_bytes(data)
    with pytest.raises(LedgerError, match="verification"):
        Ledger(path)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def test_fresh_chain_verifies(ledger):
    fill(ledger, items=3)
    report = ledger.verify_chain()
    assert report.intact
    assert report.first_bad_seq is None
    assert report.records == ledger.chain_length()
    assert report.detail == "chain intact"


def test_payload_mutation_is_reported_at_its_seq(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    items = fill(led, items=3)
    target = items[1]
    data = path.read_bytes().replace(b"payload-1".hex().encode(), b"payload-x".hex().encode())
    path.write_bytes(data)
    report = led.verify_chain()
    assert not report.intact
    assert report.first_bad_seq == target.seq
    assert "digest" in report.detail
    led.close()


def test_prev_link_mutation_detected(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=2)
    lines = path.read_text().splitlines()
    fields = lines[2].split("\t")
    fields[6] = ("0" * 64) if fields[6] != "0" * 64 else ("1" * 64)
    lines[2] = "\t".join(fields)
    path.write_text("\n".join(lines) + "\n")
    report = led.verify_chain()
    assert not report.intact
    assert report.first_bad_seq == 2
    led.close()


def test_deleting_tail_record_is_detected_against_memory(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=3)
    tail_seq = led.chain_length() - 1
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    report = led.verify_chain()
    assert not report.intact
    assert report.first_bad_seq == tail_seq
    assert "tail" in report.detail
    led.close()


def test_truncated_file_alone_still_self_consistent(tmp_path):
    # Without the in-memory chain a clean truncation is undetectable from
    # the file content itself; the live verifier is what catches it.
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=3)
    led.close()
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    assert verify_file(path).intact
    assert not verify_file(path, expected=led._items).intact


def test_out_of_band_append_detected(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=2)
    content = path.read_bytes()
    lines = content.decode().splitlines()
    path.write_bytes(content + (lines[-1] + "\n").encode())
    report = led.verify_chain()
    assert not report.intact
    led.close()


def test_swapping_two_records_detected(tmp_path):
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=3)
    lines = path.read_text().splitlines()
    lines[2], lines[3] = lines[3], lines[2]
    path.write_text("\n".join(lines) + "\n")
    report = led.verify_chain()
    assert not report.intact
    assert report.first_bad_seq == 2
    led.close()


def test_non_canonical_but_equivalent_encoding_rejected(tmp_path):
    # Uppercasing one hex digit keeps the decoded bytes meaningful but
    # breaks the canonical rendering, which verification requires.
    path = tmp_path / "ledger.db"
    led = Ledger(path, clock=TickingClock(), create=True)
    fill(led, items=2)
    data = path.read_bytes()
    idx = data.index(b"payload-0".hex().encode())
    mutated = bytearray(data)
    ch = mutated[idx]
    assert ch in b"abcdef0123456789"
    if chr(ch).isalpha():
        mutated[idx] = ord(chr(ch).upper())
    else:
        idx = data.index(b"a", idx)
        mutated[idx] = ord("A")
    path.write_bytes(bytes(mutated))
    report = led.verify_chain()
    assert not report.intact
    led.close()


def test_verify_records_empty_content():
    report = verify_records(b"")
    assert report.intact
    assert report.records == 0
