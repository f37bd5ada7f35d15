"""
Tests for the transport layer.

Tests cover:
- Frame codec: layout, round trips, malformed input
- Roster parsing
- Loopback delivery, deterministic stepping and disconnects
- TCP mesh on localhost: ordering, large payloads, peer loss
"""
import random
import struct
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from src.core import Event, PayloadKind, pack_payload
from src.core.errors import (
    AddressNotSerializable,
    MalformedFrame,
    NothingQueued,
    RosterInvalid,
    TransportClosed,
    UnknownRank,
)
from src.transport import (
    FrameKind,
    LoopbackHub,
    TcpTransport,
    TransportFrame,
    load_roster,
    localhost_roster,
    parse_roster,
    write_roster,
)
from src.transport.codec import HEADER_LEN, MAGIC, decode_event, decode_frame, encode_event, encode_frame


def int_event(value: int, identifier: str = "x", source: int = 0, sequence: int = 0) -> Event:
    payload, count, _ = pack_payload([value], PayloadKind.INT)
    return Event(source, identifier, PayloadKind.INT, count, payload, sequence=sequence)


def frame(source: int, sequence: int, identifier: str = "e") -> TransportFrame:
    return TransportFrame.from_event(Event(source, identifier, sequence=sequence))


def random_event(rng: random.Random) -> Event:
    kind = rng.choice([k for k in PayloadKind if k is not PayloadKind.ADDRESS])
    count = 0 if kind is PayloadKind.NONE else rng.randint(0, 16)
    if kind in (PayloadKind.FLOAT, PayloadKind.DOUBLE):
        data = [rng.uniform(-1e6, 1e6) for _ in range(count)]
    elif kind is PayloadKind.BOOL:
        data = [rng.random() < 0.5 for _ in range(count)]
    elif kind is PayloadKind.BYTE:
        data = [rng.randrange(256) for _ in range(count)]
    else:
        data = [rng.randrange(-2**31, 2**31) for _ in range(count)]
    payload, count, _ = pack_payload(data if kind is not PayloadKind.NONE else None, kind, count)
    identifier = "".join(rng.choice("abcXYZ_é→") for _ in range(rng.randint(1, 12)))
    return Event(
        source_rank=rng.randrange(1024),
        identifier=identifier,
        kind=kind,
        element_count=count,
        payload=payload,
        persistent=rng.random() < 0.3,
        sequence=rng.randrange(2**40),
    )


class TestCodec:
    """Tests for encode_frame / decode_frame."""

    def test_int_event_layout(self):
        """Test a one-character Int event is header + 1 + 4 bytes."""
        data = encode_event(int_event(33))
        assert HEADER_LEN == 24
        assert len(data) == 29
        assert data[:2] == MAGIC == b"\xed\xa7"
        assert data[2] == 1 and data[3] == 0
        assert data[24:25] == b"x"
        assert struct.unpack("<i", data[25:])[0] == 33

    def test_header_fields_little_endian(self):
        """Test source, sequence, kind and counts sit at their offsets."""
        event = Event(7, "id", PayloadKind.LONG, 2, b"\x00" * 16, True, 258)
        data = encode_event(event)
        source, sequence, persistent, kind, id_len, count = struct.unpack_from("<IQBBHI", data, 4)
        assert (source, sequence, persistent, kind, id_len, count) == (7, 258, 1, 4, 2, 2)

    def test_none_event_has_empty_payload(self):
        """Test NONE events end right after the identifier."""
        data = encode_event(Event(0, "abc"))
        assert len(data) == HEADER_LEN + 3

    def test_round_trip_random_events(self):
        """Test 1000 random events decode field-equal and re-encode byte-identical."""
        rng = random.Random(1)
        for _ in range(1000):
            event = random_event(rng)
            data = encode_event(event)
            decoded = decode_event(data)
            assert decoded == event
            assert encode_event(decoded) == data

    def test_address_rejected(self):
        """Test ADDRESS payloads never encode."""
        payload, count, ref = pack_payload(object(), PayloadKind.ADDRESS)
        event = Event(0, "x", PayloadKind.ADDRESS, count, payload, ref=ref)
        with pytest.raises(AddressNotSerializable):
            encode_event(event)

    def test_truncated(self):
        """Test a cut-off buffer is rejected."""
        data = encode_event(int_event(1))
        with pytest.raises(MalformedFrame):
            decode_frame(data[:-1])
        with pytest.raises(MalformedFrame):
            decode_frame(data[:10])

    def test_bad_magic_and_version(self):
        """Test magic and version are checked."""
        data = bytearray(encode_event(int_event(1)))
        bad_magic = bytes(b"\x00\x00" + data[2:])
        with pytest.raises(MalformedFrame):
            decode_frame(bad_magic)
        data[2] = 9
        with pytest.raises(MalformedFrame):
            decode_frame(bytes(data))

    def test_unknown_payload_kind(self):
        """Test an out-of-range kind tag is rejected."""
        data = bytearray(encode_event(int_event(1)))
        data[17] = 42
        with pytest.raises(MalformedFrame):
            decode_frame(bytes(data))

    def test_trailing_bytes(self):
        """Test extra bytes after the announced body are rejected."""
        with pytest.raises(MalformedFrame):
            decode_frame(encode_event(int_event(1)) + b"\x00")

    def test_token_frame_round_trip(self):
        """Test token frames may carry an empty identifier."""
        token = TransportFrame(FrameKind.TOKEN, 3, 5, "", PayloadKind.LONG, 4, b"\x01" * 32)
        assert decode_frame(encode_frame(token)) == token

    def test_oversized_identifier_rejected(self):
        """Test frames built without an Event still respect the identifier limit."""
        token = TransportFrame(FrameKind.TOKEN, 0, 0, "t" * 70000)
        with pytest.raises(ValueError, match="wire limit"):
            encode_frame(token)


class TestRoster:
    """Tests for roster parsing and files."""

    def test_parse_with_comments(self):
        """Test blank lines and comments are skipped and entries sorted."""
        roster = parse_roster("# ranks\n1 127.0.0.1 9001\n\n0 127.0.0.1 9000\n", 1)
        assert roster.world_size == 2
        assert roster.address(0) == ("127.0.0.1", 9000)
        assert roster.me.port == 9001

    def test_gap_rejected(self):
        """Test ranks must be exactly 0..P-1."""
        with pytest.raises(RosterInvalid):
            parse_roster("0 h 1\n2 h 2\n", 0)

    def test_malformed_line(self):
        """Test lines need three fields."""
        with pytest.raises(RosterInvalid):
            parse_roster("0 h\n", 0)

    def test_self_rank_must_exist(self):
        """Test self_rank outside the roster is rejected."""
        with pytest.raises(RosterInvalid):
            parse_roster("0 h 1\n", 3)

    def test_missing_file(self, tmp_path):
        """Test an unreadable roster raises RosterInvalid."""
        with pytest.raises(RosterInvalid):
            load_roster(tmp_path / "missing.txt", 0)

    def test_write_and_load(self, tmp_path):
        """Test a written roster loads back."""
        roster = localhost_roster(3)
        path = write_roster(tmp_path / "roster.txt", roster)
        loaded = load_roster(path, 2)
        assert loaded.entries == roster.entries
        assert loaded.self_rank == 2


class TestLoopback:
    """Tests for the loopback hub."""

    def test_in_order_delivery(self):
        """Test three frames to rank 1 arrive in send order."""
        hub = LoopbackHub(2)
        sender, receiver = hub.endpoint(0), hub.endpoint(1)
        for seq in range(3):
            sender.send(1, frame(0, seq))
        assert [f.sequence for f in receiver.poll()] == [0, 1, 2]
        assert receiver.poll() == []

    def test_unknown_rank(self):
        """Test sending beyond the world raises UnknownRank."""
        hub = LoopbackHub(2)
        with pytest.raises(UnknownRank):
            hub.endpoint(0).send(2, frame(0, 0))

    def test_deterministic_step_is_reproducible(self):
        """Test the same seed and sends give the same delivery trace."""
        def trace(seed):
            hub = LoopbackHub(3, deterministic_seed=seed)
            for source in range(3):
                for seq in range(5):
                    hub.post(source, (source + seq) % 3, frame(source, seq))
            return [hub.deterministic_step() for _ in range(15)]

        assert trace(7) == trace(7)
        assert any(trace(seed) != trace(7) for seed in range(8, 16))

    def test_deterministic_step_keeps_pair_fifo(self):
        """Test 10000 random steps never reorder a (source, target) pair."""
        hub = LoopbackHub(4, deterministic_seed=3)
        rng = random.Random(3)
        next_seq = {}
        for _ in range(10000):
            source, target = rng.randrange(4), rng.randrange(4)
            seq = next_seq.get((source, target), 0)
            next_seq[(source, target)] = seq + 1
            hub.post(source, target, frame(source, seq))
        seen = {}
        for _ in range(10000):
            action = hub.deterministic_step()
            key = (action.source, action.target)
            assert action.sequence == seen.get(key, 0)
            seen[key] = action.sequence + 1

    def test_nothing_queued(self):
        """Test stepping an empty hub raises NothingQueued."""
        with pytest.raises(NothingQueued):
            LoopbackHub(2, deterministic_seed=1).deterministic_step()

    def test_collect_steps_once(self):
        """Test a deterministic poll moves at most one frame."""
        hub = LoopbackHub(2, deterministic_seed=0)
        for seq in range(3):
            hub.post(0, 1, frame(0, seq))
        assert len(hub.endpoint(1).poll()) == 1
        assert hub.in_flight() == 2

    def test_disconnect(self):
        """Test a vanished peer surfaces as TransportClosed."""
        hub = LoopbackHub(2)
        survivor = hub.endpoint(0)
        hub.disconnect(1)
        with pytest.raises(TransportClosed):
            survivor.poll()
        with pytest.raises(TransportClosed):
            survivor.send(1, frame(0, 0))


@pytest.fixture
def tcp_pair():
    roster = localhost_roster(2)
    transports = [TcpTransport(roster.for_rank(rank), connect_timeout=5.0) for rank in range(2)]
    with ThreadPoolExecutor(max_workers=2) as executor:
        list(executor.map(lambda t: t.connect(), transports))
    yield transports
    for transport in transports:
        transport.close()


def poll_until(transport, count, timeout=10.0):
    frames = []
    deadline = time.monotonic() + timeout
    while len(frames) < count and time.monotonic() < deadline:
        frames.extend(transport.poll(0.01))
    return frames


class TestTcp:
    """Tests for the TCP mesh on localhost."""

    def test_ordered_both_directions(self, tcp_pair):
        """Test frames arrive in order in both directions."""
        a, b = tcp_pair
        for seq in range(50):
            a.send(1, frame(0, seq))
            b.send(0, frame(1, seq))
        assert [f.sequence for f in poll_until(b, 50)] == list(range(50))
        assert [f.sequence for f in poll_until(a, 50)] == list(range(50))

    def test_megabyte_payload(self, tcp_pair):
        """Test a 1 MB payload arrives byte-identical."""
        a, b = tcp_pair
        data = np.random.default_rng(0).integers(0, 256, size=1 << 20, dtype=np.uint8)
        event = Event(0, "big", PayloadKind.BYTE, len(data), data.tobytes(), sequence=0)
        a.send(1, TransportFrame.from_event(event))
        (received,) = poll_until(b, 1)
        assert received.to_event() == event

    def test_send_to_self(self, tcp_pair):
        """Test a rank can address itself."""
        a, _ = tcp_pair
        a.send(0, frame(0, 0))
        assert len(poll_until(a, 1)) == 1

    def test_peer_loss(self, tcp_pair):
        """Test closing one side makes the other's poll raise."""
        a, b = tcp_pair
        b.close()
        with pytest.raises(TransportClosed):
            deadline = time.monotonic() + 5
            while time.monotonic() < deadline:
                a.poll(0.01)

    def test_unknown_rank(self, tcp_pair):
        """Test sending beyond the roster raises UnknownRank."""
        with pytest.raises(UnknownRank):
            tcp_pair[0].send(5, frame(0, 0))
