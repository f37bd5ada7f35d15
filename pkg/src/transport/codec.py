"""
Bit-exact frame codec.

Layout (little-endian throughout):

    offset  size  field
    0       2     magic 0xED 0xA7
    2       1     version (1)
    3       1     frame kind (0 event, 1 termination token)
    4       4     source rank, unsigned
    8       8     sequence, unsigned
    16      1     persistent (0/1)
    17      1     payload kind tag
    18      2     identifier length in bytes, unsigned
    20      4     element count, unsigned
    24      ...   identifier (UTF-8), then element_count * width payload bytes

The header alone determines the frame's total length, so frames can be
read back-to-back from a byte stream without extra length prefixes.
"""
import struct
from typing import Union

from ..core.errors import AddressNotSerializable, MalformedFrame
from ..core.models import MAX_IDENTIFIER_BYTES, Event, PayloadKind
from .base import FrameKind, TransportFrame

MAGIC = b"\xed\xa7"
VERSION = 1

_HEADER = struct.Struct("<2sBBIQBBHI")
HEADER_LEN = _HEADER.size  # 24


def encode_frame(item: Union[TransportFrame, Event]) -> bytes:
    """
    Encode a frame (or an event, as an event frame).

    Raises:
        AddressNotSerializable: ADDRESS payloads are process-local
        ValueError: identifier longer than 65535 bytes
    """
    frame = TransportFrame.from_event(item) if isinstance(item, Event) else item
    if frame.payload_kind is PayloadKind.ADDRESS:
        raise AddressNotSerializable(
            f"event {frame.identifier!r} carries a local address and cannot leave the process"
        )
    identifier = frame.identifier.encode("utf-8")
    if len(identifier) > MAX_IDENTIFIER_BYTES:
        raise ValueError(f"identifier of {len(identifier)} bytes exceeds the wire limit")
    expected = frame.element_count * PayloadKind(frame.payload_kind).width
    if len(frame.payload) != expected:
        raise ValueError(f"payload is {len(frame.payload)} bytes, header says {expected}")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        int(frame.frame_kind),
        frame.source_rank,
        frame.sequence,
        1 if frame.persistent else 0,
        int(frame.payload_kind),
        len(identifier),
        frame.element_count,
    )
    return header + identifier + frame.payload


def parse_header(header: bytes) -> tuple[tuple, int]:
    """
    Validate a 24-byte header.

    Returns:
        (unpacked header fields, number of body bytes that follow)
    """
    if len(header) < HEADER_LEN:
        raise MalformedFrame(f"frame shorter than the {HEADER_LEN}-byte header")
    fields = _HEADER.unpack_from(header, 0)
    magic, version, frame_kind, _, _, persistent, kind_tag, id_len, count = fields
    if magic != MAGIC:
        raise MalformedFrame(f"bad magic {magic.hex()}")
    if version != VERSION:
        raise MalformedFrame(f"unsupported version {version}")
    if frame_kind not in (FrameKind.EVENT, FrameKind.TOKEN):
        raise MalformedFrame(f"unknown frame kind {frame_kind}")
    if persistent not in (0, 1):
        raise MalformedFrame(f"persistent flag must be 0 or 1, got {persistent}")
    try:
        kind = PayloadKind(kind_tag)
    except ValueError as exc:
        raise MalformedFrame(f"unknown payload kind {kind_tag}") from exc
    if kind is PayloadKind.ADDRESS:
        raise MalformedFrame("ADDRESS payloads never appear on the wire")
    if kind is PayloadKind.NONE and count:
        raise MalformedFrame("NONE payload with a non-zero element count")
    return fields, id_len + count * kind.width


def decode_frame(data: bytes) -> TransportFrame:
    """
    Decode exactly one frame.

    Raises:
        MalformedFrame: bad magic, unknown version or kind, length mismatch
    """
    fields, body_len = parse_header(data)
    if len(data) != HEADER_LEN + body_len:
        raise MalformedFrame(
            f"frame is {len(data)} bytes, header announces {HEADER_LEN + body_len}"
        )
    _, _, frame_kind, source, sequence, persistent, kind_tag, id_len, count = fields
    try:
        identifier = data[HEADER_LEN:HEADER_LEN + id_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFrame("identifier is not valid UTF-8") from exc
    if frame_kind == FrameKind.EVENT and not identifier:
        raise MalformedFrame("event frame without identifier")
    return TransportFrame(
        frame_kind=FrameKind(frame_kind),
        source_rank=source,
        sequence=sequence,
        identifier=identifier,
        payload_kind=PayloadKind(kind_tag),
        element_count=count,
        payload=bytes(data[HEADER_LEN + id_len:]),
        persistent=bool(persistent),
    )


def encode_event(event: Event) -> bytes:
    return encode_frame(TransportFrame.from_event(event))


def decode_event(data: bytes) -> Event:
    frame = decode_frame(data)
    if frame.frame_kind is not FrameKind.EVENT:
        raise MalformedFrame("expected an event frame")
    return frame.to_event()
