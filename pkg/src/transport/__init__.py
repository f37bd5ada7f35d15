from .base import BaseTransport, FrameKind, TransportFrame
from .codec import HEADER_LEN, decode_event, decode_frame, encode_event, encode_frame
from .loopback import DeliveryAction, LoopbackHub, LoopbackTransport
from .roster import RankRoster, RosterEntry, load_roster, localhost_roster, parse_roster, write_roster
from .tcp import TcpTransport

__all__ = [
    "BaseTransport",
    "FrameKind",
    "TransportFrame",
    "HEADER_LEN",
    "encode_frame",
    "decode_frame",
    "encode_event",
    "decode_event",
    "DeliveryAction",
    "LoopbackHub",
    "LoopbackTransport",
    "RankRoster",
    "RosterEntry",
    "load_roster",
    "localhost_roster",
    "parse_roster",
    "write_roster",
    "TcpTransport",
]
