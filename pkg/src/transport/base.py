"""
Abstract base class for all transports.

All transports must implement:
1. send() - Queue a frame for one target rank, never blocking on the peer
2. poll() - Return frames received since the last poll
3. close() - Release sockets / hub registration

Frames to the same target from one rank are delivered in send order.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

from ..core.errors import UnknownRank
from ..core.models import Event, PayloadKind


class FrameKind(IntEnum):
    EVENT = 0
    TOKEN = 1


@dataclass(frozen=True)
class TransportFrame:
    """One unit on the wire: an event, or a termination token."""
    frame_kind: FrameKind
    source_rank: int
    sequence: int
    identifier: str
    payload_kind: PayloadKind = PayloadKind.NONE
    element_count: int = 0
    payload: bytes = b""
    persistent: bool = False

    @classmethod
    def from_event(cls, event: Event) -> "TransportFrame":
        return cls(
            frame_kind=FrameKind.EVENT,
            source_rank=event.source_rank,
            sequence=event.sequence,
            identifier=event.identifier,
            payload_kind=event.kind,
            element_count=event.element_count,
            payload=event.payload,
            persistent=event.persistent,
        )

    def to_event(self) -> Event:
        return Event(
            source_rank=self.source_rank,
            identifier=self.identifier,
            kind=self.payload_kind,
            element_count=self.element_count,
            payload=self.payload,
            persistent=self.persistent,
            sequence=self.sequence,
        )


class BaseTransport(ABC):
    """Point-to-point frame delivery between the ranks of one run."""

    KIND: str = "base"

    def __init__(self, rank: int, world_size: int):
        self.rank = rank
        self.world_size = world_size
        self.frames_sent = 0
        self.frames_received = 0

    def connect(self) -> None:
        """Establish connections to every peer. No-op by default."""

    @abstractmethod
    def send(self, target: int, frame: TransportFrame) -> None:
        """
        Queue `frame` for delivery to `target`.

        Raises:
            UnknownRank: target outside 0..world_size-1
            TransportClosed: transport or peer no longer usable
        """
        pass

    @abstractmethod
    def poll(self, timeout: float = 0.0) -> list[TransportFrame]:
        """
        Return the frames received since the last poll.

        Waits at most `timeout` seconds when nothing has arrived yet.

        Raises:
            TransportClosed: a peer vanished outside an orderly shutdown
        """
        pass

    def begin_shutdown(self) -> None:
        """Peers are about to close; stop treating disconnects as failures."""

    @abstractmethod
    def close(self) -> None:
        pass

    def check_target(self, target: int) -> None:
        if not isinstance(target, int) or not 0 <= target < self.world_size:
            raise UnknownRank(f"rank {target} outside world of {self.world_size}")

    def describe(self) -> Optional[str]:
        return f"{self.KIND} rank {self.rank}/{self.world_size}"
