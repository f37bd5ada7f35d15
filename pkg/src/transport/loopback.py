"""
In-process transport: many ranks, one process, one shared hub.

In the default mode a send lands directly in the target's inbox. In
deterministic mode sends are parked per (source, target) pair and moved to
inboxes one at a time by `deterministic_step`, which picks the next pair with
a seeded generator; per-pair FIFO holds because only the head of a pair is
ever moved.
"""
import logging
import random
import threading
from collections import deque
from dataclasses import dataclass
from typing import Optional

from ..core.errors import NothingQueued, TransportClosed
from .base import BaseTransport, TransportFrame

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeliveryAction:
    """One frame moved from a pair queue into its target's inbox."""
    source: int
    target: int
    sequence: int
    identifier: str


class LoopbackHub:
    """
    Shared delivery hub for the ranks of one loopback run.

    Args:
        world_size: Number of ranks
        deterministic_seed: Enables seeded single-step delivery when given
    """

    def __init__(self, world_size: int, deterministic_seed: Optional[int] = None):
        if world_size < 1:
            raise ValueError(f"world_size must be >= 1, got {world_size}")
        self.world_size = world_size
        self.deterministic = deterministic_seed is not None
        self._rng = random.Random(deterministic_seed)
        self._cond = threading.Condition()
        self._inboxes: list[deque] = [deque() for _ in range(world_size)]
        self._pairs: dict[tuple[int, int], deque] = {}
        self._closed: set[int] = set()
        self._failed: set[int] = set()
        self.trace: list[DeliveryAction] = []

    def endpoint(self, rank: int) -> "LoopbackTransport":
        return LoopbackTransport(self, rank)

    def post(self, source: int, target: int, frame: TransportFrame) -> None:
        with self._cond:
            if source in self._closed or source in self._failed:
                raise TransportClosed(f"rank {source} endpoint is closed")
            if target in self._failed:
                raise TransportClosed(f"rank {target} disconnected")
            if self.deterministic:
                self._pairs.setdefault((source, target), deque()).append(frame)
            else:
                self._inboxes[target].append(frame)
            self._cond.notify_all()

    def deterministic_step(self) -> DeliveryAction:
        """
        Deliver exactly one queued frame.

        Raises:
            NothingQueued: no frame is parked in any pair queue
        """
        with self._cond:
            action = self._step()
            self._cond.notify_all()
            return action

    def in_flight(self) -> int:
        with self._cond:
            parked = sum(len(queue) for queue in self._pairs.values())
            return parked + sum(len(inbox) for inbox in self._inboxes)

    def collect(self, rank: int, timeout: float) -> list[TransportFrame]:
        with self._cond:
            self._check_alive(rank)
            if self.deterministic:
                self._try_step()
            if not self._inboxes[rank] and timeout > 0:
                self._cond.wait(timeout)
                self._check_alive(rank)
                if self.deterministic:
                    self._try_step()
            inbox = self._inboxes[rank]
            frames = list(inbox)
            inbox.clear()
            return frames

    def close(self, rank: int) -> None:
        with self._cond:
            self._closed.add(rank)
            self._cond.notify_all()

    def disconnect(self, rank: int) -> None:
        """Simulate rank `rank` vanishing mid-run."""
        with self._cond:
            self._failed.add(rank)
            self._cond.notify_all()
        logger.warning(f"[rank {rank}] loopback endpoint disconnected")

    def _check_alive(self, rank: int) -> None:
        if rank in self._closed:
            raise TransportClosed(f"rank {rank} endpoint is closed")
        lost = sorted(self._failed - {rank})
        if lost:
            raise TransportClosed(f"peer rank {lost[0]} disconnected")

    def _try_step(self) -> None:
        try:
            self._step()
        except NothingQueued:
            pass

    def _step(self) -> DeliveryAction:
        pairs = sorted(key for key, queue in self._pairs.items() if queue)
        if not pairs:
            raise NothingQueued("no frame is waiting for delivery")
        source, target = self._rng.choice(pairs)
        frame = self._pairs[(source, target)].popleft()
        self._inboxes[target].append(frame)
        action = DeliveryAction(source, target, frame.sequence, frame.identifier)
        self.trace.append(action)
        return action


class LoopbackTransport(BaseTransport):
    """One rank's view of a LoopbackHub."""

    KIND = "loopback"

    def __init__(self, hub: LoopbackHub, rank: int):
        super().__init__(rank, hub.world_size)
        self.hub = hub

    def send(self, target: int, frame: TransportFrame) -> None:
        self.check_target(target)
        self.hub.post(self.rank, target, frame)
        self.frames_sent += 1

    def poll(self, timeout: float = 0.0) -> list[TransportFrame]:
        frames = self.hub.collect(self.rank, timeout)
        self.frames_received += len(frames)
        return frames

    def close(self) -> None:
        self.hub.close(self.rank)
