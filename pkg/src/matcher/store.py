"""
Buffer of delivered events that no consumer has claimed yet.

Events are queued per (source rank, identifier) in arrival order, which is
the per-pair firing order. Every entry also carries a global arrival number
so that ANY-source consumers take the oldest buffered event across sources.
"""
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Optional

from ..core.models import Event


@dataclass(eq=False)
class BufferedEvent:
    """An event parked in the store."""
    event: Event
    arrival: int
    lineage: int


class PendingEventStore:
    """FIFO queues of unconsumed events keyed by (source_rank, identifier)."""

    def __init__(self):
        self._queues: dict[tuple[int, str], deque[BufferedEvent]] = {}
        self._arrivals = itertools.count()

    def push(self, event: Event, lineage: int) -> BufferedEvent:
        entry = BufferedEvent(event=event, arrival=next(self._arrivals), lineage=lineage)
        key = (event.source_rank, event.identifier)
        self._queues.setdefault(key, deque()).append(entry)
        return entry

    def remove(self, entry: BufferedEvent) -> None:
        key = (entry.event.source_rank, entry.event.identifier)
        queue = self._queues[key]
        if queue and queue[0] is entry:
            queue.popleft()
        else:
            queue.remove(entry)
        if not queue:
            del self._queues[key]

    def snapshot(self) -> list[BufferedEvent]:
        """All buffered entries in arrival order."""
        entries = [entry for queue in self._queues.values() for entry in queue]
        entries.sort(key=lambda entry: entry.arrival)
        return entries

    def queue(self, source_rank: int, identifier: str) -> list[Event]:
        return [entry.event for entry in self._queues.get((source_rank, identifier), ())]

    def count_nonpersistent(self) -> int:
        return sum(
            1 for queue in self._queues.values() for entry in queue
            if not entry.event.persistent
        )

    def first(self, source_rank: int, identifier: str) -> Optional[BufferedEvent]:
        queue = self._queues.get((source_rank, identifier))
        return queue[0] if queue else None

    def __len__(self) -> int:
        return sum(len(queue) for queue in self._queues.values())

    def __iter__(self) -> Iterator[Event]:
        return (entry.event for entry in self.snapshot())

    def clear(self) -> None:
        self._queues.clear()
