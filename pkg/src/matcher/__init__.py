"""Event matching: outstanding tasks, paused waits and buffered events."""
from .matcher import (
    EventMatcher,
    QuiescenceSnapshot,
    RetrievalMode,
    RetrievalResult,
    WaitRecord,
    choose_slot,
)
from .store import BufferedEvent, PendingEventStore

__all__ = [
    "BufferedEvent",
    "EventMatcher",
    "PendingEventStore",
    "QuiescenceSnapshot",
    "RetrievalMode",
    "RetrievalResult",
    "WaitRecord",
    "choose_slot",
]
