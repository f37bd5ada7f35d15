"""
Per-rank event matcher.

Holds the outstanding task descriptors, their partially filled instances,
paused-task waits, and the store of unconsumed events, and decides which
consumer receives each arriving event.

Matching rules:
- Consumers are scanned in precedence order. A task's precedence is its
  submission index; a wait takes the next index at the moment it pauses,
  so both share one total order.
- Within one consumer the lowest-index free slot whose dependency names the
  event's exact source wins; otherwise the lowest-index free ANY slot.
- Instances of one persistent descriptor are filled oldest-first; a new
  instance is created only when none of the existing ones has the slot free.
- A consumed persistent event is copied back into the store. Copies are
  offered to consumers once the operation that consumed them has settled.
  Within one operation a persistent descriptor consumes a given persistent
  event (or its copies) at most once, and is passed over otherwise.
- Events nobody wants are buffered indefinitely.
"""
import itertools
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Union

from ..core.errors import DuplicatePersistentName, ZeroDependencyPersistent
from ..core.models import (
    DependencyDescriptor,
    Event,
    RankKind,
    TaskDescriptor,
    TaskInstance,
    TaskState,
)
from .store import BufferedEvent, PendingEventStore

logger = logging.getLogger(__name__)


class RetrievalMode(Enum):
    CONSUME_ALL_OR_NOTHING = "all_or_nothing"
    CONSUME_AVAILABLE = "available"


@dataclass
class RetrievalResult:
    """Outcome of a retrieval: slots in dependency order, None where unfilled."""
    events: list
    filled: int
    satisfied: bool


class QuiescenceSnapshot(NamedTuple):
    outstanding_transient: int
    unconsumed_nonpersistent_events: int
    filling_instances_transient: int


@dataclass(eq=False)
class WaitRecord:
    """A paused task waiting inside the matcher for its wait dependencies."""
    owner: Optional[TaskInstance]
    dependencies: tuple
    precedence: int
    slots: list = field(default_factory=list)

    def __post_init__(self):
        if not self.slots:
            self.slots = [None] * len(self.dependencies)

    @property
    def is_complete(self) -> bool:
        return all(slot is not None for slot in self.slots)


@dataclass(eq=False)
class _TransientEntry:
    instance: TaskInstance

    @property
    def precedence(self) -> int:
        return self.instance.descriptor.submission_index


@dataclass(eq=False)
class _PersistentEntry:
    descriptor: TaskDescriptor
    instances: list = field(default_factory=list)

    @property
    def precedence(self) -> int:
        return self.descriptor.submission_index

    def wants(self, event: Event) -> bool:
        return any(dep.matches(event) for dep in self.descriptor.dependencies)


_Entry = Union[_TransientEntry, _PersistentEntry, WaitRecord]


@dataclass
class _Operation:
    """Book-keeping for one public matcher call."""
    ready: list = field(default_factory=list)
    copies: deque = field(default_factory=deque)
    guard: set = field(default_factory=set)


def choose_slot(dependencies: tuple, slots: list, event: Event) -> Optional[int]:
    """Exact-source slot first, otherwise the lowest free ANY slot."""
    fallback = None
    for index, dep in enumerate(dependencies):
        if slots[index] is not None or dep.identifier != event.identifier:
            continue
        if dep.source.kind is RankKind.CONCRETE and dep.source.rank == event.source_rank:
            return index
        if fallback is None and dep.source.kind is RankKind.ANY:
            fallback = index
    return fallback


class EventMatcher:
    """
    Serialized matching state machine for one rank.

    All public methods take an internal lock; callers may be concurrent.
    """

    def __init__(self, rank: int = 0):
        self.rank = rank
        self._lock = threading.RLock()
        self._store = PendingEventStore()
        self._entries: list[_Entry] = []
        self._named: dict[str, _PersistentEntry] = {}
        self._precedence = itertools.count()
        self._instance_ids = itertools.count()
        self._lineages = itertools.count()
        self.consumed_nonpersistent = 0
        self.delivered = 0

    # --- registration ------------------------------------------------------

    def next_submission_index(self) -> int:
        """Reserve the next slot in the precedence order."""
        with self._lock:
            return next(self._precedence)

    def register_task(self, descriptor: TaskDescriptor) -> list[TaskInstance]:
        """
        Register a task descriptor and fill it from buffered events.

        Args:
            descriptor: Descriptor with SELF/ALL dependencies already expanded

        Returns:
            Instances that became Ready, in the order they did

        Raises:
            ZeroDependencyPersistent: persistent descriptor without dependencies
            DuplicatePersistentName: name already used by a live persistent task
        """
        with self._lock:
            if descriptor.persistent:
                if not descriptor.dependencies:
                    raise ZeroDependencyPersistent(
                        f"persistent task {descriptor.label!r} has no dependencies"
                    )
                if descriptor.name is not None and descriptor.name in self._named:
                    raise DuplicatePersistentName(
                        f"persistent task {descriptor.name!r} is already registered"
                    )

            op = _Operation()
            if descriptor.persistent:
                entry = _PersistentEntry(descriptor)
                self._sweep_persistent(op, entry)
                self._insert(entry)
                if descriptor.name is not None:
                    self._named[descriptor.name] = entry
            else:
                instance = self._new_instance(descriptor)
                if instance.is_complete:
                    self._mark_ready(op, instance)
                else:
                    self._sweep_slots(op, descriptor.dependencies, instance.slots, None)
                    if instance.is_complete:
                        self._mark_ready(op, instance)
                    else:
                        self._insert(_TransientEntry(instance))
            self._settle(op)
            logger.debug(
                f"[rank {self.rank}] registered {descriptor.label} "
                f"(index {descriptor.submission_index}), {len(op.ready)} ready"
            )
            return op.ready

    def register_wait(
        self, owner: Optional[TaskInstance], dependencies: Iterable[DependencyDescriptor]
    ) -> tuple[WaitRecord, list[TaskInstance]]:
        """
        Register a paused-task wait at the current precedence position.

        The wait immediately takes whatever buffered events match it, including
        copies of persistent events it consumed itself. A record completed
        here is returned complete and not kept; its owner is left out of the
        returned instances so the caller continues inline.

        Returns:
            (the wait record, other instances that became Ready)
        """
        with self._lock:
            op = _Operation()
            record = WaitRecord(owner, tuple(dependencies), next(self._precedence))
            self._sweep_slots(op, record.dependencies, record.slots, None)
            if not record.is_complete:
                self._insert(record)
            self._settle(op)
            if record.is_complete and record.owner is not None:
                record.owner.pending_wait = None
                op.ready = [i for i in op.ready if i is not record.owner]
            return record, op.ready

    def cancel_wait(self, record: WaitRecord) -> None:
        with self._lock:
            if record in self._entries:
                self._entries.remove(record)

    # --- delivery ----------------------------------------------------------

    def deliver_event(self, event: Event) -> list[TaskInstance]:
        """
        Hand an arriving event to the highest-precedence consumer.

        Returns:
            Instances that became Ready, including paused owners whose wait
            was completed (those are left in state PAUSED)
        """
        with self._lock:
            self.delivered += 1
            op = _Operation()
            if not self._offer(op, event, next(self._lineages)):
                logger.debug(
                    f"[rank {self.rank}] buffered {event.identifier!r} "
                    f"from {event.source_rank} seq {event.sequence}"
                )
            self._settle(op)
            return op.ready

    def retrieve_matching(
        self, dependencies: Iterable[DependencyDescriptor], mode: RetrievalMode
    ) -> RetrievalResult:
        """
        Take buffered events for a list of dependencies.

        CONSUME_AVAILABLE fills whatever it can. CONSUME_ALL_OR_NOTHING only
        consumes when every slot can be filled and otherwise leaves the store
        untouched.
        """
        deps = tuple(dependencies)
        with self._lock:
            slots: list = [None] * len(deps)
            taken: list[BufferedEvent] = []
            for buffered in self._store.snapshot():
                index = choose_slot(deps, slots, buffered.event)
                if index is not None:
                    slots[index] = buffered.event
                    taken.append(buffered)
            filled = len(taken)
            satisfied = filled == len(deps)
            if mode is RetrievalMode.CONSUME_ALL_OR_NOTHING and not satisfied:
                return RetrievalResult([None] * len(deps), 0, False)

            op = _Operation()
            for buffered in taken:
                self._store.remove(buffered)
                self._consumed(op, buffered.event, buffered.lineage, None)
            self._settle(op)
            return RetrievalResult(slots, filled, satisfied)

    # --- persistent task management ----------------------------------------

    def remove_persistent_task(self, name: str) -> bool:
        """
        Stop a named persistent task from arming again.

        Filling instances are discarded together with the events they hold;
        instances that are already Ready or Running are unaffected.
        """
        with self._lock:
            entry = self._named.pop(name, None)
            if entry is None:
                return False
            self._entries.remove(entry)
            for instance in entry.instances:
                instance.state = TaskState.DONE
            logger.debug(
                f"[rank {self.rank}] removed persistent task {name!r}, "
                f"discarded {len(entry.instances)} filling instance(s)"
            )
            return True

    def has_persistent_task(self, name: str) -> bool:
        with self._lock:
            return name in self._named

    # --- introspection -----------------------------------------------------

    def quiescence_snapshot(self) -> QuiescenceSnapshot:
        """Counts that block termination; persistent tasks and events are excluded."""
        with self._lock:
            transient = [e for e in self._entries if isinstance(e, _TransientEntry)]
            filling = sum(1 for e in transient if e.instance.state is TaskState.FILLING)
            return QuiescenceSnapshot(len(transient), self._store.count_nonpersistent(), filling)

    def buffered_events(self) -> list[Event]:
        with self._lock:
            return list(self._store)

    def filling_instances(self) -> list[TaskInstance]:
        with self._lock:
            instances = []
            for entry in self._entries:
                if isinstance(entry, _TransientEntry):
                    instances.append(entry.instance)
                elif isinstance(entry, _PersistentEntry):
                    instances.extend(entry.instances)
            return instances

    def pending_waits(self) -> int:
        with self._lock:
            return sum(1 for e in self._entries if isinstance(e, WaitRecord))

    def clear(self) -> None:
        """Drop every descriptor, wait and buffered event (used at shutdown)."""
        with self._lock:
            self._entries.clear()
            self._named.clear()
            self._store.clear()

    # --- internals ---------------------------------------------------------

    def _insert(self, entry: _Entry) -> None:
        self._entries.append(entry)
        self._entries.sort(key=lambda e: e.precedence)

    def _new_instance(self, descriptor: TaskDescriptor) -> TaskInstance:
        return TaskInstance(descriptor=descriptor, instance_id=next(self._instance_ids))

    def _mark_ready(self, op: _Operation, instance: TaskInstance) -> None:
        instance.state = TaskState.READY
        op.ready.append(instance)

    def _consumed(self, op: _Operation, event: Event, lineage: int, guard_key) -> None:
        if event.persistent:
            op.copies.append((event, lineage))
            if guard_key is not None:
                op.guard.add((lineage, guard_key))
        else:
            self.consumed_nonpersistent += 1

    def _offer(self, op: _Operation, event: Event, lineage: int) -> bool:
        """Give `event` to the first willing consumer, else buffer it."""
        for entry in list(self._entries):
            if isinstance(entry, _PersistentEntry):
                if event.persistent and (lineage, entry.precedence) in op.guard:
                    continue
                if not entry.wants(event):
                    continue
                self._fill_persistent(op, entry, event, lineage)
                self._sweep_persistent(op, entry)
                return True

            if isinstance(entry, _TransientEntry):
                deps, slots = entry.instance.descriptor.dependencies, entry.instance.slots
            else:
                deps, slots = entry.dependencies, entry.slots
            index = choose_slot(deps, slots, event)
            if index is None:
                continue
            slots[index] = event
            self._consumed(op, event, lineage, None)
            if all(slot is not None for slot in slots):
                self._entries.remove(entry)
                self._complete(op, entry)
            return True

        self._store.push(event, lineage)
        return False

    def _complete(self, op: _Operation, entry: _Entry) -> None:
        if isinstance(entry, _TransientEntry):
            self._mark_ready(op, entry.instance)
        else:
            owner = entry.owner
            if owner is not None:
                owner.pending_wait = entry
                op.ready.append(owner)

    def _fill_persistent(
        self, op: _Operation, entry: _PersistentEntry, event: Event, lineage: int
    ) -> None:
        deps = entry.descriptor.dependencies
        target = None
        for instance in entry.instances:
            index = choose_slot(deps, instance.slots, event)
            if index is not None:
                target = instance
                break
        if target is None:
            target = self._new_instance(entry.descriptor)
            entry.instances.append(target)
            index = choose_slot(deps, target.slots, event)
        target.slots[index] = event
        self._consumed(op, event, lineage, entry.precedence)
        if target.is_complete:
            entry.instances.remove(target)
            self._mark_ready(op, target)

    def _sweep_persistent(self, op: _Operation, entry: _PersistentEntry) -> None:
        for buffered in self._store.snapshot():
            event = buffered.event
            if event.persistent and (buffered.lineage, entry.precedence) in op.guard:
                continue
            if not entry.wants(event):
                continue
            self._store.remove(buffered)
            self._fill_persistent(op, entry, event, buffered.lineage)

    def _sweep_slots(self, op: _Operation, deps: tuple, slots: list, guard_key) -> None:
        for buffered in self._store.snapshot():
            index = choose_slot(deps, slots, buffered.event)
            if index is None:
                continue
            self._store.remove(buffered)
            slots[index] = buffered.event
            self._consumed(op, buffered.event, buffered.lineage, guard_key)

    def _settle(self, op: _Operation) -> None:
        """Offer persistent-event copies until nothing more changes hands."""
        while op.copies:
            event, lineage = op.copies.popleft()
            self._offer(op, event, lineage)
