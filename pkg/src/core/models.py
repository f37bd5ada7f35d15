"""
Domain types shared by every layer of the runtime.

RankSpec, Event, DependencyDescriptor and TaskDescriptor are frozen after
construction and safe to pass between threads. TaskInstance is the one
mutable type: its slots are filled by the matcher and its state is driven
by the scheduler.
"""
import threading
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Callable, Iterable, Optional, Union

from .errors import AnyNotResolvable, ConcreteOutOfRange

# identifiers travel with a 16-bit length
MAX_IDENTIFIER_BYTES = 0xFFFF


class RankKind(Enum):
    """How a RankSpec names its rank(s)."""
    CONCRETE = "concrete"
    SELF = "self"
    ANY = "any"
    ALL = "all"


@dataclass(frozen=True)
class RankSpec:
    """A concrete rank, or one of the SELF / ANY / ALL wildcards."""
    kind: RankKind
    rank: Optional[int] = None

    def __post_init__(self):
        if self.kind is RankKind.CONCRETE:
            if self.rank is None or self.rank < 0:
                raise ConcreteOutOfRange(f"concrete rank must be >= 0, got {self.rank}")
        elif self.rank is not None:
            raise ValueError(f"{self.kind.value} rank spec takes no rank number")

    @classmethod
    def concrete(cls, rank: int) -> "RankSpec":
        return cls(RankKind.CONCRETE, int(rank))

    @property
    def is_concrete(self) -> bool:
        return self.kind is RankKind.CONCRETE

    def __str__(self) -> str:
        if self.kind is RankKind.CONCRETE:
            return str(self.rank)
        return self.kind.value.upper()


SELF = RankSpec(RankKind.SELF)
ANY = RankSpec(RankKind.ANY)
ALL = RankSpec(RankKind.ALL)

RankLike = Union[int, RankSpec]


def as_rank_spec(value: RankLike) -> RankSpec:
    """Accept a plain integer wherever a RankSpec is expected."""
    if isinstance(value, RankSpec):
        return value
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(f"expected a rank number or RankSpec, got {value!r}")
    return RankSpec.concrete(value)


def resolve_rank(spec: RankLike, local_rank: int, world_size: int) -> list[int]:
    """
    Resolve a rank spec into the concrete ranks it targets.

    Args:
        spec: Target rank or wildcard
        local_rank: Rank of the caller
        world_size: Number of ranks in the run

    Returns:
        List of concrete ranks, ascending for ALL

    Raises:
        ConcreteOutOfRange: concrete rank >= world_size
        AnyNotResolvable: ANY has no concrete meaning as a target
    """
    if world_size < 1:
        raise ValueError(f"world_size must be >= 1, got {world_size}")
    if not 0 <= local_rank < world_size:
        raise ConcreteOutOfRange(f"local rank {local_rank} outside world of {world_size}")

    spec = as_rank_spec(spec)
    if spec.kind is RankKind.CONCRETE:
        if spec.rank >= world_size:
            raise ConcreteOutOfRange(f"rank {spec.rank} outside world of {world_size}")
        return [spec.rank]
    if spec.kind is RankKind.SELF:
        return [local_rank]
    if spec.kind is RankKind.ALL:
        return list(range(world_size))
    raise AnyNotResolvable("ANY only matches incoming events and cannot be resolved to ranks")


class PayloadKind(IntEnum):
    """Element type of an event payload; values are the wire tags."""
    NONE = 0
    BYTE = 1
    BOOL = 2
    INT = 3
    LONG = 4
    FLOAT = 5
    DOUBLE = 6
    ADDRESS = 7

    @property
    def width(self) -> int:
        """Element width in bytes."""
        return _WIDTHS[self]

    @property
    def dtype(self) -> Optional[str]:
        """Little-endian numpy dtype for serializable kinds."""
        return _DTYPES.get(self)


_WIDTHS = {
    PayloadKind.NONE: 0,
    PayloadKind.BYTE: 1,
    PayloadKind.BOOL: 1,
    PayloadKind.INT: 4,
    PayloadKind.LONG: 8,
    PayloadKind.FLOAT: 4,
    PayloadKind.DOUBLE: 8,
    PayloadKind.ADDRESS: 8,
}

_DTYPES = {
    PayloadKind.BYTE: "u1",
    PayloadKind.BOOL: "u1",
    PayloadKind.INT: "<i4",
    PayloadKind.LONG: "<i8",
    PayloadKind.FLOAT: "<f4",
    PayloadKind.DOUBLE: "<f8",
}


@dataclass(frozen=True)
class Event:
    """
    A fired event as seen by its target.

    payload is an immutable byte snapshot taken at fire time. ADDRESS events
    keep the referenced object in `ref`; it never leaves the process and is
    excluded from equality.
    """
    source_rank: int
    identifier: str
    kind: PayloadKind = PayloadKind.NONE
    element_count: int = 0
    payload: bytes = b""
    persistent: bool = False
    sequence: int = 0
    ref: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.identifier, str) or not self.identifier:
            raise ValueError("event identifier must be a non-empty string")
        size = len(self.identifier.encode("utf-8"))
        if size > MAX_IDENTIFIER_BYTES:
            raise ValueError(f"identifier of {size} bytes exceeds the {MAX_IDENTIFIER_BYTES}-byte wire limit")
        if self.source_rank < 0 or self.sequence < 0 or self.element_count < 0:
            raise ValueError("source_rank, sequence and element_count must be >= 0")
        kind = PayloadKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "payload", bytes(self.payload))
        if kind is PayloadKind.NONE and (self.element_count or self.payload):
            raise ValueError("NONE events carry no payload")
        if kind is PayloadKind.ADDRESS and self.element_count != 1:
            raise ValueError("ADDRESS events carry exactly one handle")
        if len(self.payload) != self.element_count * kind.width:
            raise ValueError(
                f"payload of {len(self.payload)} bytes does not hold "
                f"{self.element_count} x {kind.name}"
            )

    @property
    def data(self) -> Any:
        """Decoded payload: a read-only numpy array, the referenced object, or None."""
        from .payload import unpack_payload

        if self.kind is PayloadKind.ADDRESS:
            return self.ref
        if self.kind is PayloadKind.NONE:
            return None
        return unpack_payload(self.kind, self.payload)

    def with_sequence(self, sequence: int) -> "Event":
        return Event(
            source_rank=self.source_rank,
            identifier=self.identifier,
            kind=self.kind,
            element_count=self.element_count,
            payload=self.payload,
            persistent=self.persistent,
            sequence=sequence,
            ref=self.ref,
        )


@dataclass(frozen=True)
class DependencyDescriptor:
    """A (source, identifier) pair a task or wait is waiting on."""
    source: RankSpec
    identifier: str

    def __post_init__(self):
        if not isinstance(self.identifier, str) or not self.identifier:
            raise ValueError("dependency identifier must be a non-empty string")

    def matches(self, event: Event) -> bool:
        """Match an incoming event; expects SELF/ALL already expanded."""
        if self.identifier != event.identifier:
            return False
        if self.source.kind is RankKind.ANY:
            return True
        return self.source.kind is RankKind.CONCRETE and self.source.rank == event.source_rank

    def __str__(self) -> str:
        return f"({self.source}, {self.identifier!r})"


DependencyLike = Union[DependencyDescriptor, tuple]


def as_dependency(value: DependencyLike) -> DependencyDescriptor:
    """Accept `(source, identifier)` tuples wherever a dependency is expected."""
    if isinstance(value, DependencyDescriptor):
        return value
    try:
        source, identifier = value
    except (TypeError, ValueError):
        raise TypeError(f"expected (source, identifier), got {value!r}") from None
    return DependencyDescriptor(as_rank_spec(source), identifier)


def expand_dependencies(
    deps: Iterable[DependencyLike],
    local_rank: int,
    world_size: int,
) -> tuple[DependencyDescriptor, ...]:
    """
    Expand dependencies for registration.

    ALL becomes one concrete dependency per rank 0..P-1 in place, SELF becomes
    the local rank, ANY is kept, concrete ranks are bounds-checked. The
    relative order of every other entry is preserved.
    """
    expanded: list[DependencyDescriptor] = []
    for dep in map(as_dependency, deps):
        if dep.source.kind is RankKind.ANY:
            expanded.append(dep)
            continue
        for rank in resolve_rank(dep.source, local_rank, world_size):
            expanded.append(DependencyDescriptor(RankSpec.concrete(rank), dep.identifier))
    return tuple(expanded)


TaskFunction = Callable[[list, int], Any]


@dataclass(frozen=True)
class TaskDescriptor:
    """A submitted task: what to run and which events it needs."""
    function: TaskFunction
    dependencies: tuple[DependencyDescriptor, ...]
    persistent: bool = False
    name: Optional[str] = None
    submission_index: int = 0

    def __post_init__(self):
        if self.name is not None and not self.persistent:
            raise ValueError("only persistent tasks can be named")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return getattr(self.function, "__name__", "task")


class TaskState(Enum):
    FILLING = "filling"
    READY = "ready"
    RUNNING = "running"
    PAUSED = "paused"
    DONE = "done"


@dataclass(eq=False)
class TaskInstance:
    """
    One activation of a TaskDescriptor.

    Slot i holds the event that matched dependency i. The scheduler keeps
    the instance's held locks and its resume signal here so that a paused
    task can be picked up again by any worker.
    """
    descriptor: TaskDescriptor
    instance_id: int = 0
    slots: list = field(default_factory=list)
    state: TaskState = TaskState.FILLING
    held_locks: set = field(default_factory=set)
    resume_signal: threading.Event = field(default_factory=threading.Event, repr=False)
    pending_wait: Any = field(default=None, repr=False)

    def __post_init__(self):
        if not self.slots:
            self.slots = [None] * len(self.descriptor.dependencies)

    @property
    def is_complete(self) -> bool:
        return all(slot is not None for slot in self.slots)

    def events(self) -> list[Event]:
        """Consumed events in dependency order."""
        return list(self.slots)

    def __repr__(self) -> str:
        filled = sum(slot is not None for slot in self.slots)
        return (
            f"TaskInstance({self.descriptor.label}#{self.instance_id}, "
            f"{self.state.value}, {filled}/{len(self.slots)})"
        )
