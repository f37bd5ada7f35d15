"""
Runtime façade: one object per rank context.

Wires a transport, an EventMatcher and a WorkerPool together, assigns
per-target sequence numbers to fired events, runs the progress loop
(transport poll, event delivery, token handling) and drives the
termination detector from finalise().

Loopback ranks share a process, so the current rank is looked up per
context: every worker thread and the thread that initialised a runtime
see it through current_runtime().
"""
import logging
import threading
import time
from typing import Any, Optional

from ..core.errors import (
    AddressToRemote,
    AlreadyInitialized,
    ConcreteOutOfRange,
    NotInitialized,
    RosterInvalid,
    TerminationTimeout,
    TransportClosed,
    UnknownRank,
)
from ..core.models import (
    DependencyLike,
    Event,
    PayloadKind,
    RankLike,
    TaskDescriptor,
    TaskFunction,
    expand_dependencies,
    resolve_rank,
)
from ..core.payload import pack_payload
from ..matcher import EventMatcher
from ..scheduler import ProgressMode, WorkerPool, current_instance
from ..transport import (
    BaseTransport,
    FrameKind,
    LoopbackHub,
    TcpTransport,
    TransportFrame,
    load_roster,
)
from .config import RuntimeConfig
from .termination import LocalStatus, TerminationDetector, TerminationToken

logger = logging.getLogger(__name__)

_context = threading.local()


def current_runtime() -> Optional["Runtime"]:
    """The runtime bound to this thread (main context or worker), if any."""
    return getattr(_context, "runtime", None)


def bind_runtime(runtime: Optional["Runtime"]) -> None:
    _context.runtime = runtime


class Runtime:
    """
    One rank of an event-driven task run.

    Args:
        config: Runtime configuration
        rank: Rank of this context; defaults to config.rank, then 0
        hub: Shared LoopbackHub for multi-rank loopback runs
        transport: Pre-built transport, overriding config.transport
    """

    def __init__(
        self,
        config: Optional[RuntimeConfig] = None,
        rank: Optional[int] = None,
        hub: Optional[LoopbackHub] = None,
        transport: Optional[BaseTransport] = None,
    ):
        self.config = config or RuntimeConfig()
        self._rank = rank if rank is not None else (self.config.rank or 0)
        self._hub = hub
        self.transport: Optional[BaseTransport] = transport
        self.matcher: Optional[EventMatcher] = None
        self.pool: Optional[WorkerPool] = None
        self.detector: Optional[TerminationDetector] = None
        self._initialized = False
        self._finished = False
        self._finalising = False
        self._send_lock = threading.Lock()
        self._progress_lock = threading.Lock()
        self._sequences: dict[int, int] = {}
        self._fired = 0
        self._submitted = 0
        self._stopping = threading.Event()
        self._progress_thread: Optional[threading.Thread] = None
        self._failure: Optional[BaseException] = None

    # --- lifecycle ---------------------------------------------------------

    def init(self) -> "Runtime":
        """
        Connect the transport and start workers.

        Raises:
            AlreadyInitialized: init() was already called on this context
            RosterInvalid: tcp roster missing or malformed
            BindFailure: tcp listener could not bind
        """
        if self._initialized:
            raise AlreadyInitialized(f"rank {self._rank} is already initialised")
        if self._finished:
            raise TransportClosed(f"rank {self._rank} was aborted before init")
        if self.transport is None:
            self.transport = self._build_transport()
        self.transport.connect()
        self._rank = self.transport.rank

        self.matcher = EventMatcher(self._rank)
        self.pool = WorkerPool(
            self.matcher,
            worker_count=self.config.workers,
            progress_mode=self.config.progress_mode,
            progress=self._poll_from_worker,
            poll_slice=self.config.poll_timeout,
            rank=self._rank,
            thread_init=lambda: bind_runtime(self),
        )
        self.detector = TerminationDetector(
            self._rank,
            self.transport.world_size,
            probe=self._local_status,
            send=self._send_token,
            token_interval=self.config.token_interval,
            on_verdict=self.transport.begin_shutdown,
        )
        self._initialized = True
        self.pool.start()
        if self.config.progress_mode is ProgressMode.DEDICATED_THREAD:
            self._progress_thread = threading.Thread(
                target=self._progress_loop, name=f"edat-r{self._rank}-progress", daemon=True
            )
            self._progress_thread.start()
        logger.info(
            f"[rank {self._rank}] initialised: {self.transport.describe()}, "
            f"{self.config.workers} worker(s), progress {self.config.progress_mode.value}"
        )
        return self

    def _build_transport(self) -> BaseTransport:
        if self.config.transport == "tcp":
            if self.config.roster is None:
                raise RosterInvalid("the tcp transport needs a roster file")
            roster = load_roster(self.config.roster, self._rank)
            return TcpTransport(roster, connect_timeout=self.config.connect_timeout)
        if self._hub is None:
            self._hub = LoopbackHub(self.config.ranks, self.config.deterministic_seed)
        return self._hub.endpoint(self._rank)

    def finalise(self, timeout: Optional[float] = None) -> None:
        """
        Block until every rank is quiescent, then shut this rank down.

        Raises:
            TerminationTimeout: `timeout` seconds passed without a verdict
            TransportClosed: a peer vanished while waiting
        """
        self._require_init()
        if self._finished:
            return
        self._finalising = True
        deadline = None if timeout is None else time.monotonic() + timeout
        while not self.detector.released.wait(self.config.poll_timeout * 5):
            if self._failure is not None:
                raise self._failure
            if self._finished:
                raise TransportClosed(f"rank {self._rank} was aborted while finalising")
            if deadline is not None and time.monotonic() >= deadline:
                raise TerminationTimeout(
                    f"rank {self._rank} did not reach global quiescence within {timeout}s",
                    self.diagnostics(),
                )
        self._shutdown()
        logger.info(f"[rank {self._rank}] finalised")

    def abort(self) -> None:
        """Stop workers and close the transport without waiting for quiescence."""
        if not self._initialized:
            self._finished = True
        elif not self._finished:
            self._shutdown()

    def _shutdown(self) -> None:
        self._finished = True
        self._stopping.set()
        if self._progress_thread is not None and self._progress_thread is not threading.current_thread():
            self._progress_thread.join(1.0)
        self.pool.shutdown()
        self.matcher.clear()
        self.transport.close()
        if current_runtime() is self:
            bind_runtime(None)

    # --- queries -----------------------------------------------------------

    def get_rank(self) -> int:
        self._require_init()
        return self._rank

    def get_world_size(self) -> int:
        self._require_init()
        return self.transport.world_size

    @property
    def initialized(self) -> bool:
        return self._initialized and not self._finished

    def is_persistent_task_registered(self, name: str) -> bool:
        self._require_init()
        return self.matcher.has_persistent_task(name)

    def diagnostics(self) -> dict:
        """Counters and the detector's latest reasons for not terminating."""
        self._require_init()
        snapshot = self.matcher.quiescence_snapshot()
        with self._send_lock:
            fired = self._fired
        return {
            "rank": self._rank,
            "world_size": self.transport.world_size,
            "fired": fired,
            "consumed": self.matcher.consumed_nonpersistent,
            "delivered": self.matcher.delivered,
            "submitted": self._submitted,
            "outstanding_transient": snapshot.outstanding_transient,
            "unconsumed_events": snapshot.unconsumed_nonpersistent_events,
            "filling_transient": snapshot.filling_instances_transient,
            "buffered": [f"{e.identifier}@{e.source_rank}" for e in self.matcher.buffered_events()[:10]],
            "pending_waits": self.matcher.pending_waits(),
            "pool": self.pool.stats(),
            "frames_sent": self.transport.frames_sent,
            "frames_received": self.transport.frames_received,
            "rounds_started": self.detector.stats.rounds_started,
            "detector_reasons": list(self.detector.stats.last_reasons),
        }

    # --- submission --------------------------------------------------------

    def submit_task(self, function: TaskFunction, *dependencies: DependencyLike) -> None:
        """Submit a task that runs once, when every dependency has an event."""
        self._submit(function, dependencies, persistent=False, name=None)

    def submit_persistent_task(self, function: TaskFunction, *dependencies: DependencyLike) -> None:
        """Submit a task that re-arms after every activation."""
        self._submit(function, dependencies, persistent=True, name=None)

    def submit_named_persistent_task(
        self, name: str, function: TaskFunction, *dependencies: DependencyLike
    ) -> None:
        self._submit(function, dependencies, persistent=True, name=name)

    def remove_persistent_task(self, name: str) -> bool:
        self._require_init()
        return self.matcher.remove_persistent_task(name)

    def _submit(self, function, dependencies, persistent: bool, name: Optional[str]) -> None:
        self._require_init()
        deps = expand_dependencies(dependencies, self._rank, self.transport.world_size)
        descriptor = TaskDescriptor(
            function=function,
            dependencies=deps,
            persistent=persistent,
            name=name,
            submission_index=self.matcher.next_submission_index(),
        )
        ready = self.matcher.register_task(descriptor)
        self._submitted += 1
        self.pool.enqueue_all(ready)

    # --- firing ------------------------------------------------------------

    def fire_event(
        self,
        data: Any,
        kind: PayloadKind,
        count: Optional[int],
        target: RankLike,
        identifier: str,
    ) -> None:
        """
        Fire an event at `target` (a rank, SELF or ALL).

        The payload is copied before returning. Remote targets receive one
        frame each, in ascending rank order; the local target is matched
        directly.

        Raises:
            UnknownRank: target outside the world
            AddressToRemote: ADDRESS payload aimed at another rank
        """
        self._fire(data, kind, count, target, identifier, persistent=False)

    def fire_persistent_event(
        self,
        data: Any,
        kind: PayloadKind,
        count: Optional[int],
        target: RankLike,
        identifier: str,
    ) -> None:
        """Fire an event that stays available to its target after every consumption."""
        self._fire(data, kind, count, target, identifier, persistent=True)

    def _fire(self, data, kind, count, target, identifier, persistent: bool) -> None:
        self._require_init()
        kind = PayloadKind(kind)
        try:
            targets = resolve_rank(target, self._rank, self.transport.world_size)
        except ConcreteOutOfRange as exc:
            raise UnknownRank(str(exc)) from exc
        if kind is PayloadKind.ADDRESS and any(t != self._rank for t in targets):
            raise AddressToRemote(
                f"event {identifier!r} carries a local address and can only target rank {self._rank}"
            )
        payload, count, ref = pack_payload(data, kind, count)

        with self._send_lock:
            for target_rank in targets:
                sequence = self._sequences.get(target_rank, 0)
                event = Event(
                    source_rank=self._rank,
                    identifier=identifier,
                    kind=kind,
                    element_count=count,
                    payload=payload,
                    persistent=persistent,
                    sequence=sequence,
                    ref=ref,
                )
                # a send that raises leaves sequence and fired count untouched
                if target_rank != self._rank:
                    self.transport.send(target_rank, TransportFrame.from_event(event))
                self._sequences[target_rank] = sequence + 1
                if not persistent:
                    self._fired += 1
                if target_rank == self._rank:
                    self.pool.enqueue_all(self.matcher.deliver_event(event))

    # --- task-side calls ---------------------------------------------------

    def wait(self, *dependencies: DependencyLike) -> list[Event]:
        """Pause the calling task until the dependencies are met; returns their events."""
        self._require_init()
        deps = expand_dependencies(dependencies, self._rank, self.transport.world_size)
        return self.pool.wait_for_events(deps)

    def retrieve_any(self, *dependencies: DependencyLike) -> tuple[list[Optional[Event]], int]:
        self._require_init()
        deps = expand_dependencies(dependencies, self._rank, self.transport.world_size)
        return self.pool.retrieve_any(deps)

    def lock(self, name: str) -> None:
        self._require_init()
        self.pool.lock(name)

    def unlock(self, name: str) -> None:
        self._require_init()
        self.pool.unlock(name)

    def test_lock(self, name: str) -> bool:
        self._require_init()
        return self.pool.test_lock(name)

    def in_task(self) -> bool:
        return current_instance() is not None

    # --- progress ----------------------------------------------------------

    def _progress_loop(self) -> None:
        bind_runtime(self)
        while not self._stopping.is_set() and self._failure is None:
            self._poll_from_worker(self.config.poll_timeout)

    def _poll_from_worker(self, timeout: float) -> None:
        try:
            self._progress_once(timeout)
        except TransportClosed as exc:
            if self.detector.verdict.is_set() or self._failure is not None:
                return
            logger.error(f"[rank {self._rank}] transport failed: {exc}")
            self._failure = exc

    def _progress_once(self, timeout: float) -> None:
        """Poll once, deliver what arrived and let the detector act."""
        with self._progress_lock:
            if self._finished:
                return
            for frame in self.transport.poll(timeout):
                if frame.frame_kind is FrameKind.TOKEN:
                    self.detector.on_token(TerminationToken.from_frame(frame))
                else:
                    self.pool.enqueue_all(self.matcher.deliver_event(frame.to_event()))
            self.detector.tick()

    def _send_token(self, target: int, token: TerminationToken) -> None:
        self.transport.send(target, token.to_frame(self._rank))

    def _local_status(self) -> LocalStatus:
        snapshot = self.matcher.quiescence_snapshot()
        pool = self.pool.stats()
        with self._send_lock:
            fired = self._fired
        consumed = self.matcher.consumed_nonpersistent
        reasons = []
        if snapshot.outstanding_transient:
            reasons.append(f"{snapshot.outstanding_transient} transient task(s) awaiting events")
        if snapshot.unconsumed_nonpersistent_events:
            reasons.append(f"{snapshot.unconsumed_nonpersistent_events} unconsumed event(s)")
        if pool["outstanding"]:
            reasons.append(f"{pool['outstanding']} task(s) queued, running or paused")
        activity = (
            fired,
            consumed,
            self.matcher.delivered,
            self._submitted,
            pool["completed"],
        )
        return LocalStatus(
            fired=fired,
            consumed=consumed,
            quiescent=not reasons,
            finalising=self._finalising,
            activity=activity,
            reasons=tuple(reasons),
        )

    def _require_init(self) -> None:
        if not self._initialized:
            raise NotInitialized("runtime is not initialised; call init() first")

    def __repr__(self) -> str:
        state = "finished" if self._finished else ("running" if self._initialized else "new")
        return f"Runtime(rank={self._rank}, {state})"


def init(
    config: Optional[RuntimeConfig] = None,
    rank: Optional[int] = None,
    hub: Optional[LoopbackHub] = None,
) -> Runtime:
    """
    Initialise a runtime and bind it to the calling thread.

    Raises:
        AlreadyInitialized: this thread already has a live runtime
    """
    existing = current_runtime()
    if existing is not None and existing.initialized:
        raise AlreadyInitialized(f"this context already runs {existing!r}")
    runtime = Runtime(config, rank=rank, hub=hub).init()
    bind_runtime(runtime)
    return runtime


