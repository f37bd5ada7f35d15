"""
FIFO worker pool for one rank.

Each worker is an OS thread that pops the ready queue and runs task bodies.
Pausing a task (event wait or lock contention) keeps the body's stack alive
on its own thread: the thread leaves the worker role and a replacement
worker is started, so the pool keeps `worker_count` threads executing work.
When the paused task becomes runnable it is enqueued like any other ready
task; whichever worker dequeues it hands its role back to the paused thread
and retires. A task may therefore resume under a different worker slot than
the one it paused on.
"""
import itertools
import logging
import threading
import time
from collections import deque
from enum import Enum
from typing import Callable, Iterable, Optional

from ..core.errors import CalledOutsideTask
from ..core.models import DependencyDescriptor, Event, TaskInstance, TaskState
from ..matcher import EventMatcher, RetrievalMode
from .locks import LockTable

logger = logging.getLogger(__name__)

_current = threading.local()


def current_instance() -> Optional[TaskInstance]:
    """The task instance whose body is running on this thread, if any."""
    return getattr(_current, "instance", None)


class ProgressMode(Enum):
    DEDICATED_THREAD = "dedicated"
    IDLE_WORKER = "idle_worker"


class ReadyQueue:
    """Thread-safe FIFO of runnable task instances."""

    def __init__(self):
        self._items: deque[TaskInstance] = deque()
        self._cond = threading.Condition()

    def put(self, instance: TaskInstance) -> None:
        with self._cond:
            self._items.append(instance)
            self._cond.notify()

    def get(self, timeout: Optional[float] = None) -> Optional[TaskInstance]:
        """Pop the oldest entry, waiting up to `timeout` seconds for one."""
        with self._cond:
            if not self._items and timeout:
                self._cond.wait(timeout)
            return self._items.popleft() if self._items else None

    def wake_all(self) -> None:
        with self._cond:
            self._cond.notify_all()

    def __len__(self) -> int:
        with self._cond:
            return len(self._items)


class WorkerPool:
    """
    Executes ready task instances, first in first out.

    Args:
        matcher: The rank's matcher, used by waits and retrievals
        worker_count: Number of concurrently executing task bodies
        progress_mode: Whether idle workers also run `progress`
        progress: Callable taking a timeout; polls the transport once
        poll_slice: Upper bound on one idle-worker polling slice, seconds
        rank: Used for thread names and log prefixes
        thread_init: Called first on every worker thread
        on_task_done: Called after every task body ends
    """

    def __init__(
        self,
        matcher: EventMatcher,
        worker_count: int = 1,
        progress_mode: ProgressMode = ProgressMode.DEDICATED_THREAD,
        progress: Optional[Callable[[float], None]] = None,
        poll_slice: float = 0.002,
        rank: int = 0,
        thread_init: Optional[Callable[[], None]] = None,
        on_task_done: Optional[Callable[[TaskInstance], None]] = None,
    ):
        if worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {worker_count}")
        self.matcher = matcher
        self.worker_count = worker_count
        self.progress_mode = progress_mode
        self.rank = rank
        self.locks = LockTable()
        self._ready = ReadyQueue()
        self._progress = progress
        self._progress_lock = threading.Lock()
        self._poll_slice = poll_slice
        self._thread_init = thread_init
        self._on_task_done = on_task_done
        self._state_lock = threading.Lock()
        self._thread_ids = itertools.count()
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()
        self._started = False
        self.outstanding = 0
        self.running = 0
        self.paused = 0
        self.completed = 0
        self.failed = 0

    # --- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for _ in range(self.worker_count):
            self._spawn_worker()
        logger.debug(f"[rank {self.rank}] started {self.worker_count} worker(s)")

    def shutdown(self, timeout: float = 2.0) -> None:
        self._stopping.set()
        self._ready.wake_all()
        deadline = time.monotonic() + timeout
        for thread in list(self._threads):
            if thread is threading.current_thread():
                continue
            thread.join(max(0.0, deadline - time.monotonic()))
        self._threads.clear()

    def is_idle(self) -> bool:
        """No queued, running or paused task on this rank."""
        with self._state_lock:
            return self.outstanding == 0

    def stats(self) -> dict:
        with self._state_lock:
            return {
                "queued": len(self._ready),
                "outstanding": self.outstanding,
                "running": self.running,
                "paused": self.paused,
                "completed": self.completed,
                "failed": self.failed,
            }

    # --- scheduling --------------------------------------------------------

    def enqueue_ready(self, instance: TaskInstance) -> None:
        """Queue a Ready instance, or a Paused one whose wait is satisfied."""
        if instance.state is not TaskState.PAUSED:
            with self._state_lock:
                self.outstanding += 1
        self._ready.put(instance)

    def enqueue_all(self, instances: Iterable[TaskInstance]) -> None:
        for instance in instances:
            self.enqueue_ready(instance)

    # --- task-side calls ---------------------------------------------------

    def wait_for_events(self, dependencies: Iterable[DependencyDescriptor]) -> list[Event]:
        """
        Block the calling task until the dependencies are met.

        Returns immediately when every event is already buffered. Otherwise
        the task pauses: its locks are released, the worker is given to other
        tasks, and on resume the locks are reacquired in name order before
        the events are returned in dependency order.
        """
        instance = self._require_task("wait")
        deps = tuple(dependencies)
        result = self.matcher.retrieve_matching(deps, RetrievalMode.CONSUME_ALL_OR_NOTHING)
        if result.satisfied:
            return result.events

        released, woken = self.locks.release_all(instance)
        self.enqueue_all(woken)
        self._mark_paused(instance)
        record, ready = self.matcher.register_wait(instance, deps)
        self.enqueue_all(ready)
        if record.is_complete:
            self._mark_resumed(instance)
        else:
            logger.debug(f"[rank {self.rank}] {instance!r} paused on {len(deps)} event(s)")
            self._suspend(instance)
            record = instance.pending_wait
        instance.pending_wait = None

        for name in released:
            self.lock(name)
        return list(record.slots)

    def retrieve_any(
        self, dependencies: Iterable[DependencyDescriptor]
    ) -> tuple[list[Optional[Event]], int]:
        """Take whatever matching events are buffered, without pausing."""
        self._require_task("retrieve_any")
        result = self.matcher.retrieve_matching(tuple(dependencies), RetrievalMode.CONSUME_AVAILABLE)
        return result.events, result.filled

    def lock(self, name: str) -> None:
        """Acquire a named lock, pausing the task while it is contended."""
        instance = self._require_task("lock")
        if self.locks.try_acquire(name, instance):
            return
        self._mark_paused(instance)
        if self.locks.acquire_or_enqueue(name, instance):
            self._mark_resumed(instance)
            return
        logger.debug(f"[rank {self.rank}] {instance!r} paused on lock {name!r}")
        self._suspend(instance)

    def unlock(self, name: str) -> None:
        instance = self._require_task("unlock")
        waiter = self.locks.release(name, instance)
        if waiter is not None:
            self.enqueue_ready(waiter)

    def test_lock(self, name: str) -> bool:
        """Acquire the lock if it is free; never pauses."""
        instance = self._require_task("test_lock")
        return self.locks.try_acquire(name, instance)

    # --- internals ---------------------------------------------------------

    def _require_task(self, call: str) -> TaskInstance:
        instance = current_instance()
        if instance is None:
            raise CalledOutsideTask(f"{call}() can only be called from inside a task")
        return instance

    def _spawn_worker(self) -> None:
        thread = threading.Thread(
            target=self._worker_main,
            name=f"edat-r{self.rank}-w{next(self._thread_ids)}",
            daemon=True,
        )
        self._threads.append(thread)
        thread.start()

    def _worker_main(self) -> None:
        if self._thread_init is not None:
            self._thread_init()
        self._worker_loop()

    def _worker_loop(self) -> None:
        while not self._stopping.is_set():
            instance = self._next_instance()
            if instance is None:
                continue
            if instance.state is TaskState.PAUSED:
                # the paused thread takes over this worker's role
                instance.resume_signal.set()
                return
            self._run(instance)

    def _next_instance(self) -> Optional[TaskInstance]:
        if (
            self.progress_mode is ProgressMode.IDLE_WORKER
            and self._progress is not None
            and len(self._ready) == 0
            and self._progress_lock.acquire(blocking=False)
        ):
            try:
                self._progress(self._poll_slice)
            finally:
                self._progress_lock.release()
            return self._ready.get(0)
        return self._ready.get(self._poll_slice)

    def _run(self, instance: TaskInstance) -> None:
        instance.state = TaskState.RUNNING
        _current.instance = instance
        with self._state_lock:
            self.running += 1
        failed = False
        try:
            events = instance.events()
            instance.descriptor.function(events, len(events))
        except Exception:
            failed = True
            logger.exception(f"[rank {self.rank}] task {instance.descriptor.label} raised")
        finally:
            _, woken = self.locks.release_all(instance)
            self.enqueue_all(woken)
            instance.state = TaskState.DONE
            _current.instance = None
            with self._state_lock:
                self.outstanding -= 1
                self.running -= 1
                self.completed += 1
                self.failed += failed
            if self._on_task_done is not None:
                self._on_task_done(instance)

    def _mark_paused(self, instance: TaskInstance) -> None:
        instance.resume_signal.clear()
        instance.state = TaskState.PAUSED
        with self._state_lock:
            self.running -= 1
            self.paused += 1

    def _mark_resumed(self, instance: TaskInstance) -> None:
        instance.state = TaskState.RUNNING
        with self._state_lock:
            self.paused -= 1
            self.running += 1

    def _suspend(self, instance: TaskInstance) -> None:
        """Give up the worker role until a worker hands it back."""
        self._spawn_worker()
        instance.resume_signal.wait()
        instance.resume_signal.clear()
        self._mark_resumed(instance)
        _current.instance = instance
