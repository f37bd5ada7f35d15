"""
Conformance suites run by `main conformance` and by the tests.

- matcher: EventMatcher against an exhaustive reference matcher on generated
  scenarios (few tasks, few dependencies, few events)
- listing: the three-task example program (task3 must print 133)
- ordering: per-pair FIFO and slot order over seeded loopback interleavings
  and over TCP rank processes
- detector: chained pings with random fan-out; finalise must not return
  before every task has run
- persistence: idle persistent tasks and persistent events never block
  termination

Every suite returns a SuiteResult; `passed` is True when it saw zero
violations.
"""
import itertools
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..core.models import (
    ALL,
    ANY,
    SELF,
    DependencyDescriptor,
    Event,
    PayloadKind,
    RankKind,
    RankSpec,
    TaskDescriptor,
    expand_dependencies,
)
from ..matcher import EventMatcher
from ..runtime import Runtime, RuntimeConfig, run_loopback, run_tcp_processes

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    violations: int = 0
    elapsed: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.cases > 0

    def fail(self, message: str) -> None:
        self.violations += 1
        if len(self.failures) < 5:
            self.failures.append(message)


# --- reference matcher -------------------------------------------------------

def _fit(dep: DependencyDescriptor, event: Event) -> Optional[int]:
    """0 when `dep` names the event's exact source, 1 for an ANY match, else None."""
    if dep.identifier != event.identifier:
        return None
    if dep.source.kind is RankKind.CONCRETE:
        return 0 if dep.source.rank == event.source_rank else None
    return 1 if dep.source.kind is RankKind.ANY else None


@dataclass(eq=False)
class _RefTask:
    descriptor: TaskDescriptor
    filling: list = field(default_factory=list)


class ReferenceMatcher:
    """
    Brute-force statement of the matching rules.

    An event is placed by listing every (task, instance, dependency) triple
    that could hold it and keeping the smallest
    (submission index, instance age, exact before ANY, dependency index).
    Persistent tasks may always open a new instance at the end of their list.

    Each public call keeps a log of every take it made. Persistent events in
    the log are placed again, in log order, once the call's own placement is
    done; a persistent task never takes a persistent event that it already
    took earlier in the same log. A persistent task that takes an event also
    takes whatever it can from the pool. Whatever is left is pooled, oldest
    first.
    """

    def __init__(self):
        self.tasks: list[_RefTask] = []
        self.pool: list[tuple[int, Event]] = []
        self._stamps = itertools.count()

    def register(self, descriptor: TaskDescriptor) -> list[tuple[TaskDescriptor, list]]:
        log, ready = [], []
        task = _RefTask(descriptor)
        if not descriptor.persistent:
            task.filling.append([None] * len(descriptor.dependencies))
        if descriptor.dependencies:
            self._take_from_pool(task, log, ready)
        else:
            ready.append((descriptor, task.filling.pop()))
        if descriptor.persistent or task.filling:
            self.tasks.append(task)
            self.tasks.sort(key=lambda t: t.descriptor.submission_index)
        self._replay_persistent(log, ready)
        return ready

    def deliver(self, event: Event) -> list[tuple[TaskDescriptor, list]]:
        log, ready = [], []
        self._place(event, log, ready)
        self._replay_persistent(log, ready)
        return ready

    def buffered(self) -> list[Event]:
        return [event for _, event in self.pool]

    def _options(self, task: _RefTask, event: Event, log: list):
        persistent = task.descriptor.persistent
        if persistent and event.persistent and any(t is task and e is event for t, e in log):
            return []
        deps = task.descriptor.dependencies
        instances = task.filling + ([[None] * len(deps)] if persistent else [])
        return sorted(
            (age, fit, index)
            for age, instance in enumerate(instances)
            for index, dep in enumerate(deps)
            if instance[index] is None and (fit := _fit(dep, event)) is not None
        )

    def _place(self, event: Event, log: list, ready: list) -> None:
        options = [
            ((task.descriptor.submission_index,) + option, task)
            for task in self.tasks
            for option in self._options(task, event, log)
        ]
        if not options:
            self.pool.append((next(self._stamps), event))
            return
        (_, age, _, index), task = min(options, key=lambda item: item[0])
        self._take(task, age, index, event, log, ready)
        if task.descriptor.persistent:
            self._take_from_pool(task, log, ready)

    def _take_from_pool(self, task: _RefTask, log: list, ready: list) -> None:
        for entry in list(self.pool):
            options = self._options(task, entry[1], log)
            if options:
                self.pool.remove(entry)
                age, _, index = options[0]
                self._take(task, age, index, entry[1], log, ready)

    def _take(self, task: _RefTask, age: int, index: int, event: Event, log: list, ready: list) -> None:
        if age == len(task.filling):
            task.filling.append([None] * len(task.descriptor.dependencies))
        instance = task.filling[age]
        instance[index] = event
        log.append((task, event))
        if all(slot is not None for slot in instance):
            del task.filling[age]
            ready.append((task.descriptor, instance))
            if not task.descriptor.persistent and task in self.tasks:
                self.tasks.remove(task)

    def _replay_persistent(self, log: list, ready: list) -> None:
        position = 0
        while position < len(log):
            _, event = log[position]
            position += 1
            if event.persistent:
                self._place(event, log, ready)


@dataclass
class MatcherScenario:
    """Interleaved registrations and deliveries on one rank."""
    world_size: int
    operations: list

    def describe(self) -> str:
        parts = []
        for op in self.operations:
            if isinstance(op, TaskDescriptor):
                kind = "persistent" if op.persistent else "task"
                deps = ", ".join(str(dep) for dep in op.dependencies)
                parts.append(f"{kind}#{op.submission_index}[{deps}]")
            else:
                flag = "*" if op.persistent else ""
                parts.append(f"fire({op.source_rank},{op.identifier!r}){flag}")
        return " ; ".join(parts)


def _noop(events, count):
    return None


def generate_scenario(rng: random.Random, max_tasks: int = 3, max_deps: int = 3, max_events: int = 6) -> MatcherScenario:
    world = rng.choice((1, 2, 3))
    identifiers = ("a", "b", "c")[:rng.randint(1, 3)]
    sources = [ANY, SELF, ALL] + [RankSpec.concrete(r) for r in range(world)]

    tasks = []
    for _ in range(rng.randint(1, max_tasks)):
        persistent = rng.random() < 0.4
        while True:
            raw = [
                (rng.choice(sources), rng.choice(identifiers))
                for _ in range(rng.randint(1 if persistent else 0, max_deps))
            ]
            deps = expand_dependencies(raw, 0, world)
            if len(deps) <= max_deps and (deps or not persistent):
                break
        tasks.append((deps, persistent))

    sequences = {}
    events = []
    for _ in range(rng.randint(0, max_events)):
        source = rng.randrange(world)
        sequence = sequences.get(source, 0)
        sequences[source] = sequence + 1
        events.append(Event(
            source_rank=source,
            identifier=rng.choice(identifiers),
            kind=PayloadKind.INT,
            element_count=1,
            payload=int(len(events)).to_bytes(4, "little"),
            persistent=rng.random() < 0.25,
            sequence=sequence,
        ))

    slots = ["task"] * len(tasks) + ["event"] * len(events)
    rng.shuffle(slots)
    task_iter, event_iter = iter(tasks), iter(events)
    operations = []
    index = 0
    for slot in slots:
        if slot == "task":
            deps, persistent = next(task_iter)
            operations.append(TaskDescriptor(_noop, deps, persistent, None, index))
            index += 1
        else:
            operations.append(next(event_iter))
    return MatcherScenario(world, operations)


def _trace_key(ready: list) -> list:
    return [
        (descriptor.submission_index, tuple(_event_key(e) for e in slots))
        for descriptor, slots in ready
    ]


def _event_key(event: Event) -> tuple:
    return (event.source_rank, event.identifier, event.sequence, event.persistent)


def run_matcher_scenario(scenario: MatcherScenario) -> tuple[list, list]:
    """
    Replay a scenario on EventMatcher and ReferenceMatcher.

    Returns:
        (actual trace, expected trace); equal when the matchers agree
    """
    matcher, reference = EventMatcher(0), ReferenceMatcher()
    actual, expected = [], []
    for op in scenario.operations:
        if isinstance(op, TaskDescriptor):
            matcher.next_submission_index()
            got = [(i.descriptor, i.slots) for i in matcher.register_task(op)]
            want = reference.register(op)
        else:
            got = [(i.descriptor, i.slots) for i in matcher.deliver_event(op)]
            want = reference.deliver(op)
        actual.append(_trace_key(got))
        expected.append(_trace_key(want))
    actual.append([_event_key(e) for e in matcher.buffered_events()])
    expected.append([_event_key(e) for e in reference.buffered()])
    return actual, expected


def matcher_suite(cases: int = 10000, seed: int = 0) -> SuiteResult:
    result = SuiteResult("matcher")
    started = time.perf_counter()
    rng = random.Random(seed)
    for case in range(cases):
        scenario = generate_scenario(rng)
        actual, expected = run_matcher_scenario(scenario)
        result.cases += 1
        if actual != expected:
            result.fail(f"case {case}: {scenario.describe()}")
    result.elapsed = time.perf_counter() - started
    return result


# --- runtime programs ------------------------------------------------------

@dataclass
class ListingRecord:
    rank: int
    total: Optional[int] = None
    slot_sources: list = field(default_factory=list)


class ListingProgram:
    """Rank 0 runs task1; rank 1 runs task2 on event1 and task3 on event2 + event3."""

    def __call__(self, rt: Runtime) -> ListingRecord:
        record = ListingRecord(rt.get_rank())

        def task1(events, count):
            rt.fire_event(None, PayloadKind.NONE, 0, 1, "event1")
            rt.fire_event(33, PayloadKind.INT, 1, 1, "event2")

        def task2(events, count):
            rt.fire_event(100, PayloadKind.INT, 1, SELF, "event3")

        def task3(events, count):
            record.slot_sources = [event.source_rank for event in events]
            record.total = int(events[0].data[0]) + int(events[1].data[0])
            logger.info(f"[rank {record.rank}] task3 sum {record.total}")

        if record.rank == 0:
            rt.submit_task(task1)
        elif record.rank == 1:
            rt.submit_task(task2, (0, "event1"))
            rt.submit_task(task3, (0, "event2"), (1, "event3"))
        return record


def listing_suite(seeds: int = 100, base: Optional[RuntimeConfig] = None, tcp: bool = False) -> SuiteResult:
    result = SuiteResult("listing")
    started = time.perf_counter()
    base = base or RuntimeConfig(ranks=2, workers=1)
    runs = [None] if tcp else range(seeds)
    for seed in runs:
        config = base.with_overrides(ranks=2, deterministic_seed=seed)
        if tcp:
            records = run_tcp_processes(config.with_overrides(transport="tcp"), ListingProgram(), timeout=30)
        else:
            records = run_loopback(config, ListingProgram(), timeout=30)
        result.cases += 1
        if records[1].total != 133 or records[1].slot_sources != [0, 1]:
            result.fail(f"seed {seed}: rank 1 recorded {records[1]}")
    result.elapsed = time.perf_counter() - started
    return result


@dataclass
class OrderingRecord:
    rank: int
    received: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    slot_runs: int = 0


class OrderingProgram:
    """
    Every rank fires `count` numbered "seq" events at seeded random targets,
    then one "slot" event to ALL. Receivers check per-source numbering and
    that an (ALL, "slot") task sees sources in rank order.
    """

    def __init__(self, seed: int, count: int = 20):
        self.seed = seed
        self.count = count

    def __call__(self, rt: Runtime) -> OrderingRecord:
        rank, world = rt.get_rank(), rt.get_world_size()
        record = OrderingRecord(rank)
        lock = threading.Lock()

        def on_seq(events, count):
            event = events[0]
            with lock:
                seen = record.received.setdefault(event.source_rank, [])
                number = int(event.data[0])
                if seen and number <= seen[-1]:
                    record.violations.append(f"from {event.source_rank}: {number} after {seen[-1]}")
                seen.append(number)

        def on_slot(events, count):
            record.slot_runs += 1
            sources = [event.source_rank for event in events]
            if sources != list(range(world)):
                record.violations.append(f"slot order {sources}")

        rt.submit_persistent_task(on_seq, (ANY, "seq"))
        rt.submit_task(on_slot, (ALL, "slot"))
        rng = random.Random(self.seed * 7919 + rank)
        for number in range(self.count):
            rt.fire_event(number, PayloadKind.LONG, 1, rng.randrange(world), "seq")
        rt.fire_event(None, PayloadKind.NONE, 0, ALL, "slot")
        return record


def ordering_suite(
    seeds: int = 1000,
    ranks: int = 3,
    count: int = 20,
    base: Optional[RuntimeConfig] = None,
    tcp_runs: int = 1,
    tcp_ranks: int = 4,
) -> SuiteResult:
    """
    Check per-pair FIFO and slot order on seeded loopback interleavings,
    then on `tcp_runs` runs of `tcp_ranks` TCP rank processes.
    """
    result = SuiteResult("ordering")
    started = time.perf_counter()
    base = base or RuntimeConfig(workers=1)
    runs = [(seed, ranks, False) for seed in range(seeds)]
    runs += [(seeds + n, tcp_ranks, True) for n in range(tcp_runs)]
    for seed, world, tcp in runs:
        program = OrderingProgram(seed, count)
        if tcp:
            records = run_tcp_processes(base.with_overrides(ranks=world), program, timeout=60)
        else:
            config = base.with_overrides(ranks=world, deterministic_seed=seed)
            records = run_loopback(config, program, timeout=30)
        result.cases += 1
        label = f"{'tcp' if tcp else 'seed'} {seed}"
        totals = sum(len(seq) for r in records for seq in r.received.values())
        for record in records:
            for violation in record.violations:
                result.fail(f"{label} rank {record.rank}: {violation}")
            if record.slot_runs != 1:
                result.fail(f"{label} rank {record.rank}: slot task ran {record.slot_runs} times")
        if totals != world * count:
            result.fail(f"{label}: {totals} of {world * count} seq events consumed")
    result.elapsed = time.perf_counter() - started
    return result


class ExecutionLog:
    """Thread-safe counters shared by the ranks of one loopback run."""

    def __init__(self):
        self._lock = threading.Lock()
        self.pings = 0
        self.finals = 0

    def add(self, name: str) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + 1)


class ChainProgram:
    """
    Chains of "ping" events hop between random ranks; the last hop fires a
    "final" event consumed by a transient task. Each rank owns `chains`
    chains and waits for exactly `chains` finals.
    """

    def __init__(self, seed: int, log: ExecutionLog, chains: int = 2, max_hops: int = 4, jitter: float = 0.0005):
        self.seed = seed
        self.log = log
        self.chains = chains
        self.max_hops = max_hops
        self.jitter = jitter

    def hops(self, chain: int) -> int:
        return random.Random(self.seed * 104729 + chain).randint(0, self.max_hops)

    def expected(self, world: int) -> tuple[int, int]:
        total = self.chains * world
        return sum(self.hops(c) + 1 for c in range(total)), total

    def __call__(self, rt: Runtime) -> int:
        rank, world = rt.get_rank(), rt.get_world_size()

        def on_ping(events, count):
            chain, remaining = (int(v) for v in events[0].data)
            self.log.add("pings")
            rng = random.Random(hash((self.seed, chain, remaining)))
            if self.jitter:
                time.sleep(rng.random() * self.jitter)
            if remaining > 0:
                rt.fire_event([chain, remaining - 1], PayloadKind.LONG, 2, rng.randrange(world), "ping")
            else:
                rt.fire_event(chain, PayloadKind.LONG, 1, chain % world, "final")

        def on_final(events, count):
            self.log.add("finals")

        rt.submit_persistent_task(on_ping, (ANY, "ping"))
        for _ in range(self.chains):
            rt.submit_task(on_final, (ANY, "final"))
        rng = random.Random(self.seed * 31 + rank)
        for local in range(self.chains):
            chain = rank * self.chains + local
            rt.fire_event([chain, self.hops(chain)], PayloadKind.LONG, 2, rng.randrange(world), "ping")
        return rank


def detector_suite(seeds: int = 1000, ranks: int = 3, base: Optional[RuntimeConfig] = None) -> SuiteResult:
    result = SuiteResult("detector")
    started = time.perf_counter()
    base = base or RuntimeConfig(workers=2)
    for seed in range(seeds):
        log = ExecutionLog()
        program = ChainProgram(seed, log)
        config = base.with_overrides(ranks=ranks, deterministic_seed=seed)
        run_loopback(config, program, timeout=30)
        result.cases += 1
        pings, finals = program.expected(ranks)
        if (log.pings, log.finals) != (pings, finals):
            result.fail(
                f"seed {seed}: finalise returned after {log.pings}/{pings} pings, "
                f"{log.finals}/{finals} finals"
            )
    result.elapsed = time.perf_counter() - started
    return result


class IdlePersistentProgram:
    """A persistent task that never arms plus a persistent event nobody wants."""

    def __call__(self, rt: Runtime) -> int:
        rt.submit_named_persistent_task("never", _noop, (ANY, "never"))
        rt.fire_persistent_event(rt.get_rank(), PayloadKind.INT, 1, SELF, "orphan")
        return rt.get_rank()


def persistence_suite(ranks: int = 3, base: Optional[RuntimeConfig] = None) -> SuiteResult:
    result = SuiteResult("persistence")
    started = time.perf_counter()
    config = (base or RuntimeConfig(workers=1)).with_overrides(ranks=ranks)
    try:
        run_loopback(config, IdlePersistentProgram(), timeout=10)
    except Exception as exc:
        result.fail(f"finalise blocked: {exc}")
    result.cases += 1
    result.elapsed = time.perf_counter() - started
    return result


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "matcher": matcher_suite,
    "listing": listing_suite,
    "ordering": ordering_suite,
    "detector": detector_suite,
    "persistence": persistence_suite,
}
