"""
Collective demos: an all-to-all barrier and a rank-id reduction.

Each demo is a picklable per-rank program so it runs unchanged on loopback
threads and on TCP rank processes.
"""
import logging
import threading
from dataclasses import dataclass, field
from typing import Optional

from ..core.models import ALL, PayloadKind
from ..runtime import Runtime, RuntimeConfig, run_loopback, run_rank, run_tcp_processes

logger = logging.getLogger(__name__)

BARRIER_MESSAGE = "barrier task ran once per rank after all fires"


class FireLog:
    """Counts fires issued across every rank sharing this process."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def issued(self) -> int:
        with self._lock:
            self.count += 1
            return self.count

    def __getstate__(self):
        # a copy in another process cannot observe this one's fires
        return {}

    def __setstate__(self, state):
        self._lock = threading.Lock()
        self.count = None


@dataclass
class BarrierRecord:
    rank: int
    world_size: int = 1
    runs: int = 0
    events_seen: int = 0
    early_starts: int = 0


@dataclass
class BarrierReport:
    records: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.records) and all(
            r.runs == 1 and r.events_seen == r.world_size and r.early_starts == 0
            for r in self.records
        )


class BarrierProgram:
    """Every rank fires "event" to ALL; a task on (ALL, "event") is the barrier."""

    def __init__(self, log: Optional[FireLog] = None):
        self.log = log or FireLog()

    def __call__(self, rt: Runtime) -> BarrierRecord:
        world = rt.get_world_size()
        record = BarrierRecord(rt.get_rank(), world)

        def barrier_task(events, count):
            record.runs += 1
            record.events_seen = count
            if self.log.count is not None and self.log.count < world:
                record.early_starts += 1

        rt.submit_task(barrier_task, (ALL, "event"))
        self.log.issued()
        rt.fire_event(None, PayloadKind.NONE, 0, ALL, "event")
        return record


@dataclass
class ReductionRecord:
    rank: int
    total: Optional[int] = None
    contributions: int = 0


class ReductionProgram:
    """Every rank sends its rank id to rank 0, which sums them with one ALL-source task."""

    def __call__(self, rt: Runtime) -> ReductionRecord:
        record = ReductionRecord(rt.get_rank())
        if record.rank == 0:
            def reduce_task(events, count):
                record.total = int(sum(int(event.data[0]) for event in events))
                record.contributions = count

            rt.submit_task(reduce_task, (ALL, "event"))
        rt.fire_event(record.rank, PayloadKind.INT, 1, 0, "event")
        return record


def _launch(config: RuntimeConfig, program, timeout: Optional[float]) -> list:
    if config.transport == "loopback":
        return run_loopback(config, program, timeout=timeout)
    if config.roster is None:
        return run_tcp_processes(config, program, timeout=timeout)
    return [run_rank(config, program, timeout=timeout)]


def barrier_demo(config: RuntimeConfig, timeout: Optional[float] = None) -> BarrierReport:
    records = _launch(config, BarrierProgram(), timeout)
    report = BarrierReport(records)
    if not report.ok:
        logger.warning(f"Barrier check failed: {records}")
    return report


def reduce_demo(config: RuntimeConfig, timeout: Optional[float] = None) -> Optional[int]:
    """Sum of rank ids as seen by rank 0, None when this process is not rank 0."""
    records = _launch(config, ReductionProgram(), timeout)
    for record in records:
        if record.rank == 0:
            return record.total
    return None


def expected_reduction(world_size: int) -> int:
    return world_size * (world_size - 1) // 2
