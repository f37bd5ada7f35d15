"""
Level-synchronous distributed BFS built from tasks and events.

Per level n every rank holds a named persistent task `visit_n` that consumes
batches of (child, parent) pairs from (ANY, "visit_n"). Every rank sends
exactly one batch to every rank per level, so after P activations the level
is complete locally: the rank removes `visit_n` and fires its new-visit count
to ALL as "level_done_n". A transient task on (ALL, "level_done_n") sums the
counts. A zero sum ends the search; otherwise the rank expands its new
frontier and fires the "visit_(n+1)" batches. The first activation of
`visit_n` submits `visit_(n+1)`.

When the search ends each rank sends its parents and levels to rank 0 as
"bfs_gather", where they are merged into one BfsResult.
"""
import logging
import time
from contextlib import nullcontext
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from ..core.models import ALL, ANY, PayloadKind
from ..runtime import Runtime, RuntimeConfig, run_loopback, run_rank, run_tcp_processes
from .graph import DistributedGraph, RankPartition

logger = logging.getLogger(__name__)

BFS_LOCK = "bfs"
UNSET = -1


def visit_id(level: int) -> str:
    return f"visit_{level}"


def level_done_id(level: int) -> str:
    return f"level_done_{level}"


@dataclass
class BfsResult:
    """Merged outcome of one search, available on rank 0."""
    root: int
    parent: np.ndarray
    level: np.ndarray
    level_counts: list[int]
    traversed_edges: int
    elapsed: float
    world_size: int = 1

    @property
    def teps(self) -> float:
        return self.traversed_edges / self.elapsed if self.elapsed > 0 else 0.0

    @property
    def visited(self) -> int:
        return int(np.count_nonzero(self.parent != UNSET))

    @property
    def tree_edges(self) -> int:
        return max(self.visited - 1, 0)


@dataclass
class RankBfsState:
    """One rank's search state; touched only under BFS_LOCK when workers > 1."""
    rank: int
    world_size: int
    partition: RankPartition
    parent: np.ndarray
    level: np.ndarray
    frontiers: dict = field(default_factory=dict)
    batches: dict = field(default_factory=dict)
    registered: set = field(default_factory=set)
    level_counts: list = field(default_factory=list)
    traversed_edges: int = 0
    started: float = 0.0
    finished: float = 0.0
    result: Optional[BfsResult] = None


class LevelSynchronousBfs:
    """
    Per-rank main function for one search.

    Instances pickle, so the same object drives loopback threads and
    TCP rank processes.

    Args:
        graph: Graph partitioned for the run's world size
        root: Search root
        use_locks: Guard per-rank state with a named lock
    """

    def __init__(self, graph: DistributedGraph, root: int, use_locks: bool = False):
        if not 0 <= root < graph.num_vertices:
            raise ValueError(f"root {root} outside 0..{graph.num_vertices - 1}")
        self.graph = graph
        self.root = root
        self.use_locks = use_locks

    def __call__(self, rt: Runtime) -> RankBfsState:
        rank, world = rt.get_rank(), rt.get_world_size()
        if world != self.graph.world_size:
            raise ValueError(f"graph is partitioned for {self.graph.world_size} ranks, run has {world}")
        part = self.graph.partition(rank)
        state = RankBfsState(
            rank=rank,
            world_size=world,
            partition=part,
            parent=np.full(len(part), UNSET, dtype=np.int64),
            level=np.full(len(part), UNSET, dtype=np.int64),
        )

        if rank == 0:
            rt.submit_task(partial(self._on_gather, rt, state), (ALL, "bfs_gather"))
        self._register_level(rt, state, 0)
        rt.submit_task(partial(self._on_level_done, rt, state, 0), (ALL, level_done_id(0)))

        state.started = time.perf_counter()
        root_owner = self.graph.owner(self.root)
        for target in range(world):
            pairs = [self.root, self.root] if rank == root_owner and target == root_owner else []
            rt.fire_event(np.asarray(pairs, dtype=np.int64), PayloadKind.LONG, None, target, visit_id(0))
        return state

    def _guard(self, rt: Runtime, state: RankBfsState):
        if not self.use_locks:
            return nullcontext()
        return _TaskLock(rt, BFS_LOCK)

    def _register_level(self, rt: Runtime, state: RankBfsState, level: int) -> None:
        if level in state.registered:
            return
        state.registered.add(level)
        rt.submit_named_persistent_task(
            visit_id(level), partial(self._on_visit, rt, state, level), (ANY, visit_id(level))
        )

    def _on_visit(self, rt: Runtime, state: RankBfsState, level: int, events, count) -> None:
        with self._guard(rt, state):
            self._register_level(rt, state, level + 1)
            pairs = events[0].data.reshape(-1, 2)
            frontier = state.frontiers.setdefault(level, [])
            if len(pairs):
                children, parents = pairs[:, 0], pairs[:, 1]
                local = state.partition.local_index(children)
                fresh = state.parent[local] == UNSET
                local, first = np.unique(local[fresh], return_index=True)
                state.parent[local] = parents[fresh][first]
                state.level[local] = level
                frontier.append(local)
            state.batches[level] = state.batches.get(level, 0) + 1
            complete = state.batches[level] == state.world_size
            new_count = sum(len(chunk) for chunk in frontier)
        if complete:
            rt.remove_persistent_task(visit_id(level))
            rt.fire_event([new_count], PayloadKind.LONG, 1, ALL, level_done_id(level))

    def _on_level_done(self, rt: Runtime, state: RankBfsState, level: int, events, count) -> None:
        total = int(sum(int(event.data[0]) for event in events))
        with self._guard(rt, state):
            state.level_counts.append(total)
            if total == 0:
                state.finished = time.perf_counter()
                done = True
            else:
                done = False
                chunks = state.frontiers.pop(level, [])
                local = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
                state.traversed_edges += int(state.partition.degrees()[local].sum())
                neighbors, parents = state.partition.expand(local)
                owners = neighbors % state.world_size
                batches = [
                    np.column_stack([neighbors[owners == target], parents[owners == target]]).reshape(-1)
                    for target in range(state.world_size)
                ]
        if done:
            rt.remove_persistent_task(visit_id(level + 1))
            self._send_gather(rt, state)
            return

        rt.submit_task(partial(self._on_level_done, rt, state, level + 1), (ALL, level_done_id(level + 1)))
        for target, batch in enumerate(batches):
            rt.fire_event(batch, PayloadKind.LONG, None, target, visit_id(level + 1))

    def _send_gather(self, rt: Runtime, state: RankBfsState) -> None:
        elapsed_ns = int((state.finished - state.started) * 1e9)
        header = np.array([elapsed_ns, state.traversed_edges], dtype=np.int64)
        payload = np.concatenate([header, state.parent, state.level])
        rt.fire_event(payload, PayloadKind.LONG, None, 0, "bfs_gather")

    def _on_gather(self, rt: Runtime, state: RankBfsState, events, count) -> None:
        n = self.graph.num_vertices
        parent = np.full(n, UNSET, dtype=np.int64)
        level = np.full(n, UNSET, dtype=np.int64)
        elapsed = 0.0
        traversed = 0
        for source, event in enumerate(events):
            data = event.data
            vertices = np.arange(source, n, state.world_size, dtype=np.int64)
            k = len(vertices)
            elapsed = max(elapsed, data[0] / 1e9)
            traversed += int(data[1])
            parent[vertices] = data[2:2 + k]
            level[vertices] = data[2 + k:2 + 2 * k]
        state.result = BfsResult(
            root=self.root,
            parent=parent,
            level=level,
            level_counts=list(state.level_counts),
            traversed_edges=traversed,
            elapsed=elapsed,
            world_size=state.world_size,
        )
        logger.debug(f"[rank 0] gathered BFS from {count} rank(s): {state.result.visited} visited")


class _TaskLock:
    """Context manager around the runtime's named task locks."""

    def __init__(self, rt: Runtime, name: str):
        self.rt = rt
        self.name = name

    def __enter__(self):
        self.rt.lock(self.name)
        return self

    def __exit__(self, *exc):
        self.rt.unlock(self.name)
        return False


def bfs_run(
    graph: DistributedGraph,
    root: int,
    config: RuntimeConfig,
    timeout: Optional[float] = None,
) -> Optional[BfsResult]:
    """
    Run one distributed search with the transport named in `config`.

    Returns:
        The merged result, or None when this process joined a roster as a
        rank other than 0

    Raises:
        RuntimeError: rank 0 finished without a merged result
    """
    graph = graph if graph.world_size == config.ranks else graph.repartition(config.ranks)
    program = LevelSynchronousBfs(graph, root, use_locks=config.workers > 1)
    if config.transport == "loopback":
        states = run_loopback(config, program, timeout=timeout)
    elif config.roster is None:
        states = run_tcp_processes(config, program, timeout=timeout)
    else:
        states = [run_rank(config, program, timeout=timeout)]
    if states[0].rank != 0:
        return None
    result = states[0].result
    if result is None:
        raise RuntimeError(f"rank 0 finished the search from {root} without a result")
    logger.info(
        f"BFS from {root}: {result.visited} vertices in {len(result.level_counts) - 1} level(s), "
        f"{result.traversed_edges} edges, {result.elapsed:.4f}s"
    )
    return result


def choose_roots(graph: DistributedGraph, count: int, seed: int) -> list[int]:
    """Distinct non-isolated roots, deterministic for (graph, seed)."""
    candidates = graph.non_isolated()
    if len(candidates) == 0:
        return [0]
    rng = np.random.default_rng(seed)
    picked = rng.permutation(candidates)[:count]
    return [int(v) for v in picked]


