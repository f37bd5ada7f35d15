"""
Graph generation and rank partitioning.

Two generators:
- uniform: independent uniform endpoint pairs (multigraph)
- kronecker: Graph500 R-MAT bit-by-bit sampling with initiator (A, B, C),
  followed by a seeded vertex relabelling

Both draw exactly edge_factor * 2^scale pairs from numpy's PCG64 seeded
with `seed`, then drop self-loops. Duplicates are kept. The graph is
undirected: adjacency is stored in both directions as one CSR structure,
and vertex v is owned by rank v % P.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

GENERATORS = ("uniform", "kronecker")
KRONECKER_INITIATOR = (0.57, 0.19, 0.19)


def generate_edges(
    scale: int,
    edge_factor: int,
    seed: int,
    generator: str = "uniform",
    initiator: tuple[float, float, float] = KRONECKER_INITIATOR,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Draw an edge list.

    Returns:
        (sources, targets) as int64 arrays with self-loops removed
    """
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if edge_factor < 0:
        raise ValueError(f"edge_factor must be >= 0, got {edge_factor}")
    n = 1 << scale
    m = edge_factor * n
    rng = np.random.default_rng(seed)

    if generator == "uniform":
        src = rng.integers(0, n, size=m, dtype=np.int64)
        dst = rng.integers(0, n, size=m, dtype=np.int64)
    elif generator == "kronecker":
        a, b, c = initiator
        ab = a + b
        c_norm = c / (1.0 - ab)
        a_norm = a / ab
        src = np.zeros(m, dtype=np.int64)
        dst = np.zeros(m, dtype=np.int64)
        for bit in range(scale):
            src_bit = rng.random(m) > ab
            dst_bit = rng.random(m) > np.where(src_bit, c_norm, a_norm)
            src |= src_bit.astype(np.int64) << bit
            dst |= dst_bit.astype(np.int64) << bit
        relabel = rng.permutation(n).astype(np.int64)
        src, dst = relabel[src], relabel[dst]
    else:
        raise ValueError(f"generator must be one of {GENERATORS}, got {generator!r}")

    keep = src != dst
    return src[keep], dst[keep]


@dataclass
class RankPartition:
    """The vertices one rank owns and their adjacency lists."""
    rank: int
    world_size: int
    vertices: np.ndarray
    offsets: np.ndarray
    neighbors: np.ndarray

    def __len__(self) -> int:
        return len(self.vertices)

    def local_index(self, vertices: np.ndarray) -> np.ndarray:
        return vertices // self.world_size

    def adjacency(self, vertex: int) -> np.ndarray:
        index = vertex // self.world_size
        return self.neighbors[self.offsets[index]:self.offsets[index + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def expand(self, local: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Neighbours of the given local vertices.

        Returns:
            (neighbor ids, the global id of the vertex each one came from)
        """
        if len(local) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        starts = self.offsets[local]
        lengths = self.offsets[local + 1] - starts
        total = int(lengths.sum())
        if total == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        parents = np.repeat(self.vertices[local], lengths)
        # position of every output element inside self.neighbors
        run_starts = np.repeat(starts - np.cumsum(lengths) + lengths, lengths)
        positions = run_starts + np.arange(total)
        return self.neighbors[positions], parents


@dataclass
class DistributedGraph:
    """Undirected graph in CSR form, partitioned round-robin over ranks."""
    num_vertices: int
    sources: np.ndarray
    targets: np.ndarray
    world_size: int = 1
    scale: Optional[int] = None
    edge_factor: Optional[int] = None
    offsets: np.ndarray = field(init=False, repr=False)
    neighbors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.world_size < 1:
            raise ValueError(f"world_size must be >= 1, got {self.world_size}")
        self.sources = np.asarray(self.sources, dtype=np.int64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.sources.shape != self.targets.shape:
            raise ValueError("sources and targets must have the same length")
        if len(self.sources) and (
            min(self.sources.min(), self.targets.min()) < 0
            or max(self.sources.max(), self.targets.max()) >= self.num_vertices
        ):
            raise ValueError("edge endpoint outside 0..num_vertices-1")
        heads = np.concatenate([self.sources, self.targets])
        tails = np.concatenate([self.targets, self.sources])
        order = np.argsort(heads, kind="stable")
        self.neighbors = tails[order]
        counts = np.bincount(heads, minlength=self.num_vertices)
        self.offsets = np.zeros(self.num_vertices + 1, dtype=np.int64)
        np.cumsum(counts, out=self.offsets[1:])

    @classmethod
    def generate(
        cls,
        scale: int,
        edge_factor: int,
        seed: int,
        world_size: int = 1,
        generator: str = "uniform",
    ) -> "DistributedGraph":
        src, dst = generate_edges(scale, edge_factor, seed, generator)
        graph = cls(1 << scale, src, dst, world_size, scale, edge_factor)
        logger.info(
            f"Generated {generator} graph: scale {scale}, {graph.num_vertices} vertices, "
            f"{graph.num_edges} edges, {world_size} rank(s)"
        )
        return graph

    @classmethod
    def from_edges(cls, num_vertices: int, edges: list[tuple[int, int]], world_size: int = 1) -> "DistributedGraph":
        pairs = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        keep = pairs[:, 0] != pairs[:, 1]
        return cls(num_vertices, pairs[keep, 0], pairs[keep, 1], world_size)

    @property
    def num_edges(self) -> int:
        return len(self.sources)

    def owner(self, vertex: int) -> int:
        return int(vertex) % self.world_size

    def degree(self, vertex: int) -> int:
        return int(self.offsets[vertex + 1] - self.offsets[vertex])

    def adjacency(self, vertex: int) -> np.ndarray:
        return self.neighbors[self.offsets[vertex]:self.offsets[vertex + 1]]

    def partition(self, rank: int) -> RankPartition:
        vertices = np.arange(rank, self.num_vertices, self.world_size, dtype=np.int64)
        starts, ends = self.offsets[vertices], self.offsets[vertices + 1]
        lengths = ends - starts
        offsets = np.zeros(len(vertices) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        pieces = [self.neighbors[s:e] for s, e in zip(starts, ends)]
        neighbors = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.int64)
        return RankPartition(rank, self.world_size, vertices, offsets, neighbors)

    def repartition(self, world_size: int) -> "DistributedGraph":
        return DistributedGraph(
            self.num_vertices, self.sources, self.targets, world_size, self.scale, self.edge_factor
        )

    def edge_multiset(self) -> np.ndarray:
        """All (vertex, neighbor) adjacency entries over every rank, sorted."""
        pairs = []
        for rank in range(self.world_size):
            part = self.partition(rank)
            heads = np.repeat(part.vertices, part.degrees())
            pairs.append(np.column_stack([heads, part.neighbors]))
        merged = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
        order = np.lexsort((merged[:, 1], merged[:, 0]))
        return merged[order]

    def non_isolated(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.offsets) > 0)
