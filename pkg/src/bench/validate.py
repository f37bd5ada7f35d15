"""
BFS tree validation against a sequential oracle.

Checks:
1. parent(root) = root
2. every parent edge exists in the graph
3. depths derived by following parents are finite (no cycles) and equal the
   oracle's BFS distances, so depth differs by exactly 1 across tree edges
4. exactly the vertices the oracle reaches have a parent
5. reported per-vertex levels, when given, match the derived depths
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import DistributedGraph

logger = logging.getLogger(__name__)

UNSET = -1


@dataclass
class ValidationReport:
    valid: bool
    errors: list[str] = field(default_factory=list)
    reachable: int = 0
    visited: int = 0
    oracle_edges: int = 0

    def __bool__(self) -> bool:
        return self.valid


def oracle_levels(graph: DistributedGraph, root: int) -> np.ndarray:
    """Sequential frontier BFS; -1 marks unreachable vertices."""
    levels = np.full(graph.num_vertices, UNSET, dtype=np.int64)
    levels[root] = 0
    frontier = np.array([root], dtype=np.int64)
    depth = 0
    while len(frontier):
        starts, ends = graph.offsets[frontier], graph.offsets[frontier + 1]
        pieces = [graph.neighbors[s:e] for s, e in zip(starts, ends)]
        if not pieces:
            break
        reached = np.unique(np.concatenate(pieces))
        reached = reached[levels[reached] == UNSET]
        depth += 1
        levels[reached] = depth
        frontier = reached
    return levels


def oracle_traversed_edges(graph: DistributedGraph, levels: np.ndarray) -> int:
    """Adjacency entries examined when every reachable vertex is expanded once."""
    degrees = np.diff(graph.offsets)
    return int(degrees[levels != UNSET].sum())


def tree_depths(parent: np.ndarray, root: int) -> Optional[np.ndarray]:
    """Depth of every vertex in the parent tree, or None if parents loop."""
    n = len(parent)
    depth = np.full(n, UNSET, dtype=np.int64)
    depth[root] = 0
    pending = np.flatnonzero((parent != UNSET) & (np.arange(n) != root))
    while len(pending):
        ready = depth[parent[pending]] != UNSET
        if not ready.any():
            return None
        done = pending[ready]
        depth[done] = depth[parent[done]] + 1
        pending = pending[~ready]
    return depth


def validate_bfs(
    graph: DistributedGraph,
    parent: np.ndarray,
    root: int,
    levels: Optional[np.ndarray] = None,
    traversed_edges: Optional[int] = None,
) -> ValidationReport:
    """
    Validate a BFS parent array.

    Returns:
        ValidationReport, truthy when every check passes
    """
    parent = np.asarray(parent, dtype=np.int64)
    errors = []
    n = graph.num_vertices
    if parent.shape != (n,):
        return ValidationReport(False, [f"parent has shape {parent.shape}, expected ({n},)"])

    oracle = oracle_levels(graph, root)
    report = ValidationReport(
        valid=True,
        reachable=int(np.count_nonzero(oracle != UNSET)),
        visited=int(np.count_nonzero(parent != UNSET)),
        oracle_edges=oracle_traversed_edges(graph, oracle),
    )

    if parent[root] != root:
        errors.append(f"parent of root {root} is {parent[root]}")

    bad_range = (parent < UNSET) | (parent >= n)
    if bad_range.any():
        errors.append(f"{int(bad_range.sum())} parent id(s) outside the vertex range")
    else:
        children = np.flatnonzero((parent != UNSET) & (np.arange(n) != root))
        tree_keys = children * n + parent[children]
        heads = np.repeat(np.arange(n, dtype=np.int64), np.diff(graph.offsets))
        edge_keys = np.unique(heads * n + graph.neighbors)
        missing = ~np.isin(tree_keys, edge_keys)
        if missing.any():
            v = int(children[missing][0])
            errors.append(f"{int(missing.sum())} parent edge(s) not in the graph, e.g. {v} -> {parent[v]}")

        depth = tree_depths(parent, root) if parent[root] == root else None
        if depth is None:
            errors.append("parent pointers do not form a tree rooted at the root")
        else:
            wrong = np.flatnonzero((depth != oracle) & (parent != UNSET))
            if len(wrong):
                v = int(wrong[0])
                errors.append(
                    f"{len(wrong)} vertex depth(s) differ from BFS distance, e.g. {v}: {depth[v]} vs {oracle[v]}"
                )
            if levels is not None:
                levels = np.asarray(levels, dtype=np.int64)
                mismatch = np.flatnonzero(levels != depth)
                if len(mismatch):
                    errors.append(f"{len(mismatch)} reported level(s) disagree with tree depth")

    unreached = np.flatnonzero((oracle != UNSET) & (parent == UNSET))
    if len(unreached):
        errors.append(f"{len(unreached)} reachable vertex(es) without parent, e.g. {int(unreached[0])}")
    phantom = np.flatnonzero((oracle == UNSET) & (parent != UNSET))
    if len(phantom):
        errors.append(f"{len(phantom)} unreachable vertex(es) with a parent, e.g. {int(phantom[0])}")

    if traversed_edges is not None and traversed_edges != report.oracle_edges:
        errors.append(f"traversed {traversed_edges} edges, oracle examined {report.oracle_edges}")

    report.errors = errors
    report.valid = not errors
    if errors:
        logger.warning(f"BFS from {root} INVALID: {'; '.join(errors)}")
    return report
