"""Benchmark programs: distributed BFS, collective demos and conformance suites."""
from .bfs import BfsResult, LevelSynchronousBfs, bfs_run, choose_roots
from .conformance import SUITES, ReferenceMatcher, SuiteResult, generate_scenario, run_matcher_scenario
from .demos import BARRIER_MESSAGE, BarrierReport, barrier_demo, expected_reduction, reduce_demo
from .graph import GENERATORS, DistributedGraph, RankPartition, generate_edges
from .metrics import format_rate, level_profile, teps_statistics, teps_trend
from .validate import ValidationReport, oracle_levels, validate_bfs

__all__ = [
    "BfsResult",
    "LevelSynchronousBfs",
    "bfs_run",
    "choose_roots",
    "SUITES",
    "ReferenceMatcher",
    "SuiteResult",
    "generate_scenario",
    "run_matcher_scenario",
    "BARRIER_MESSAGE",
    "BarrierReport",
    "barrier_demo",
    "expected_reduction",
    "reduce_demo",
    "GENERATORS",
    "DistributedGraph",
    "RankPartition",
    "generate_edges",
    "format_rate",
    "level_profile",
    "teps_statistics",
    "teps_trend",
    "ValidationReport",
    "oracle_levels",
    "validate_bfs",
]
