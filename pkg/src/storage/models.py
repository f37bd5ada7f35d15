"""
Data models for the bench-run history.
"""
from dataclasses import dataclass
from datetime import datetime
from typing import Optional


@dataclass
class BenchRun:
    """One recorded bench invocation (a BFS batch or a demo)."""
    command: str  # bfs, barrier-demo, reduce-demo, conformance
    transport: str
    ranks: int
    workers: int
    passed: bool
    scale: Optional[int] = None
    edge_factor: Optional[int] = None
    seed: Optional[int] = None
    generator: Optional[str] = None
    roots: int = 0
    harmonic_teps: Optional[float] = None
    median_teps: Optional[float] = None
    mean_time: Optional[float] = None
    detail: Optional[str] = None  # JSON blob of the full metrics
    recorded_at: Optional[datetime] = None
    id: Optional[int] = None
