"""SQLite storage layer."""
from .models import BenchRun
from .database import (
    init_db,
    record_run,
    get_runs,
    get_teps_history,
)

__all__ = [
    "BenchRun",
    "init_db",
    "record_run",
    "get_runs",
    "get_teps_history",
]
