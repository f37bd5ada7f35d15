"""Worker pool, ready queue and named locks."""
from .locks import LockTable
from .pool import ProgressMode, ReadyQueue, WorkerPool, current_instance

__all__ = [
    "LockTable",
    "ProgressMode",
    "ReadyQueue",
    "WorkerPool",
    "current_instance",
]
