"""Public runtime API: configuration, rank contexts, launchers."""
from .config import RuntimeConfig
from .launcher import run_loopback, run_rank, run_tcp_processes
from .runtime import Runtime, bind_runtime, current_runtime, init
from .termination import (
    LocalStatus,
    TerminationDetector,
    TerminationToken,
    TokenColor,
    TokenPhase,
)

__all__ = [
    "RuntimeConfig",
    "Runtime",
    "bind_runtime",
    "current_runtime",
    "init",
    "run_loopback",
    "run_rank",
    "run_tcp_processes",
    "LocalStatus",
    "TerminationDetector",
    "TerminationToken",
    "TokenColor",
    "TokenPhase",
]
