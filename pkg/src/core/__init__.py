"""Domain types, payload snapshots and errors shared by all modules."""
from .errors import EdatError
from .models import (
    ALL,
    ANY,
    SELF,
    DependencyDescriptor,
    Event,
    PayloadKind,
    RankKind,
    RankSpec,
    TaskDescriptor,
    TaskInstance,
    TaskState,
    as_dependency,
    as_rank_spec,
    expand_dependencies,
    resolve_rank,
)
from .payload import pack_payload, unpack_payload

__all__ = [
    "ALL",
    "ANY",
    "SELF",
    "DependencyDescriptor",
    "EdatError",
    "Event",
    "PayloadKind",
    "RankKind",
    "RankSpec",
    "TaskDescriptor",
    "TaskInstance",
    "TaskState",
    "as_dependency",
    "as_rank_spec",
    "expand_dependencies",
    "pack_payload",
    "resolve_rank",
    "unpack_payload",
]
