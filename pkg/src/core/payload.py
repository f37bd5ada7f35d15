"""
Payload snapshots.

Firing copies user data into an immutable byte buffer so the caller may
reuse its own buffer immediately. Flat arrays of one element kind only.
"""
import struct
from typing import Any, Optional

import numpy as np

from .models import PayloadKind

_HANDLE = struct.Struct("<Q")


def pack_payload(data: Any, kind: PayloadKind, count: Optional[int] = None) -> tuple[bytes, int, Any]:
    """
    Snapshot `data` as `count` elements of `kind`.

    Args:
        data: Scalar, sequence or numpy array (any object for ADDRESS)
        kind: Element kind
        count: Number of elements to take; defaults to all of `data`

    Returns:
        (payload bytes, element count, referenced object for ADDRESS else None)
    """
    kind = PayloadKind(kind)
    if kind is PayloadKind.NONE:
        if count:
            raise ValueError("NONE payloads have zero elements")
        return b"", 0, None

    if kind is PayloadKind.ADDRESS:
        if count not in (None, 1):
            raise ValueError("ADDRESS payloads carry exactly one handle")
        return _HANDLE.pack(id(data) & 0xFFFFFFFFFFFFFFFF), 1, data

    values = np.asarray(data)
    if kind is PayloadKind.BOOL:
        values = values.astype(bool)
    values = np.ascontiguousarray(values, dtype=kind.dtype).reshape(-1)
    if count is None:
        count = values.size
    if count < 0 or count > values.size:
        raise ValueError(f"asked for {count} elements but data holds {values.size}")
    return values[:count].tobytes(), int(count), None


def unpack_payload(kind: PayloadKind, payload: bytes) -> np.ndarray:
    """Read-only view of a serializable payload."""
    kind = PayloadKind(kind)
    if kind.dtype is None:
        raise ValueError(f"{kind.name} payloads have no array form")
    array = np.frombuffer(payload, dtype=kind.dtype)
    if kind is PayloadKind.BOOL:
        array = array.astype(bool)
        array.flags.writeable = False
    return array
