"""
Exception hierarchy for the runtime.

Every failure the public API can raise derives from EdatError. Validation
failures also derive from ValueError and state failures from RuntimeError,
so callers can catch either the domain type or the builtin one.
"""


class EdatError(Exception):
    """Base class for all runtime errors."""


# --- rank resolution -------------------------------------------------------

class ConcreteOutOfRange(EdatError, ValueError):
    """A concrete rank is not below the world size."""


class AnyNotResolvable(EdatError, ValueError):
    """ANY was used where a concrete set of ranks is required."""


# --- matcher ---------------------------------------------------------------

class DuplicatePersistentName(EdatError, ValueError):
    """A live persistent task already uses this name."""


class ZeroDependencyPersistent(EdatError, ValueError):
    """A persistent task was submitted without any dependency."""


# --- scheduler -------------------------------------------------------------

class CalledOutsideTask(EdatError, RuntimeError):
    """A task-only call (wait, retrieve, lock) was made from the main context."""


class UnlockNotHeld(EdatError, RuntimeError):
    """The calling task does not hold the lock it tried to release."""


# --- transport -------------------------------------------------------------

class UnknownRank(EdatError, ValueError):
    """A frame was addressed to a rank outside the roster."""


class TransportClosed(EdatError, ConnectionError):
    """The transport (or a peer connection) is no longer usable."""


class AddressNotSerializable(EdatError, ValueError):
    """An ADDRESS payload was about to be encoded for the wire."""


class MalformedFrame(EdatError, ValueError):
    """Bytes on the wire do not decode to a valid frame."""


class NothingQueued(EdatError, RuntimeError):
    """A deterministic loopback step found no frame to deliver."""


class RosterInvalid(EdatError, ValueError):
    """The rank roster is missing, unreadable or inconsistent."""


class BindFailure(EdatError, OSError):
    """The TCP transport could not listen on its roster address."""


# --- runtime ---------------------------------------------------------------

class NotInitialized(EdatError, RuntimeError):
    """The runtime was used before init() or after finalise()."""


class AlreadyInitialized(EdatError, RuntimeError):
    """init() was called twice on the same rank context."""


class AddressToRemote(EdatError, ValueError):
    """An ADDRESS payload was fired at a rank other than the local one."""


class ConfigError(EdatError, ValueError):
    """A configuration value is missing or invalid."""


class TerminationTimeout(EdatError, TimeoutError):
    """finalise() gave up waiting for global quiescence."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
