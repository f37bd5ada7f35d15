"""
Named locks owned by task instances.

A lock has at most one holder. Waiters queue FIFO and the lock is handed
directly to the head waiter on release, so a woken task never has to race
for it again.
"""
import logging
import threading
from collections import deque
from typing import Optional

from ..core.errors import UnlockNotHeld
from ..core.models import TaskInstance

logger = logging.getLogger(__name__)


class LockTable:
    """Lock name -> holder, plus a FIFO of waiting instances per name."""

    def __init__(self):
        self._mutex = threading.Lock()
        self._holders: dict[str, TaskInstance] = {}
        self._waiters: dict[str, deque] = {}

    def try_acquire(self, name: str, instance: TaskInstance) -> bool:
        """Take the lock if it is free (or already ours); never queues."""
        with self._mutex:
            return self._take_if_free(name, instance)

    def acquire_or_enqueue(self, name: str, instance: TaskInstance) -> bool:
        """
        Take the lock, or join its wait queue.

        Returns:
            True if the caller now holds the lock, False if it was queued and
            will be handed the lock by a later release
        """
        with self._mutex:
            if self._take_if_free(name, instance):
                return True
            self._waiters.setdefault(name, deque()).append(instance)
            return False

    def release(self, name: str, instance: TaskInstance) -> Optional[TaskInstance]:
        """
        Release `name` held by `instance`.

        Returns:
            The waiter that was handed the lock, if any

        Raises:
            UnlockNotHeld: instance is not the holder
        """
        with self._mutex:
            if self._holders.get(name) is not instance:
                raise UnlockNotHeld(f"lock {name!r} is not held by {instance!r}")
            return self._hand_off(name, instance)

    def release_all(self, instance: TaskInstance) -> tuple[list[str], list[TaskInstance]]:
        """
        Release every lock held by `instance`.

        Returns:
            (released names in canonical order, waiters that were handed a lock)
        """
        with self._mutex:
            names = sorted(instance.held_locks)
            woken = []
            for name in names:
                if self._holders.get(name) is instance:
                    waiter = self._hand_off(name, instance)
                    if waiter is not None:
                        woken.append(waiter)
            instance.held_locks.clear()
            return names, woken

    def holder(self, name: str) -> Optional[TaskInstance]:
        with self._mutex:
            return self._holders.get(name)

    def waiting(self, name: str) -> int:
        with self._mutex:
            return len(self._waiters.get(name, ()))

    def _take_if_free(self, name: str, instance: TaskInstance) -> bool:
        holder = self._holders.get(name)
        if holder is instance:
            return True
        if holder is not None:
            return False
        self._holders[name] = instance
        instance.held_locks.add(name)
        return True

    def _hand_off(self, name: str, instance: TaskInstance) -> Optional[TaskInstance]:
        instance.held_locks.discard(name)
        queue = self._waiters.get(name)
        if queue:
            waiter = queue.popleft()
            if not queue:
                del self._waiters[name]
            self._holders[name] = waiter
            waiter.held_locks.add(name)
            logger.debug(f"lock {name!r} handed to {waiter!r}")
            return waiter
        del self._holders[name]
        return None
