"""
Rank roster: which host and port each rank listens on.

File format is one line per rank, `rank host port`, UTF-8. Blank lines and
lines starting with `#` are ignored.
"""
import logging
import socket
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from ..core.errors import RosterInvalid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RosterEntry:
    rank: int
    host: str
    port: int


@dataclass(frozen=True)
class RankRoster:
    """Ordered roster entries plus the rank this process plays."""
    entries: tuple[RosterEntry, ...]
    self_rank: int

    def __post_init__(self):
        ranks = [entry.rank for entry in self.entries]
        if ranks != list(range(len(ranks))):
            raise RosterInvalid(f"roster ranks must be 0..P-1 exactly once, got {ranks}")
        if not self.entries:
            raise RosterInvalid("roster is empty")
        if not 0 <= self.self_rank < len(self.entries):
            raise RosterInvalid(f"self rank {self.self_rank} is not in the roster")
        for entry in self.entries:
            if not 0 < entry.port < 65536:
                raise RosterInvalid(f"rank {entry.rank}: port {entry.port} out of range")

    @property
    def world_size(self) -> int:
        return len(self.entries)

    @property
    def me(self) -> RosterEntry:
        return self.entries[self.self_rank]

    def address(self, rank: int) -> tuple[str, int]:
        entry = self.entries[rank]
        return entry.host, entry.port

    def for_rank(self, rank: int) -> "RankRoster":
        return RankRoster(self.entries, rank)


def parse_roster(text: str, self_rank: int) -> RankRoster:
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise RosterInvalid(f"line {lineno}: expected 'rank host port', got {raw!r}")
        try:
            rank, port = int(parts[0]), int(parts[2])
        except ValueError:
            raise RosterInvalid(f"line {lineno}: rank and port must be integers") from None
        entries.append(RosterEntry(rank, parts[1], port))
    entries.sort(key=lambda entry: entry.rank)
    return RankRoster(tuple(entries), self_rank)


def load_roster(path: Union[str, Path], self_rank: int) -> RankRoster:
    """
    Read a roster file.

    Raises:
        RosterInvalid: missing file, malformed line, gaps or duplicate ranks
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise RosterInvalid(f"cannot read roster {path}: {exc}") from exc
    roster = parse_roster(text, self_rank)
    logger.debug(f"Loaded roster {path} with {roster.world_size} rank(s)")
    return roster


def write_roster(path: Union[str, Path], roster: RankRoster) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{e.rank} {e.host} {e.port}" for e in roster.entries]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def localhost_roster(world_size: int, host: str = "127.0.0.1") -> RankRoster:
    """Roster on free localhost ports, for single-machine multi-process runs."""
    ports = []
    probes = []
    try:
        for _ in range(world_size):
            probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            probe.bind((host, 0))
            probes.append(probe)
            ports.append(probe.getsockname()[1])
    finally:
        for probe in probes:
            probe.close()
    entries = tuple(RosterEntry(rank, host, port) for rank, port in enumerate(ports))
    return RankRoster(entries, 0)
