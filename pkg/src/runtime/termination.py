"""
Ring-token termination detection.

Rank 0 starts a probe once it is finalising. The token travels
0 -> 1 -> ... -> P-1 -> 0; every rank adds its cumulative
(non-persistent fired - non-persistent consumed) to the token's deficit and
turns it Black if it is not quiescent, has not reached finalise yet, or
shows any activity since the token's previous visit. Rank 0 declares
quiescence after two consecutive rounds that come back White with a zero
deficit; the second clean round proves no rank changed its counters
between the two waves.

Shutdown is a two-step exchange so no rank closes its connections while a
peer may still write to it: rank 0 sends a verdict to every rank, each rank
acknowledges, and once all acknowledgements are in rank 0 sends a release.
"""
import logging
import threading
import time
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional

import numpy as np

from ..core.models import PayloadKind
from ..transport.base import FrameKind, TransportFrame

logger = logging.getLogger(__name__)

CONFIRM_ROUNDS = 2


class TokenColor(IntEnum):
    WHITE = 0
    BLACK = 1


class TokenPhase(IntEnum):
    PROBE = 0
    VERDICT = 1
    ACK = 2
    RELEASE = 3


@dataclass
class TerminationToken:
    color: TokenColor = TokenColor.WHITE
    global_deficit: int = 0
    round: int = 0
    phase: TokenPhase = TokenPhase.PROBE

    def to_frame(self, source_rank: int) -> TransportFrame:
        values = np.array(
            [int(self.color), self.global_deficit, self.round, int(self.phase)], dtype="<i8"
        )
        return TransportFrame(
            frame_kind=FrameKind.TOKEN,
            source_rank=source_rank,
            sequence=self.round,
            identifier="",
            payload_kind=PayloadKind.LONG,
            element_count=4,
            payload=values.tobytes(),
        )

    @classmethod
    def from_frame(cls, frame: TransportFrame) -> "TerminationToken":
        color, deficit, round_, phase = np.frombuffer(frame.payload, dtype="<i8").tolist()
        return cls(TokenColor(color), deficit, round_, TokenPhase(phase))


@dataclass(frozen=True)
class LocalStatus:
    """What one rank reports when the token visits."""
    fired: int
    consumed: int
    quiescent: bool
    finalising: bool
    activity: tuple = ()
    reasons: tuple = ()


@dataclass
class DetectorStats:
    rounds_started: int = 0
    rounds_white: int = 0
    tokens_forwarded: int = 0
    last_reasons: list = field(default_factory=list)


class TerminationDetector:
    """
    Per-rank half of the ring protocol.

    Args:
        rank: This rank
        world_size: Ring size
        probe: Returns the rank's LocalStatus at the moment of a visit
        send: Sends a token to a rank
        token_interval: Minimum seconds between rounds started by rank 0
        confirm_rounds: Consecutive clean rounds needed for a verdict
    """

    def __init__(
        self,
        rank: int,
        world_size: int,
        probe: Callable[[], LocalStatus],
        send: Callable[[int, TerminationToken], None],
        token_interval: float = 0.002,
        confirm_rounds: int = CONFIRM_ROUNDS,
        on_verdict: Optional[Callable[[], None]] = None,
    ):
        self.rank = rank
        self.world_size = world_size
        self.token_interval = token_interval
        self.confirm_rounds = confirm_rounds
        self.verdict = threading.Event()
        self.released = threading.Event()
        self.stats = DetectorStats()
        self._probe = probe
        self._send = send
        self._on_verdict = on_verdict
        self._mutex = threading.Lock()
        self._last_activity: Optional[tuple] = None
        self._clean_rounds = 0
        self._round = 0
        self._token_out = False
        self._next_round_at = 0.0
        self._acks = 0

    @property
    def next_rank(self) -> int:
        return (self.rank + 1) % self.world_size

    def tick(self, now: Optional[float] = None) -> None:
        """Rank 0 starts a new probe round when none is circulating."""
        if self.rank != 0 or self.verdict.is_set():
            return
        now = time.monotonic() if now is None else now
        with self._mutex:
            if self._token_out or now < self._next_round_at:
                return
            status = self._probe()
            if not status.finalising:
                return
            self._token_out = True
            self._round += 1
            self.stats.rounds_started += 1
            token = TerminationToken(round=self._round)
        self._send(self.next_rank, token)

    def on_token(self, token: TerminationToken) -> None:
        if token.phase is TokenPhase.PROBE:
            if self.rank == 0:
                self._probe_returned(token)
            else:
                self._forward(token)
        elif token.phase is TokenPhase.VERDICT:
            self._announce()
            self._send(0, TerminationToken(round=token.round, phase=TokenPhase.ACK))
        elif token.phase is TokenPhase.ACK:
            self._acked(token)
        elif token.phase is TokenPhase.RELEASE:
            self.released.set()

    # --- ring --------------------------------------------------------------

    def _visit(self, token: TerminationToken) -> TerminationToken:
        status = self._probe()
        with self._mutex:
            changed = self._last_activity is not None and status.activity != self._last_activity
            self._last_activity = status.activity
        reasons = list(status.reasons)
        if not status.finalising:
            reasons.append("not finalising")
        if changed:
            reasons.append("activity since last visit")
        black = bool(reasons) or not status.quiescent
        self.stats.last_reasons = reasons
        return TerminationToken(
            color=TokenColor.BLACK if black or token.color is TokenColor.BLACK else TokenColor.WHITE,
            global_deficit=token.global_deficit + status.fired - status.consumed,
            round=token.round,
            phase=TokenPhase.PROBE,
        )

    def _forward(self, token: TerminationToken) -> None:
        token = self._visit(token)
        self.stats.tokens_forwarded += 1
        logger.debug(
            f"[rank {self.rank}] token round {token.round} "
            f"{token.color.name} deficit {token.global_deficit}"
        )
        self._send(self.next_rank, token)

    def _probe_returned(self, token: TerminationToken) -> None:
        token = self._visit(token)
        clean = token.color is TokenColor.WHITE and token.global_deficit == 0
        with self._mutex:
            self._token_out = False
            self._next_round_at = time.monotonic() + self.token_interval
            self._clean_rounds = self._clean_rounds + 1 if clean else 0
            done = self._clean_rounds >= self.confirm_rounds
        if clean:
            self.stats.rounds_white += 1
        elif token.global_deficit:
            self.stats.last_reasons = self.stats.last_reasons + [
                f"global deficit {token.global_deficit}"
            ]
        logger.debug(
            f"[rank 0] round {token.round} returned {token.color.name}, "
            f"deficit {token.global_deficit}, clean streak {self._clean_rounds}"
        )
        if done:
            logger.info(f"[rank 0] quiescence confirmed after round {token.round}")
            self._announce()
            if self.world_size == 1:
                self.released.set()
            for rank in range(1, self.world_size):
                self._send(rank, TerminationToken(round=token.round, phase=TokenPhase.VERDICT))

    # --- shutdown exchange -------------------------------------------------

    def _announce(self) -> None:
        if self.verdict.is_set():
            return
        self.verdict.set()
        if self._on_verdict is not None:
            self._on_verdict()

    def _acked(self, token: TerminationToken) -> None:
        with self._mutex:
            self._acks += 1
            complete = self._acks == self.world_size - 1
        if complete:
            for rank in range(1, self.world_size):
                self._send(rank, TerminationToken(round=token.round, phase=TokenPhase.RELEASE))
            self.released.set()
