"""
TCP transport: one process per rank, full mesh.

The lower rank of every pair listens and the higher rank dials it, then
sends a 4-byte little-endian hello carrying its rank. Each peer connection
gets a reader thread (frames into the shared inbox) and a writer thread
draining an unbounded outbox, so `send` never blocks on the network.
"""
import logging
import queue
import socket
import struct
import threading
import time
from typing import Optional

from ..core.errors import BindFailure, MalformedFrame, TransportClosed
from .base import BaseTransport, TransportFrame
from .codec import HEADER_LEN, decode_frame, encode_frame, parse_header
from .roster import RankRoster

logger = logging.getLogger(__name__)

_HELLO = struct.Struct("<I")
_DIAL_RETRY = 0.05


class _PeerLost:
    def __init__(self, rank: int, reason: str):
        self.rank = rank
        self.reason = reason


class _Peer:
    """Socket plus writer queue for one remote rank."""

    def __init__(self, rank: int, sock: socket.socket):
        self.rank = rank
        self.sock = sock
        self.outbox: queue.Queue = queue.Queue()
        self.broken = False
        self.reader: Optional[threading.Thread] = None
        self.writer: Optional[threading.Thread] = None


class TcpTransport(BaseTransport):
    """
    Frames over persistent TCP connections between every pair of ranks.

    Args:
        roster: Rank addresses; roster.self_rank is this process's rank
        connect_timeout: Seconds to keep retrying dials and waiting for peers
    """

    KIND = "tcp"

    def __init__(self, roster: RankRoster, connect_timeout: float = 10.0):
        super().__init__(roster.self_rank, roster.world_size)
        self.roster = roster
        self.connect_timeout = connect_timeout
        self._inbox: queue.Queue = queue.Queue()
        self._peers: dict[int, _Peer] = {}
        self._peers_ready = threading.Condition()
        self._listener: Optional[socket.socket] = None
        self._acceptor: Optional[threading.Thread] = None
        self._shutting_down = False
        self._closed = False

    # --- setup -------------------------------------------------------------

    def connect(self) -> None:
        """
        Bind, accept higher ranks, dial lower ranks.

        Raises:
            BindFailure: own roster address cannot be bound
            TransportClosed: a peer could not be reached in time
        """
        host, port = self.roster.address(self.rank)
        expected_inbound = self.world_size - 1 - self.rank
        if expected_inbound:
            try:
                self._listener = socket.create_server((host, port), reuse_port=False)
            except OSError as exc:
                raise BindFailure(f"rank {self.rank} cannot bind {host}:{port}: {exc}") from exc
            self._acceptor = threading.Thread(
                target=self._accept_loop,
                args=(expected_inbound,),
                name=f"edat-r{self.rank}-accept",
                daemon=True,
            )
            self._acceptor.start()

        deadline = time.monotonic() + self.connect_timeout
        for peer_rank in range(self.rank):
            self._register(peer_rank, self._dial(peer_rank, deadline))

        with self._peers_ready:
            while len(self._peers) < self.world_size - 1:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    missing = sorted(set(range(self.world_size)) - set(self._peers) - {self.rank})
                    raise TransportClosed(f"rank {self.rank} never heard from ranks {missing}")
                self._peers_ready.wait(remaining)
        logger.info(f"[rank {self.rank}] tcp mesh connected to {self.world_size - 1} peer(s)")

    def _dial(self, peer_rank: int, deadline: float) -> socket.socket:
        address = self.roster.address(peer_rank)
        while True:
            try:
                sock = socket.create_connection(address, timeout=self.connect_timeout)
                break
            except OSError as exc:
                if time.monotonic() >= deadline:
                    raise TransportClosed(
                        f"rank {self.rank} cannot reach rank {peer_rank} at {address}: {exc}"
                    ) from exc
                time.sleep(_DIAL_RETRY)
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.sendall(_HELLO.pack(self.rank))
        return sock

    def _accept_loop(self, expected: int) -> None:
        accepted = 0
        while accepted < expected and not self._closed:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            try:
                sock.settimeout(self.connect_timeout)
                hello = _recv_exactly(sock, _HELLO.size)
                sock.settimeout(None)
            except (OSError, ConnectionError) as exc:
                logger.warning(f"[rank {self.rank}] dropped connection without hello: {exc}")
                sock.close()
                continue
            (peer_rank,) = _HELLO.unpack(hello)
            if not self.rank < peer_rank < self.world_size or peer_rank in self._peers:
                logger.warning(f"[rank {self.rank}] rejected hello from rank {peer_rank}")
                sock.close()
                continue
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._register(peer_rank, sock)
            accepted += 1

    def _register(self, peer_rank: int, sock: socket.socket) -> None:
        peer = _Peer(peer_rank, sock)
        peer.reader = threading.Thread(
            target=self._read_loop, args=(peer,), name=f"edat-r{self.rank}-rx{peer_rank}", daemon=True
        )
        peer.writer = threading.Thread(
            target=self._write_loop, args=(peer,), name=f"edat-r{self.rank}-tx{peer_rank}", daemon=True
        )
        with self._peers_ready:
            self._peers[peer_rank] = peer
            self._peers_ready.notify_all()
        peer.reader.start()
        peer.writer.start()
        logger.debug(f"[rank {self.rank}] connected to rank {peer_rank}")

    # --- data path ---------------------------------------------------------

    def send(self, target: int, frame: TransportFrame) -> None:
        self.check_target(target)
        if self._closed:
            raise TransportClosed(f"rank {self.rank} transport is closed")
        if target == self.rank:
            self._inbox.put(frame)
            self.frames_sent += 1
            return
        data = encode_frame(frame)
        peer = self._peers.get(target)
        if peer is None or peer.broken:
            raise TransportClosed(f"no live connection to rank {target}")
        peer.outbox.put(data)
        self.frames_sent += 1

    def poll(self, timeout: float = 0.0) -> list[TransportFrame]:
        items = []
        try:
            items.append(self._inbox.get(timeout=timeout) if timeout > 0 else self._inbox.get_nowait())
            while True:
                items.append(self._inbox.get_nowait())
        except queue.Empty:
            pass

        frames = []
        for item in items:
            if isinstance(item, _PeerLost):
                if not self._shutting_down:
                    raise TransportClosed(f"rank {item.rank} disconnected: {item.reason}")
                continue
            frames.append(item)
        self.frames_received += len(frames)
        return frames

    def begin_shutdown(self) -> None:
        self._shutting_down = True

    def close(self) -> None:
        if self._closed:
            return
        self._shutting_down = True
        self._closed = True
        for peer in self._peers.values():
            peer.outbox.put(None)
        for peer in self._peers.values():
            if peer.writer is not None:
                peer.writer.join(self.connect_timeout)
        for peer in self._peers.values():
            try:
                peer.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            peer.sock.close()
        if self._listener is not None:
            self._listener.close()
        logger.debug(f"[rank {self.rank}] tcp transport closed")

    def _read_loop(self, peer: _Peer) -> None:
        stream = peer.sock.makefile("rb")
        try:
            while True:
                header = stream.read(HEADER_LEN)
                if not header:
                    raise ConnectionError("connection closed by peer")
                if len(header) < HEADER_LEN:
                    raise MalformedFrame("connection closed mid-header")
                _, body_len = parse_header(header)
                body = stream.read(body_len)
                if len(body) < body_len:
                    raise MalformedFrame("connection closed mid-frame")
                self._inbox.put(decode_frame(header + body))
        except MalformedFrame as exc:
            logger.error(f"[rank {self.rank}] bad frame from rank {peer.rank}: {exc}")
            self._lost(peer, str(exc))
        except (OSError, ValueError) as exc:
            self._lost(peer, str(exc))
        finally:
            stream.close()

    def _write_loop(self, peer: _Peer) -> None:
        while True:
            data = peer.outbox.get()
            if data is None:
                return
            try:
                peer.sock.sendall(data)
            except OSError as exc:
                self._lost(peer, str(exc))
                return

    def _lost(self, peer: _Peer, reason: str) -> None:
        peer.broken = True
        if not self._shutting_down:
            logger.warning(f"[rank {self.rank}] lost rank {peer.rank}: {reason}")
        self._inbox.put(_PeerLost(peer.rank, reason))


def _recv_exactly(sock: socket.socket, size: int) -> bytes:
    data = bytearray()
    while len(data) < size:
        chunk = sock.recv(size - len(data))
        if not chunk:
            raise ConnectionError("connection closed during handshake")
        data.extend(chunk)
    return bytes(data)
