"""Ordered two-party byte channels with exact communication accounting.

Every message is wrapped in a 16-byte little-endian frame header
``[u32 magic][u16 version][u16 kind][u64 length]``.  Both the in-process
and the TCP transport count the same things: bytes per direction (header
included), *flights* (maximal runs of same-direction frames) and
*round trips* (completed pairs of flights).

Each endpoint keeps its own ledger, updated when it sends a frame and when
it receives one, so the two parties of a half-duplex protocol end up with
identical statistics regardless of the transport.
"""
from __future__ import annotations

import enum
import errno
import queue
import socket
import struct
import threading
from dataclasses import dataclass

from .errors import AddressInUse, ChannelClosed, ConnectionRefused, FrameTooLarge, MalformedMessage

MAGIC = 0x464E4953  # b"SINF" read little-endian
VERSION = 1
HEADER = struct.Struct("<IHHQ")
HEADER_SIZE = HEADER.size  # 16
DEFAULT_MAX_FRAME = 1 << 30

A, B = "a", "b"


class MessageKind(enum.IntEnum):
    """Frame kind tags used by the protocols."""
    SETUP = 1
    RESULT = 2
    OT_REQ = 3
    OT_RESP = 4
    TABLES = 5
    REVEAL = 6
    GARBLER_LABELS = 7


def pack_frame(kind: int, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, VERSION, kind, len(payload)) + bytes(payload)


def unpack_header(header: bytes) -> tuple[int, int]:
    """Return ``(kind, length)`` of a frame header, validating magic/version."""
    if len(header) != HEADER_SIZE:
        raise MalformedMessage(f"short frame header ({len(header)} bytes)")
    magic, version, kind, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise MalformedMessage(f"bad frame magic {magic:#x}")
    if version != VERSION:
        raise MalformedMessage(f"unsupported frame version {version}")
    return kind, length


@dataclass(frozen=True)
class CommStats:
    bytes_a_to_b: int = 0
    bytes_b_to_a: int = 0
    frames_a_to_b: int = 0
    frames_b_to_a: int = 0
    flights: int = 0
    round_trips: int = 0

    @property
    def total_bytes(self) -> int:
        return self.bytes_a_to_b + self.bytes_b_to_a

    def __sub__(self, other: "CommStats") -> "CommStats":
        return CommStats(
            self.bytes_a_to_b - other.bytes_a_to_b,
            self.bytes_b_to_a - other.bytes_b_to_a,
            self.frames_a_to_b - other.frames_a_to_b,
            self.frames_b_to_a - other.frames_b_to_a,
            self.flights - other.flights,
            self.round_trips - other.round_trips,
        )


class _Ledger:
    def __init__(self):
        self._lock = threading.Lock()
        self._bytes = {A: 0, B: 0}
        self._frames = {A: 0, B: 0}
        self._flights = 0
        self._last = None

    def reset(self) -> None:
        with self._lock:
            self._bytes = {A: 0, B: 0}
            self._frames = {A: 0, B: 0}
            self._flights = 0
            self._last = None

    def record(self, sender: str, nbytes: int) -> None:
        with self._lock:
            self._bytes[sender] += nbytes
            self._frames[sender] += 1
            if sender != self._last:
                self._flights += 1
                self._last = sender

    def snapshot(self) -> CommStats:
        with self._lock:
            return CommStats(
                bytes_a_to_b=self._bytes[A],
                bytes_b_to_a=self._bytes[B],
                frames_a_to_b=self._frames[A],
                frames_b_to_a=self._frames[B],
                flights=self._flights,
                round_trips=self._flights // 2,
            )


class Endpoint:
    """One party's end of a channel.  Subclasses move raw frames."""

    def __init__(self, role: str, max_frame: int = DEFAULT_MAX_FRAME):
        if role not in (A, B):
            raise ValueError(f"role must be 'a' or 'b', got {role!r}")
        self.role = role
        self.peer = B if role == A else A
        self.max_frame = max_frame
        self._ledger = _Ledger()
        self._closed = False

    @property
    def stats(self) -> CommStats:
        return self._ledger.snapshot()

    def reset_stats(self) -> None:
        """Start a fresh accounting window (e.g. per benchmarked session)."""
        self._ledger.reset()

    def send(self, kind: int, payload: bytes = b"") -> None:
        if self._closed:
            raise ChannelClosed("send on closed endpoint")
        if len(payload) > self.max_frame:
            raise FrameTooLarge(f"{len(payload)} bytes exceeds cap {self.max_frame}")
        self._send_frame(kind, payload)
        self._ledger.record(self.role, HEADER_SIZE + len(payload))

    def recv(self, timeout: float | None = None) -> tuple[int, bytes]:
        if self._closed:
            raise ChannelClosed("recv on closed endpoint")
        kind, payload = self._recv_frame(timeout)
        self._ledger.record(self.peer, HEADER_SIZE + len(payload))
        return kind, payload

    def recv_kind(self, expected: int, timeout: float | None = None) -> bytes:
        kind, payload = self.recv(timeout)
        if kind != expected:
            raise MalformedMessage(f"expected frame kind {expected}, got {kind}")
        return payload

    def close(self) -> None:
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _send_frame(self, kind: int, payload: bytes) -> None:
        raise NotImplementedError

    def _recv_frame(self, timeout: float | None) -> tuple[int, bytes]:
        raise NotImplementedError


_CLOSED = object()


class InprocEndpoint(Endpoint):
    def __init__(self, role, outbox: queue.Queue, inbox: queue.Queue, max_frame=DEFAULT_MAX_FRAME):
        super().__init__(role, max_frame)
        self._outbox = outbox
        self._inbox = inbox

    def _send_frame(self, kind, payload):
        # frames cross the queue in wire form so both transports see the same bytes
        self._outbox.put(pack_frame(kind, payload))

    def _recv_frame(self, timeout):
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise ChannelClosed(f"no frame within {timeout} s") from None
        if item is _CLOSED:
            self._inbox.put(_CLOSED)
            raise ChannelClosed("peer closed the channel")
        kind, length = unpack_header(item[:HEADER_SIZE])
        payload = item[HEADER_SIZE:]
        if len(payload) != length:
            raise MalformedMessage("frame length mismatch")
        return kind, payload

    def close(self):
        if not self._closed:
            self._outbox.put(_CLOSED)
        super().close()


def make_inproc_pair(max_frame: int = DEFAULT_MAX_FRAME, depth: int = 64) -> tuple[InprocEndpoint, InprocEndpoint]:
    """Two connected endpoints (roles ``a`` and ``b``) backed by bounded FIFOs."""
    a_to_b: queue.Queue = queue.Queue(maxsize=depth)
    b_to_a: queue.Queue = queue.Queue(maxsize=depth)
    return (
        InprocEndpoint(A, a_to_b, b_to_a, max_frame),
        InprocEndpoint(B, b_to_a, a_to_b, max_frame),
    )


class TcpEndpoint(Endpoint):
    def __init__(self, role, sock: socket.socket, max_frame=DEFAULT_MAX_FRAME):
        super().__init__(role, max_frame)
        self._sock = sock
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _send_frame(self, kind, payload):
        try:
            self._sock.sendall(HEADER.pack(MAGIC, VERSION, kind, len(payload)))
            if payload:
                self._sock.sendall(payload)
        except OSError as exc:
            raise ChannelClosed(str(exc)) from exc

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray(n)
        view = memoryview(buf)
        got = 0
        while got < n:
            try:
                k = self._sock.recv_into(view[got:], n - got)
            except OSError as exc:
                raise ChannelClosed(str(exc)) from exc
            if k == 0:
                raise ChannelClosed("peer closed the connection")
            got += k
        return bytes(buf)

    def _recv_frame(self, timeout):
        self._sock.settimeout(timeout)
        try:
            kind, length = unpack_header(self._read_exact(HEADER_SIZE))
            if length > self.max_frame:
                raise FrameTooLarge(f"incoming frame of {length} bytes exceeds cap {self.max_frame}")
            return kind, self._read_exact(length)
        except socket.timeout:
            raise ChannelClosed(f"no frame within {timeout} s") from None
        finally:
            self._sock.settimeout(None)

    def close(self):
        if not self._closed:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
        super().close()


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port:
        raise ValueError(f"address must look like host:port, got {address!r}")
    return host, int(port)


class TcpListener:
    """Bound listening socket; ``accept`` yields the role-``a`` endpoint."""

    def __init__(self, address: str, role: str = A):
        host, port = parse_address(address)
        self.role = role
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            self._sock.bind((host, port))
        except OSError as exc:
            self._sock.close()
            if exc.errno == errno.EADDRINUSE:
                raise AddressInUse(address) from exc
            raise
        self._sock.listen(1)

    @property
    def address(self) -> str:
        host, port = self._sock.getsockname()
        return f"{host}:{port}"

    def accept(self, timeout: float | None = None, max_frame: int = DEFAULT_MAX_FRAME) -> TcpEndpoint:
        self._sock.settimeout(timeout)
        try:
            conn, _ = self._sock.accept()
        except socket.timeout:
            raise ChannelClosed("no incoming connection") from None
        conn.settimeout(None)
        return TcpEndpoint(self.role, conn, max_frame)

    def close(self):
        self._sock.close()


def listen_tcp(address: str, role: str = A, timeout: float | None = None) -> TcpEndpoint:
    listener = TcpListener(address, role)
    try:
        return listener.accept(timeout)
    finally:
        listener.close()


def connect_tcp(address: str, role: str = B, retries: int = 0, delay: float = 0.05,
                max_frame: int = DEFAULT_MAX_FRAME) -> TcpEndpoint:
    """Connect to a listener; optionally retry while it is still starting up."""
    import time

    host, port = parse_address(address)
    for attempt in range(retries + 1):
        try:
            sock = socket.create_connection((host, port))
            return TcpEndpoint(role, sock, max_frame)
        except ConnectionRefusedError as exc:
            if attempt == retries:
                raise ConnectionRefused(address) from exc
            time.sleep(delay)
    raise AssertionError("unreachable")
