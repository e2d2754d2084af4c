"""Piggybacking stream connections.

:class:`PiggybackConnection` sits between a program and a byte-stream
endpoint. Each ``send`` becomes one frame carrying the process clock; each
``recv`` strips headers, merges their clocks and returns payload bytes only.

An endpoint is anything with socket-like ``send``/``recv``/``close``: a TCP
``socket.socket`` or one side of :func:`memory_pipe`. ``send`` may write
fewer bytes than asked; ``recv`` returns ``b""`` at end of stream and raises
``BlockingIOError`` when a non-blocking endpoint has nothing to read.
"""

from __future__ import annotations

import selectors
import socket
import threading
import time
from typing import Callable, Iterable, Optional

from .clock import (
    HEADER_SIZE,
    ClockCell,
    ClockObserver,
    ProtocolError,
    RecvState,
    encode_frame,
    feed_bytes,
)

EVENT_READ = selectors.EVENT_READ
EVENT_WRITE = selectors.EVENT_WRITE

SendObserver = Callable[[int, int], None]
"""Called as ``observer(frame_index, clock)`` with the clock lock held."""


class ConnectionPoisoned(ProtocolError):
    """A previous failure left the stream in an unknown framing state."""


class MemoryEndpoint:
    """One side of an in-memory byte pipe.

    ``max_write`` and ``max_read`` cap how many bytes one call moves, which
    lets tests force short writes and fragmented reads. ``chunker``, when
    set, picks the size of each read: ``chunker(available, requested)``.
    """

    def __init__(self, name: str = ""):
        self.name = name
        self.peer: Optional["MemoryEndpoint"] = None
        self._inbox = bytearray()
        self._eof = False
        self._closed = False
        self._cond = threading.Condition()
        self.blocking = True
        self.max_write: Optional[int] = None
        self.max_read: Optional[int] = None
        self.chunker: Optional[Callable[[int, int], int]] = None
        self.bytes_written = 0

    def setblocking(self, flag: bool) -> None:
        self.blocking = flag

    def send(self, data) -> int:
        if self._closed:
            raise BrokenPipeError("endpoint closed")
        peer = self.peer
        if peer is None or peer._closed:
            raise BrokenPipeError("peer closed")
        n = len(data) if self.max_write is None else min(len(data), self.max_write)
        with peer._cond:
            peer._inbox += bytes(data[:n])
            peer._cond.notify_all()
        self.bytes_written += n
        return n

    def sendall(self, data) -> None:
        view = memoryview(data)
        while view:
            view = view[self.send(view) :]

    def recv(self, size: int) -> bytes:
        with self._cond:
            while not self._inbox and not self._eof:
                if self._closed:
                    raise OSError("endpoint closed")
                if not self.blocking:
                    raise BlockingIOError("no data")
                self._cond.wait()
            avail = len(self._inbox)
            if not avail:
                return b""
            n = min(avail, size)
            if self.max_read is not None:
                n = min(n, self.max_read)
            if self.chunker is not None:
                n = max(1, min(n, self.chunker(avail, n)))
            out = bytes(self._inbox[:n])
            del self._inbox[:n]
            return out

    def pending(self) -> int:
        return len(self._inbox)

    def readable(self) -> bool:
        return bool(self._inbox) or self._eof

    def shutdown_write(self) -> None:
        peer = self.peer
        if peer is not None:
            with peer._cond:
                peer._eof = True
                peer._cond.notify_all()

    def close(self) -> None:
        if not self._closed:
            self.shutdown_write()
            self._closed = True
            with self._cond:
                self._cond.notify_all()

    def __repr__(self):
        return f"MemoryEndpoint({self.name!r}, pending={len(self._inbox)})"


def memory_pipe(name: str = "pipe") -> tuple[MemoryEndpoint, MemoryEndpoint]:
    a, b = MemoryEndpoint(f"{name}:a"), MemoryEndpoint(f"{name}:b")
    a.peer, b.peer = b, a
    return a, b


class PiggybackConnection:
    """Frames outgoing messages and unframes incoming bytes for one endpoint.

    In blocking mode ``send`` returns after the whole frame is written. In
    non-blocking mode unwritten bytes wait in an output buffer; call
    :meth:`flush` when the endpoint becomes writable.
    """

    def __init__(
        self,
        endpoint,
        cell: ClockCell,
        *,
        blocking: bool = True,
        on_send: Optional[SendObserver] = None,
        on_clock: Optional[ClockObserver] = None,
    ):
        self.endpoint = endpoint
        self.cell = cell
        self.blocking = blocking
        self.on_send = on_send
        self.on_clock = on_clock
        self.state = RecvState()
        self.frames_sent = 0
        self._payload = bytearray()
        self._out = bytearray()
        self._poisoned: Optional[Exception] = None
        if not blocking:
            endpoint.setblocking(False)

    # -- sending -----------------------------------------------------------

    def send(self, msg: bytes) -> None:
        self._check()
        with self.cell.lock:
            frame = encode_frame(self.cell, msg)
            index = self.frames_sent
            self.frames_sent += 1
            if self.on_send is not None:
                self.on_send(index, self.cell.value)
        self._out += frame
        self.flush()

    def flush(self) -> bool:
        """Write buffered output; True once nothing is left."""
        self._check()
        while self._out:
            try:
                n = self.endpoint.send(self._out)
            except BlockingIOError:
                if self.blocking:
                    _wait_writable(self.endpoint)
                    continue
                return False
            except OSError as exc:
                self._poisoned = exc
                raise
            del self._out[:n]
        return True

    @property
    def wants_write(self) -> bool:
        return bool(self._out)

    # -- receiving ---------------------------------------------------------

    def has_payload(self) -> bool:
        return bool(self._payload)

    def recv(self, max_bytes: int) -> Optional[bytes]:
        """Return 1..max_bytes payload bytes, ``b""`` at a clean end of
        stream, or ``None`` if non-blocking and nothing is ready."""
        if max_bytes < 1:
            raise ValueError("max_bytes must be >= 1")
        self._check()
        while not self._payload:
            st = self.state
            want = min(st.remaining, max_bytes) if st.remaining else (
                HEADER_SIZE - len(st.partial_header) + max_bytes
            )
            try:
                chunk = self.endpoint.recv(want)
            except BlockingIOError:
                return None
            except OSError as exc:
                self._poisoned = exc
                raise
            if not chunk:
                if st.at_boundary:
                    return b""
                self._poisoned = ProtocolError("end of stream inside a frame")
                raise self._poisoned
            try:
                payload, _ = feed_bytes(st, self.cell, chunk, self.on_clock)
            except ProtocolError as exc:
                self._poisoned = exc
                raise
            self._payload += payload
        out = bytes(self._payload[:max_bytes])
        del self._payload[:max_bytes]
        return out

    def recv_exactly(self, n: int) -> bytes:
        """Blocking helper: read exactly ``n`` payload bytes."""
        buf = bytearray()
        while len(buf) < n:
            part = self.recv(n - len(buf))
            if part is None:
                _wait_readable(self.endpoint)
                continue
            if not part:
                raise ProtocolError(f"end of stream after {len(buf)} of {n} bytes")
            buf += part
        return bytes(buf)

    def _check(self):
        if self._poisoned is not None:
            raise ConnectionPoisoned(f"connection unusable: {self._poisoned}")

    def close(self) -> None:
        self.endpoint.close()

    def fileno(self) -> int:
        return self.endpoint.fileno()

    def __repr__(self):
        return f"PiggybackConnection({self.endpoint!r}, {self.state!r})"


def pb_send(conn: PiggybackConnection, msg: bytes) -> None:
    conn.send(msg)


def pb_recv(conn: PiggybackConnection, max_bytes: int) -> Optional[bytes]:
    return conn.recv(max_bytes)


def _wait_readable(endpoint, timeout: Optional[float] = None) -> None:
    if isinstance(endpoint, MemoryEndpoint):
        with endpoint._cond:
            endpoint._cond.wait_for(endpoint.readable, timeout)
        return
    with selectors.DefaultSelector() as sel:
        sel.register(endpoint, EVENT_READ)
        sel.select(timeout)


def _wait_writable(endpoint, timeout: Optional[float] = None) -> None:
    if isinstance(endpoint, MemoryEndpoint):
        return
    with selectors.DefaultSelector() as sel:
        sel.register(endpoint, EVENT_WRITE)
        sel.select(timeout)


def readiness_wait(
    conns: Iterable[PiggybackConnection],
    interest: int = EVENT_READ,
    timeout: Optional[float] = 0.0,
) -> list[tuple[PiggybackConnection, int]]:
    """Report which connections are ready, like ``selectors.select``.

    A connection holding undelivered payload is always readable. A partial
    header alone does not make it readable; the underlying endpoint decides.
    Memory endpoints are polled; sockets go through a selector.
    """
    conns = list(conns)
    if not conns:
        return []
    deadline = None if timeout is None else time.monotonic() + timeout
    while True:
        ready: dict[PiggybackConnection, int] = {}
        sockets = []
        for c in conns:
            mask = 0
            if interest & EVENT_READ and c.has_payload():
                mask |= EVENT_READ
            ep = c.endpoint
            if isinstance(ep, MemoryEndpoint):
                if interest & EVENT_READ and ep.readable():
                    mask |= EVENT_READ
                if interest & EVENT_WRITE:
                    mask |= EVENT_WRITE
            else:
                sockets.append(c)
            if mask:
                ready[c] = mask
        if sockets:
            wait = 0.0 if ready else _remaining(deadline, 0.05)
            with selectors.DefaultSelector() as sel:
                for c in sockets:
                    sel.register(c.endpoint, interest)
                for key, events in sel.select(wait):
                    c = next(x for x in sockets if x.endpoint is key.fileobj)
                    ready[c] = ready.get(c, 0) | events
        if ready or (deadline is not None and time.monotonic() >= deadline):
            return [(c, ready[c]) for c in conns if c in ready]
        if not sockets:
            time.sleep(min(0.001, _remaining(deadline, 0.001)))


def _remaining(deadline: Optional[float], cap: float) -> float:
    if deadline is None:
        return cap
    return max(0.0, min(cap, deadline - time.monotonic()))


def tcp_listener(host: str = "127.0.0.1", port: int = 0, backlog: int = 16) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen(backlog)
    return sock


def tcp_connect(host: str, port: int, timeout: float = 5.0) -> socket.socket:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)
