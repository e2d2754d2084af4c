"""Per-process Lamport clock and the piggyback frame codec.

Wire format (all integers big-endian, unsigned 64-bit)::

    +----------------+----------------+-----------------+
    | total_length   | sender clock   | payload         |
    | 8 bytes        | 8 bytes        | total_length-16 |
    +----------------+----------------+-----------------+

``total_length`` counts the whole frame, header included, so an empty message
is a 16-byte frame. Every application write becomes exactly one frame; the
receiver strips headers and hands back only payload bytes, so the program on
top sees the same byte stream it would see without piggybacking.

Clock rules: an internal event is stamped with the current value, then the
value grows by one. Sending piggybacks the current value without changing it.
Receiving a header merges ``max(local, received)``; the next internal event
then carries that value.
"""

from __future__ import annotations

import struct
import threading
from typing import Callable, Optional

from .model import CLOCK_MAX, ClockOverflowError, check_clock, check_name

HEADER = struct.Struct(">QQ")
HEADER_SIZE = HEADER.size  # 16


class ProtocolError(Exception):
    """The byte stream does not follow the frame format."""


class ClockCell:
    """The Lamport clock of one process.

    Thread-safe; ``lock`` is reentrant and is also held by observers that need
    to log communication events in the same order as stamps.

    ``increment_on_receive`` switches to the textbook receive rule
    ``max(local, received) + 1``. Off by default.
    """

    def __init__(self, process: str, start: int = 0, increment_on_receive: bool = False):
        self.process = check_name(process, "process id")
        self._value = check_clock(start)
        self.increment_on_receive = increment_on_receive
        self.lock = threading.RLock()

    @property
    def value(self) -> int:
        return self._value

    def stamp(self) -> int:
        with self.lock:
            ts = self._value
            if ts >= CLOCK_MAX:
                raise ClockOverflowError(f"clock of {self.process} overflowed")
            self._value = ts + 1
            return ts

    def merge(self, received: int) -> None:
        check_clock(received)
        with self.lock:
            if received > self._value:
                self._value = received
            if self.increment_on_receive:
                if self._value >= CLOCK_MAX:
                    raise ClockOverflowError(f"clock of {self.process} overflowed")
                self._value += 1

    def __repr__(self):
        return f"ClockCell({self.process!r}, value={self._value})"


def clock_stamp_event(cell: ClockCell) -> int:
    return cell.stamp()


def on_receive_clock(cell: ClockCell, received: int) -> None:
    cell.merge(received)


def pack_frame(clock: int, payload: bytes) -> bytes:
    return HEADER.pack(HEADER_SIZE + len(payload), check_clock(clock)) + bytes(payload)


def encode_frame(cell: ClockCell, payload: bytes) -> bytes:
    """Frame ``payload`` with the sender's current clock (not incremented)."""
    return pack_frame(cell.value, payload)


def decode_frame(frame: bytes) -> tuple[bytes, int]:
    """Split one complete frame into ``(payload, clock)``."""
    if len(frame) < HEADER_SIZE:
        raise ProtocolError(f"frame of {len(frame)} bytes is shorter than its header")
    total, clock = HEADER.unpack_from(frame)
    if total < HEADER_SIZE:
        raise ProtocolError(f"total_length {total} < {HEADER_SIZE}")
    if total != len(frame):
        raise ProtocolError(f"total_length {total} but frame has {len(frame)} bytes")
    return bytes(frame[HEADER_SIZE:]), clock


ClockObserver = Callable[[int, int, int], None]
"""Called as ``observer(frame_index, received_clock, clock_before_merge)``
while the cell lock is held."""


class RecvState:
    """Framer state for one connection direction.

    ``remaining`` is the number of payload bytes of the current frame not yet
    consumed; ``partial_header`` holds 0 to 15 header bytes seen so far.
    """

    __slots__ = ("remaining", "partial_header", "frames", "poisoned")

    def __init__(self):
        self.remaining = 0
        self.partial_header = bytearray()
        self.frames = 0
        self.poisoned: Optional[ProtocolError] = None

    @property
    def at_boundary(self) -> bool:
        return self.remaining == 0 and not self.partial_header

    def __repr__(self):
        return (
            f"RecvState(remaining={self.remaining}, "
            f"partial_header={len(self.partial_header)}, frames={self.frames})"
        )


def feed_bytes(
    state: RecvState,
    cell: ClockCell,
    chunk: bytes,
    on_clock: Optional[ClockObserver] = None,
) -> tuple[bytes, list[int]]:
    """Consume one raw read; return the payload bytes it carried and the clocks
    of the headers it completed, in order.

    Each completed header is merged into ``cell`` immediately, before any of
    that frame's payload is returned.
    """
    if state.poisoned is not None:
        raise state.poisoned
    out = bytearray()
    clocks: list[int] = []
    view = memoryview(chunk)
    pos, n = 0, len(view)
    while pos < n:
        if state.remaining:
            take = min(state.remaining, n - pos)
            out += view[pos : pos + take]
            state.remaining -= take
            pos += take
            continue
        need = HEADER_SIZE - len(state.partial_header)
        take = min(need, n - pos)
        state.partial_header += view[pos : pos + take]
        pos += take
        if len(state.partial_header) < HEADER_SIZE:
            break
        total, ts = HEADER.unpack(state.partial_header)
        state.partial_header.clear()
        if total < HEADER_SIZE:
            state.poisoned = ProtocolError(f"malformed header: total_length {total}")
            raise state.poisoned
        with cell.lock:
            before = cell.value
            cell.merge(ts)
            if on_clock is not None:
                on_clock(state.frames, ts, before)
        state.frames += 1
        clocks.append(ts)
        state.remaining = total - HEADER_SIZE
    return bytes(out), clocks
