import random
import socket
import threading

import pytest
from hypothesis import given, settings, strategies as st

from distea.clock import ClockCell, ProtocolError
from distea.transport import (
    EVENT_READ,
    EVENT_WRITE,
    ConnectionPoisoned,
    PiggybackConnection,
    memory_pipe,
    pb_recv,
    pb_send,
    readiness_wait,
    tcp_connect,
    tcp_listener,
)


def pair(blocking=True, send_clock=0):
    a, b = memory_pipe()
    tx = PiggybackConnection(a, ClockCell("tx", start=send_clock), blocking=blocking)
    rx = PiggybackConnection(b, ClockCell("rx"), blocking=blocking)
    return tx, rx


def test_send_hello_wire_bytes():
    tx, rx = pair(send_clock=5)
    pb_send(tx, b"hello")
    raw = rx.endpoint.recv(100)
    assert len(raw) == 21
    assert raw[:16] == (21).to_bytes(8, "big") + (5).to_bytes(8, "big")


def test_send_empty_is_header_only():
    tx, rx = pair()
    tx.send(b"")
    assert tx.endpoint.bytes_written == 16


def test_loopback_round_trip():
    tx, rx = pair(send_clock=9)
    tx.send(b"wxyz")
    assert pb_recv(rx, 1024) == b"wxyz"
    assert rx.cell.value == 9


def test_one_byte_reads_apply_each_clock_once():
    tx, rx = pair()
    applied = []
    rx.on_clock = lambda i, ts, before: applied.append((i, ts))
    tx.cell.merge(3)
    tx.send(b"ab")
    tx.cell.merge(8)
    tx.send(b"cde")
    rx.endpoint.max_read = 1
    got = b"".join(rx.recv(1) for _ in range(5))
    assert got == b"abcde"
    assert applied == [(0, 3), (1, 8)]


def test_short_writes_are_completed():
    tx, rx = pair()
    tx.endpoint.max_write = 3
    tx.send(b"0123456789")
    assert rx.recv_exactly(10) == b"0123456789"


def test_nonblocking_would_block():
    tx, rx = pair(blocking=False)
    assert rx.recv(10) is None
    assert rx.state.at_boundary and rx.cell.value == 0


def test_partial_header_then_rest():
    tx, rx = pair(blocking=False, send_clock=4)
    tx.send(b"xy")
    raw = rx.endpoint._inbox
    head, tail = bytes(raw[:7]), bytes(raw[7:])
    raw.clear()
    raw += head
    assert rx.recv(10) is None
    assert len(rx.state.partial_header) == 7
    assert readiness_wait([rx]) == []
    raw += tail
    assert readiness_wait([rx]) == [(rx, EVENT_READ)]
    assert rx.recv(10) == b"xy"


def test_clean_eof_and_eof_mid_frame():
    tx, rx = pair()
    tx.send(b"a")
    tx.endpoint.close()
    assert rx.recv(5) == b"a"
    assert rx.recv(5) == b""

    tx, rx = pair()
    tx.endpoint.send(b"\x00" * 10)
    tx.endpoint.close()
    with pytest.raises(ProtocolError):
        rx.recv(5)
    with pytest.raises(ConnectionPoisoned):
        rx.recv(5)


def test_readiness_buffered_payload():
    tx, rx = pair(blocking=False)
    tx.send(b"abcdef")
    assert readiness_wait([rx]) == [(rx, EVENT_READ)]
    assert rx.recv(2) == b"ab"
    assert readiness_wait([rx]) == [(rx, EVENT_READ)]
    assert rx.recv(10) == b"cdef"
    assert readiness_wait([rx]) == []


def test_readiness_empty_set():
    assert readiness_wait([]) == []


def test_readiness_write_interest():
    tx, rx = pair(blocking=False)
    assert readiness_wait([tx], EVENT_WRITE) == [(tx, EVENT_WRITE)]


@settings(max_examples=100, deadline=None)
@given(
    msgs=st.lists(st.binary(max_size=30), min_size=1, max_size=10),
    seed=st.integers(0, 2**31),
)
def test_memory_transparency_under_segmentation(msgs, seed):
    rng = random.Random(seed)
    tx, rx = pair(blocking=False)
    rx.endpoint.chunker = lambda avail, n: rng.randint(1, n)
    tx.endpoint.max_write = rng.randint(1, 50)
    clocks = []
    for m in msgs:
        tx.cell.stamp()
        clocks.append(tx.cell.value)
        tx.send(m)
    applied = []
    rx.on_clock = lambda i, ts, before: applied.append(ts)
    want = b"".join(msgs)
    got = b""
    while len(got) < len(want):
        part = rx.recv(rng.randint(1, 8))
        if part:
            got += part
    assert got == want
    # frames with empty payloads at the tail are never pulled by the reader
    assert applied == clocks[: len(applied)]
    assert len(applied) >= sum(1 for m in msgs if m) and len(applied) <= len(msgs)


def test_tcp_round_trip():
    listener = tcp_listener()
    port = listener.getsockname()[1]
    server_cell = ClockCell("S", start=2)
    result = {}

    def serve():
        sock, _ = listener.accept()
        conn = PiggybackConnection(sock, server_cell)
        result["got"] = conn.recv_exactly(11)
        server_cell.stamp()
        conn.send(b"ok")
        conn.close()

    t = threading.Thread(target=serve)
    t.start()
    client = PiggybackConnection(tcp_connect("127.0.0.1", port), ClockCell("C", start=10))
    client.send(b"hello")
    client.send(b" world")
    assert client.recv_exactly(2) == b"ok"
    assert client.recv(10) == b""
    t.join(5)
    listener.close()
    assert result["got"] == b"hello world"
    assert server_cell.value == 11
    assert client.cell.value == 11


def test_tcp_readiness_nonblocking():
    listener = tcp_listener()
    a = socket.create_connection(listener.getsockname())
    b, _ = listener.accept()
    tx = PiggybackConnection(a, ClockCell("tx", start=3))
    rx = PiggybackConnection(b, ClockCell("rx"), blocking=False)
    assert readiness_wait([rx], timeout=0.05) == []
    tx.send(b"ping")
    assert readiness_wait([rx], timeout=2.0) == [(rx, EVENT_READ)]
    out = None
    while not out:
        out = rx.recv(16)
    assert out == b"ping" and rx.cell.value == 3
    for s in (a, b, listener):
        s.close()
