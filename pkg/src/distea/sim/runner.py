"""Execute scripted programs with probes and piggybacked transport.

Two modes share the same per-process machinery:

``mem``
    Single-threaded. Every script thread is a cooperative task; a seeded
    random generator picks which runnable task advances next and how many
    bytes each raw read returns, so the same seed replays the same run.
``tcp``
    Every script thread is a real thread, connections are loopback TCP
    sockets. Address labels map to ephemeral ports unless ``bind`` pins them.
"""

from __future__ import annotations

import itertools
import logging
import random
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from ..clock import ClockCell
from ..model import CommunicationEventKind
from ..probes import MonitorTable
from ..tracefile import TraceCorpus, merge, parse_trace, serialize_trace
from ..transport import (
    PiggybackConnection,
    memory_pipe,
    parse_address,
    tcp_connect,
    tcp_listener,
)
from .oracle import CommEvent, HappensBeforeOracle, LogEntry
from .script import (
    MAIN,
    Accept,
    Connect,
    Enter,
    Recv,
    Return,
    ReturnedInto,
    ScriptedProgram,
    ScriptError,
    Send,
    Spawn,
    validate_program,
    validate_topology,
)

log = logging.getLogger(__name__)

MEM = "mem"
TCP = "tcp"


class SimulationError(RuntimeError):
    pass


class DeadlockError(SimulationError, TimeoutError):
    """No script can make progress, or a TCP run exceeded its time limit."""


@dataclass
class RunResult:
    corpus: TraceCorpus
    logs: Mapping[str, list]
    traces_raw: Mapping[str, bytes] = field(default_factory=dict)

    def oracle(self) -> HappensBeforeOracle:
        return HappensBeforeOracle(self.logs)


class _Process:
    """Probe table, clock, connections and event log of one simulated process."""

    def __init__(self, program: ScriptedProgram):
        self.program = program
        self.name = program.process
        self.cell = ClockCell(self.name)
        self.log: list[LogEntry] = []
        self.table = MonitorTable(self.name, self.cell, oracle=True, listener=self.log.append)
        self.conns: dict[str, PiggybackConnection] = {}

    def attach(self, conn_name: str, endpoint, link, role: str, blocking: bool):
        """Wrap ``endpoint`` and route its frame events into the log.

        ``link`` identifies the connection; the client->server direction is
        channel ``(link, "c2s")`` and the reverse ``(link, "s2c")``.
        """
        out_dir, in_dir = ("c2s", "s2c") if role == "client" else ("s2c", "c2s")
        name = self.name

        def on_send(index, clock):
            self.log.append(
                CommEvent(CommunicationEventKind.SEND, (link, out_dir), index, clock, name)
            )

        def on_clock(index, received, _before):
            self.log.append(
                CommEvent(CommunicationEventKind.RECEIVE, (link, in_dir), index, received, name)
            )

        conn = PiggybackConnection(
            endpoint, self.cell, blocking=blocking, on_send=on_send, on_clock=on_clock
        )
        self.conns[conn_name] = conn
        return conn

    def probe(self, action) -> None:
        if isinstance(action, Enter):
            self.table.on_entry(action.method)
        elif isinstance(action, Return):
            self.table.on_return(action.method)
        else:
            self.table.on_returned_into(action.method)

    def trace_bytes(self) -> bytes:
        return serialize_trace(self.table.snapshot())


def _finish(procs: Iterable[_Process], run_id: str) -> RunResult:
    procs = list(procs)
    raw = {p.name: p.trace_bytes() for p in procs}
    corpus = merge((parse_trace(raw[p.name], source=p.name) for p in procs), run_id=run_id)
    return RunResult(corpus, {p.name: list(p.log) for p in procs}, raw)


def _check(programs) -> list[ScriptedProgram]:
    programs = list(programs)
    if not programs:
        raise ScriptError("no scripts to run")
    for p in programs:
        validate_program(p)
    validate_topology(programs)
    return programs


def run_scripts(
    programs: Iterable[ScriptedProgram],
    transport: str = MEM,
    seed: int = 0,
    *,
    timeout: float = 10.0,
    bind: Optional[Mapping[str, str]] = None,
    max_steps: int = 1_000_000,
    run_id: Optional[str] = None,
) -> RunResult:
    programs = _check(programs)
    run_id = run_id or f"{transport}-{seed}"
    if transport == MEM:
        return _run_memory(programs, seed, max_steps, run_id)
    if transport == TCP:
        return _run_tcp(programs, timeout, bind or {}, run_id)
    raise ValueError(f"unknown transport {transport!r}")


# -- in-memory, cooperative ------------------------------------------------


class _Task:
    __slots__ = ("proc", "thread", "actions", "pc", "got", "started")

    def __init__(self, proc, thread, actions, started):
        self.proc = proc
        self.thread = thread
        self.actions = actions
        self.pc = 0
        self.got = 0
        self.started = started

    @property
    def done(self):
        return self.pc >= len(self.actions)

    def __repr__(self):
        return f"<{self.proc.name}/{self.thread} pc={self.pc}/{len(self.actions)}>"


def _run_memory(programs, seed, max_steps, run_id) -> RunResult:
    rng = random.Random(seed)
    procs = [_Process(p) for p in programs]
    tasks = {
        (proc.name, t): _Task(proc, t, acts, t == MAIN)
        for proc in procs
        for t, acts in proc.program.threads.items()
    }
    ordered = list(tasks.values())
    pending: dict[str, list] = {}
    links = itertools.count()

    def chunker(avail, n):
        return rng.randint(1, n)

    def runnable(task: _Task) -> bool:
        a = task.actions[task.pc]
        if isinstance(a, Accept):
            return bool(pending.get(a.address))
        if isinstance(a, Recv):
            conn = task.proc.conns[a.conn]
            return conn.has_payload() or conn.endpoint.readable()
        return True

    def step(task: _Task) -> None:
        a = task.actions[task.pc]
        proc = task.proc
        if isinstance(a, (Enter, Return, ReturnedInto)):
            proc.probe(a)
        elif isinstance(a, Send):
            proc.conns[a.conn].send(a.payload)
        elif isinstance(a, Recv):
            part = proc.conns[a.conn].recv(a.nbytes - task.got)
            if part == b"":
                raise SimulationError(f"{task}: peer closed before {a.nbytes} bytes arrived")
            if part:
                task.got += len(part)
            if task.got < a.nbytes:
                return
            task.got = 0
        elif isinstance(a, Connect):
            link = next(links)
            mine, theirs = memory_pipe(f"{a.address}#{link}")
            mine.chunker = theirs.chunker = chunker
            pending.setdefault(a.address, []).append((link, theirs))
            proc.attach(a.conn, mine, link, "client", blocking=False)
        elif isinstance(a, Accept):
            link, ep = pending[a.address].pop(0)
            proc.attach(a.conn, ep, link, "server", blocking=False)
        elif isinstance(a, Spawn):
            tasks[(proc.name, a.thread)].started = True
        task.pc += 1

    for _ in range(max_steps):
        live = [t for t in ordered if t.started and not t.done]
        if not live:
            break
        ready = [t for t in live if runnable(t)]
        if not ready:
            raise DeadlockError(f"no runnable script; blocked: {live}")
        step(rng.choice(ready))
    else:
        raise DeadlockError(f"step limit {max_steps} reached")
    return _finish(procs, run_id)


# -- TCP, one real thread per script thread ----------------------------------


def _run_tcp(programs, timeout, bind, run_id) -> RunResult:
    deadline = time.monotonic() + timeout
    procs = [_Process(p) for p in programs]
    listeners: dict[str, socket.socket] = {}
    accept_lock = threading.Lock()
    errors: list[BaseException] = []

    for proc in procs:
        for _, a in proc.program.actions():
            if isinstance(a, Accept) and a.address not in listeners:
                host, port = parse_address(bind[a.address]) if a.address in bind else ("127.0.0.1", 0)
                listeners[a.address] = tcp_listener(host, port)

    def remaining():
        left = deadline - time.monotonic()
        if left <= 0:
            raise DeadlockError("TCP run timed out")
        return left

    def target_of(address):
        if address in listeners:
            return listeners[address].getsockname()[:2]
        if address in bind:
            return parse_address(bind[address])
        raise ScriptError(f"no listener or --bind entry for address {address!r}")

    def connect(address):
        host, port = target_of(address)
        while True:
            try:
                return tcp_connect(host, port, timeout=remaining())
            except ConnectionRefusedError:
                time.sleep(0.02)

    def run_thread(proc: _Process, name: str, threads: dict):
        try:
            for a in proc.program.threads[name]:
                if isinstance(a, (Enter, Return, ReturnedInto)):
                    proc.probe(a)
                elif isinstance(a, Send):
                    proc.conns[a.conn].send(a.payload)
                elif isinstance(a, Recv):
                    conn = proc.conns[a.conn]
                    conn.endpoint.settimeout(remaining())
                    conn.recv_exactly(a.nbytes)
                elif isinstance(a, Connect):
                    sock = connect(a.address)
                    link = sock.getsockname()[:2]
                    proc.attach(a.conn, sock, link, "client", blocking=True)
                elif isinstance(a, Accept):
                    lsock = listeners[a.address]
                    with accept_lock:
                        lsock.settimeout(remaining())
                        sock, peer = lsock.accept()
                    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                    proc.attach(a.conn, sock, peer[:2], "server", blocking=True)
                elif isinstance(a, Spawn):
                    t = threading.Thread(
                        target=run_thread, args=(proc, a.thread, threads), daemon=True
                    )
                    threads[(proc.name, a.thread)] = t
                    t.start()
        except BaseException as exc:  # reported after join
            errors.append(exc)

    threads: dict = {}
    for proc in procs:
        t = threading.Thread(target=run_thread, args=(proc, MAIN, threads), daemon=True)
        threads[(proc.name, MAIN)] = t
        t.start()
    try:
        while True:
            alive = [t for t in list(threads.values()) if t.is_alive()]
            if not alive:
                break
            alive[0].join(max(0.0, deadline - time.monotonic()))
            if time.monotonic() >= deadline and any(t.is_alive() for t in threads.values()):
                raise DeadlockError("TCP run timed out")
    finally:
        for proc in procs:
            for conn in proc.conns.values():
                conn.close()
        for lsock in listeners.values():
            lsock.close()
    if errors:
        exc = errors[0]
        if isinstance(exc, socket.timeout):
            raise DeadlockError(f"TCP run timed out: {exc}") from exc
        raise exc
    return _finish(procs, run_id)
