"""Scripted programs: the action language driven by the simulation harness.

File format (``distea-script v1``), one action per line, ``#`` starts a
comment, leading whitespace is ignored::

    distea-script v1
    process S
    thread main
    enter S::main
    accept sock e:2345        # accept <conn> <address-label>
    connect sock e:2345       # connect <conn> <address-label>
    send sock 68656c6c6f      # payload as hex, "-" for empty
    recv sock 5               # read exactly 5 payload bytes
    into S::main              # returned into S::main
    return S::main
    spawn worker              # start thread "worker" of this process
    thread worker
    ...

The first thread must be ``main``; every other thread runs only once
spawned. Connections are process-wide names; threads may share them.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

from ..model import check_name

MAGIC = "distea-script v1"
MAIN = "main"


class ScriptError(ValueError):
    def __init__(self, message: str, lineno: int | None = None, source: str | None = None):
        self.lineno = lineno
        prefix = "".join(f"{x}:" for x in (source, lineno) if x is not None)
        super().__init__(f"{prefix} {message}" if prefix else message)


class UnmatchedRecvError(ScriptError):
    pass


@dataclass(frozen=True)
class Enter:
    method: str


@dataclass(frozen=True)
class Return:
    method: str


@dataclass(frozen=True)
class ReturnedInto:
    method: str


@dataclass(frozen=True)
class Send:
    conn: str
    payload: bytes


@dataclass(frozen=True)
class Recv:
    conn: str
    nbytes: int


@dataclass(frozen=True)
class Accept:
    conn: str
    address: str


@dataclass(frozen=True)
class Connect:
    conn: str
    address: str


@dataclass(frozen=True)
class Spawn:
    thread: str


Action = Union[Enter, Return, ReturnedInto, Send, Recv, Accept, Connect, Spawn]

_KEYWORDS = {
    "enter": Enter,
    "return": Return,
    "into": ReturnedInto,
    "send": Send,
    "recv": Recv,
    "accept": Accept,
    "connect": Connect,
    "spawn": Spawn,
}


@dataclass(frozen=True)
class ScriptedProgram:
    process: str
    threads: Mapping[str, tuple]

    def __post_init__(self):
        check_name(self.process, "process id")
        threads = {name: tuple(actions) for name, actions in dict(self.threads).items()}
        if not threads or next(iter(threads)) != MAIN:
            raise ScriptError(f"{self.process}: first thread must be '{MAIN}'")
        object.__setattr__(self, "threads", threads)

    def __hash__(self):
        return hash((self.process, tuple(self.threads.items())))

    @classmethod
    def single(cls, process: str, actions: Iterable[Action]) -> "ScriptedProgram":
        return cls(process, {MAIN: tuple(actions)})

    def actions(self):
        for thread, acts in self.threads.items():
            for a in acts:
                yield thread, a


def _format_action(a: Action) -> str:
    if isinstance(a, Enter):
        return f"enter {a.method}"
    if isinstance(a, Return):
        return f"return {a.method}"
    if isinstance(a, ReturnedInto):
        return f"into {a.method}"
    if isinstance(a, Send):
        return f"send {a.conn} {a.payload.hex() or '-'}"
    if isinstance(a, Recv):
        return f"recv {a.conn} {a.nbytes}"
    if isinstance(a, Accept):
        return f"accept {a.conn} {a.address}"
    if isinstance(a, Connect):
        return f"connect {a.conn} {a.address}"
    if isinstance(a, Spawn):
        return f"spawn {a.thread}"
    raise TypeError(f"not an action: {a!r}")


def serialize_script(program: ScriptedProgram) -> str:
    lines = [MAGIC, f"process {program.process}"]
    for name, acts in program.threads.items():
        lines.append(f"thread {name}")
        lines.extend(_format_action(a) for a in acts)
    return "\n".join(lines) + "\n"


def _parse_action(words: list[str], lineno: int, source) -> Action:
    kw, args = words[0], words[1:]
    cls = _KEYWORDS.get(kw)
    if cls is None:
        raise ScriptError(f"unknown action {kw!r}", lineno, source)
    arity = 2 if cls in (Send, Recv, Accept, Connect) else 1
    if len(args) != arity:
        raise ScriptError(f"{kw} takes {arity} argument(s), got {len(args)}", lineno, source)
    if cls is Send:
        try:
            payload = b"" if args[1] == "-" else bytes.fromhex(args[1])
        except ValueError:
            raise ScriptError(f"bad hex payload {args[1]!r}", lineno, source) from None
        return Send(args[0], payload)
    if cls is Recv:
        if not args[1].isdigit() or int(args[1]) < 1:
            raise ScriptError(f"recv needs a positive byte count, got {args[1]!r}", lineno, source)
        return Recv(args[0], int(args[1]))
    return cls(*args)


def parse_script(text: str, source: str | None = None) -> ScriptedProgram:
    process = None
    threads: dict[str, list] = {}
    current = None
    saw_magic = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not saw_magic:
            if line != MAGIC:
                raise ScriptError(f"bad or unsupported header {line!r}", lineno, source)
            saw_magic = True
            continue
        words = line.split()
        if words[0] == "process":
            if process is not None or len(words) != 2:
                raise ScriptError("expected exactly one 'process <id>' line", lineno, source)
            process = words[1]
        elif words[0] == "thread":
            if process is None or len(words) != 2:
                raise ScriptError("'thread <name>' must follow the process line", lineno, source)
            if words[1] in threads:
                raise ScriptError(f"thread {words[1]!r} declared twice", lineno, source)
            current = threads.setdefault(words[1], [])
        else:
            if current is None:
                raise ScriptError("action outside of a thread", lineno, source)
            current.append(_parse_action(words, lineno, source))
    if not saw_magic:
        raise ScriptError("empty script", None, source)
    if process is None:
        raise ScriptError("missing 'process <id>' line", None, source)
    try:
        program = ScriptedProgram(process, threads)
        validate_program(program)
    except ScriptError as exc:
        raise ScriptError(str(exc), None, source) from None
    return program


def validate_program(program: ScriptedProgram) -> None:
    """Check call nesting per thread, connection use and spawn targets."""
    opened: set[str] = set()
    spawned: Counter = Counter()
    for thread, acts in program.threads.items():
        stack: list[str] = []
        for i, a in enumerate(acts):
            where = f"{program.process}/{thread}#{i}"
            if isinstance(a, Enter):
                stack.append(a.method)
            elif isinstance(a, (Return, ReturnedInto)):
                if not stack or stack[-1] != a.method:
                    top = stack[-1] if stack else None
                    raise ScriptError(f"{where}: {_format_action(a)} but the active method is {top}")
                if isinstance(a, Return):
                    stack.pop()
            elif isinstance(a, (Accept, Connect)):
                if a.conn in opened:
                    raise ScriptError(f"{where}: connection {a.conn!r} opened twice")
                opened.add(a.conn)
            elif isinstance(a, Spawn):
                if a.thread == MAIN or a.thread not in program.threads:
                    raise ScriptError(f"{where}: cannot spawn thread {a.thread!r}")
                spawned[a.thread] += 1
        if stack:
            raise ScriptError(f"{program.process}/{thread}: methods still active at end: {stack}")
    for thread in program.threads:
        if thread != MAIN and spawned[thread] != 1:
            raise ScriptError(f"{program.process}: thread {thread!r} spawned {spawned[thread]} times")
    used = {a.conn for _, a in program.actions() if isinstance(a, (Send, Recv))}
    missing = used - opened
    if missing:
        raise ScriptError(f"{program.process}: connections used but never opened: {sorted(missing)}")


def validate_topology(programs: Iterable[ScriptedProgram]) -> None:
    """Cross-program checks: unique process ids, every address accepted as
    often as connected, and for one-to-one addresses, no side reading more
    bytes than its peer sends."""
    programs = list(programs)
    ids = Counter(p.process for p in programs)
    dup = [p for p, n in ids.items() if n > 1]
    if dup:
        raise ScriptError(f"duplicate process ids: {dup}")
    accepts: dict[str, list] = defaultdict(list)
    connects: dict[str, list] = defaultdict(list)
    sent: Counter = Counter()
    read: Counter = Counter()
    for p in programs:
        for _, a in p.actions():
            if isinstance(a, Accept):
                accepts[a.address].append((p.process, a.conn))
            elif isinstance(a, Connect):
                connects[a.address].append((p.process, a.conn))
            elif isinstance(a, Send):
                sent[(p.process, a.conn)] += len(a.payload)
            elif isinstance(a, Recv):
                read[(p.process, a.conn)] += a.nbytes
    for addr in set(accepts) | set(connects):
        if len(accepts[addr]) != len(connects[addr]):
            raise ScriptError(
                f"address {addr!r}: {len(accepts[addr])} accept(s) vs {len(connects[addr])} connect(s)"
            )
        if len(accepts[addr]) == 1:
            server, client = accepts[addr][0], connects[addr][0]
            for me, peer in ((server, client), (client, server)):
                if read[me] > sent[peer]:
                    raise UnmatchedRecvError(
                        f"{me[0]}:{me[1]} reads {read[me]} bytes but peer sends {sent[peer]}"
                    )
