"""Domain types shared by the probes, transport, trace store and query engine.

All types are immutable once built. Constructors validate their invariants and
raise ``ValueError`` (or a subclass) on violation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

CLOCK_MAX = 2**64 - 1


class ClockOverflowError(OverflowError):
    """A Lamport clock ran past the 64-bit range."""


class TraceIntegrityError(ValueError):
    """Trace content contradicts the recording rules."""


def check_clock(value: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise TypeError(f"clock value must be int, got {type(value).__name__}")
    if value < 0:
        raise ValueError(f"clock value must be non-negative, got {value}")
    if value > CLOCK_MAX:
        raise ClockOverflowError(f"clock value {value} exceeds 64 bits")
    return value


def check_name(name: str, what: str) -> str:
    if not isinstance(name, str) or not name:
        raise ValueError(f"{what} must be a non-empty string")
    if any(c in name for c in "\t\r\n"):
        raise ValueError(f"{what} {name!r} contains tab or newline")
    return name


class InternalEventKind(enum.Enum):
    ENTRY = "E"
    RETURN = "X"
    RETURNED_INTO = "I"

    @property
    def is_exit(self) -> bool:
        """Return and returned-into are treated alike by the impact rule."""
        return self is not InternalEventKind.ENTRY


class CommunicationEventKind(enum.Enum):
    SEND = "send"
    RECEIVE = "recv"


@dataclass(frozen=True)
class InternalEvent:
    method: str
    kind: InternalEventKind
    timestamp: int
    process: str

    def __post_init__(self):
        check_name(self.method, "method id")
        check_name(self.process, "process id")
        check_clock(self.timestamp)


@dataclass(frozen=True)
class MethodRecord:
    """First-entry and last return/returned-into stamps of one method."""

    method: str
    first_entry: int
    last_return: int

    def __post_init__(self):
        check_name(self.method, "method id")
        check_clock(self.first_entry)
        check_clock(self.last_return)
        if self.last_return <= self.first_entry:
            raise TraceIntegrityError(
                f"{self.method}: last_return {self.last_return} "
                f"<= first_entry {self.first_entry}"
            )


def compress(events: Iterable[InternalEvent]) -> dict[str, MethodRecord]:
    """Reduce a full event sequence to one record per method.

    Keeps the first Entry stamp and the latest Return/ReturnedInto stamp.
    Methods that were entered but never exited produce no record.
    """
    first: dict[str, int] = {}
    last: dict[str, int] = {}
    for ev in events:
        if ev.kind is InternalEventKind.ENTRY:
            first.setdefault(ev.method, ev.timestamp)
        else:
            if ev.method not in first:
                raise TraceIntegrityError(f"{ev.method}: exit event before any entry")
            if ev.method not in last or ev.timestamp > last[ev.method]:
                last[ev.method] = ev.timestamp
    return {m: MethodRecord(m, first[m], ts) for m, ts in last.items()}


@dataclass(frozen=True)
class ProcessTrace:
    process: str
    records: Mapping[str, MethodRecord]
    full_sequence: Optional[tuple[InternalEvent, ...]] = None

    def __post_init__(self):
        check_name(self.process, "process id")
        records = dict(self.records)
        for key, rec in records.items():
            if key != rec.method:
                raise TraceIntegrityError(f"record keyed {key!r} holds {rec.method!r}")
        object.__setattr__(self, "records", _FrozenDict(records))
        if self.full_sequence is not None:
            seq = tuple(self.full_sequence)
            object.__setattr__(self, "full_sequence", seq)
            for ev in seq:
                if ev.process != self.process:
                    raise TraceIntegrityError(
                        f"event of process {ev.process!r} in trace of {self.process!r}"
                    )
            if compress(seq) != records:
                raise TraceIntegrityError(
                    f"{self.process}: full sequence does not compress to the records"
                )

    @classmethod
    def from_records(cls, process: str, records: Iterable[MethodRecord], full_sequence=None):
        table: dict[str, MethodRecord] = {}
        for rec in records:
            if rec.method in table:
                raise TraceIntegrityError(f"duplicate record for {rec.method}")
            table[rec.method] = rec
        return cls(process, table, full_sequence)


class _FrozenDict(dict):
    """dict that refuses mutation; keeps equality and hashing of contents simple."""

    def _readonly(self, *args, **kwargs):
        raise TypeError("records are immutable")

    __setitem__ = __delitem__ = clear = pop = popitem = setdefault = update = _readonly

    def __hash__(self):
        return hash(frozenset(self.items()))


@dataclass(frozen=True)
class ImpactSet:
    query: str
    local_process: str
    local: frozenset = field(default_factory=frozenset)
    remote: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "local", frozenset(self.local))
        object.__setattr__(self, "remote", frozenset(self.remote))

    @property
    def all(self) -> frozenset:
        return self.local | self.remote

    @property
    def common(self) -> frozenset:
        return self.local & self.remote
