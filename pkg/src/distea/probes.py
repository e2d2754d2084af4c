"""In-process method-event monitor.

Programs call :func:`on_entry`, :func:`on_return` and :func:`on_returned_into`
(or the matching :class:`MonitorTable` methods) at method boundaries. Each
call stamps one event on the process clock. Only two stamps per method are
kept: the first entry and the most recent return or returned-into.
"""

from __future__ import annotations

from typing import BinaryIO, Callable, Optional

from .clock import ClockCell
from .model import (
    InternalEvent,
    InternalEventKind,
    MethodRecord,
    ProcessTrace,
    TraceIntegrityError,
    check_name,
)

EventListener = Callable[[InternalEvent], None]


class MonitorTable:
    """Two-timestamp table for one process.

    With ``oracle=True`` every stamped event is also appended to
    ``oracle_log`` so the full sequence can be dumped alongside the records.
    ``listener`` is invoked for every event while the clock lock is held.
    """

    def __init__(
        self,
        process: str,
        cell: Optional[ClockCell] = None,
        oracle: bool = False,
        listener: Optional[EventListener] = None,
    ):
        self.process = check_name(process, "process id")
        self.cell = cell if cell is not None else ClockCell(process)
        if self.cell.process != self.process:
            raise ValueError("clock cell belongs to another process")
        self.first_entry: dict[str, int] = {}
        self.last_return: dict[str, int] = {}
        self.oracle_log: Optional[list[InternalEvent]] = [] if oracle else None
        self.listener = listener

    def _record(self, method: str, kind: InternalEventKind) -> int:
        check_name(method, "method id")
        with self.cell.lock:
            if kind is not InternalEventKind.ENTRY and method not in self.first_entry:
                raise TraceIntegrityError(
                    f"{self.process}: {kind.name.lower()} of {method} without prior entry"
                )
            ts = self.cell.stamp()
            if kind is InternalEventKind.ENTRY:
                self.first_entry.setdefault(method, ts)
            else:
                self.last_return[method] = ts
            if self.oracle_log is not None or self.listener is not None:
                ev = InternalEvent(method, kind, ts, self.process)
                if self.oracle_log is not None:
                    self.oracle_log.append(ev)
                if self.listener is not None:
                    self.listener(ev)
            return ts

    def on_entry(self, method: str) -> int:
        return self._record(method, InternalEventKind.ENTRY)

    def on_return(self, method: str) -> int:
        return self._record(method, InternalEventKind.RETURN)

    def on_returned_into(self, method: str) -> int:
        return self._record(method, InternalEventKind.RETURNED_INTO)

    def snapshot(self) -> ProcessTrace:
        """Current contents as an immutable trace. Needs quiescence."""
        with self.cell.lock:
            records = {
                m: MethodRecord(m, self.first_entry[m], ts)
                for m, ts in self.last_return.items()
            }
            seq = tuple(self.oracle_log) if self.oracle_log is not None else None
        return ProcessTrace(self.process, records, seq)

    def dump(self, sink: BinaryIO) -> None:
        from .tracefile import serialize_trace

        sink.write(serialize_trace(self.snapshot()))


def on_entry(table: MonitorTable, method: str) -> None:
    table.on_entry(method)


def on_return(table: MonitorTable, method: str) -> None:
    table.on_return(method)


def on_returned_into(table: MonitorTable, method: str) -> None:
    table.on_returned_into(method)


def dump_trace(table: MonitorTable, sink: BinaryIO) -> None:
    table.dump(sink)
