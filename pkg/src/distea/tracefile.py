"""Trace file format and corpus merging.

A trace file is UTF-8 text::

    distea-trace v1
    process <process-id>
    <method>\t<first_entry>\t<last_return>
    ...
    #events
    <method>\t<E|X|I>\t<timestamp>
    ...

The ``#events`` section is present only for traces recorded in oracle mode
and lists every stamped internal event in program order. Record lines are
written sorted by ``(first_entry, method)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .model import (
    InternalEvent,
    InternalEventKind,
    MethodRecord,
    ProcessTrace,
    TraceIntegrityError,
)

MAGIC = "distea-trace v1"
EVENTS_MARKER = "#events"
TRACE_SUFFIX = ".trace"


class TraceFormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None, source: str | None = None):
        self.lineno = lineno
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


def serialize_trace(trace: ProcessTrace) -> bytes:
    lines = [MAGIC, f"process {trace.process}"]
    for rec in sorted(trace.records.values(), key=lambda r: (r.first_entry, r.method)):
        lines.append(f"{rec.method}\t{rec.first_entry}\t{rec.last_return}")
    if trace.full_sequence is not None:
        lines.append(EVENTS_MARKER)
        for ev in trace.full_sequence:
            lines.append(f"{ev.method}\t{ev.kind.value}\t{ev.timestamp}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _int_field(text: str, lineno: int, source) -> int:
    if not text.isdigit():
        raise TraceFormatError(f"expected a non-negative integer, got {text!r}", lineno, source)
    return int(text)


def parse_trace(data: bytes | str, source: str | None = None) -> ProcessTrace:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].rstrip("\r") != MAGIC:
        got = lines[0] if lines else "<empty>"
        raise TraceFormatError(f"bad or unsupported header {got!r}", 1, source)
    if len(lines) < 2 or not lines[1].startswith("process "):
        raise TraceFormatError("expected 'process <id>'", 2, source)
    process = lines[1][len("process ") :]
    if not process:
        raise TraceFormatError("empty process id", 2, source)

    records: dict[str, MethodRecord] = {}
    events: list[InternalEvent] | None = None
    for lineno, line in enumerate(lines[2:], start=3):
        line = line.rstrip("\r")
        if line == EVENTS_MARKER:
            if events is not None:
                raise TraceFormatError("second #events section", lineno, source)
            events = []
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not parts[0]:
            raise TraceFormatError(f"expected 3 tab-separated fields: {line!r}", lineno, source)
        method = parts[0]
        try:
            if events is None:
                if method in records:
                    raise TraceFormatError(f"duplicate record for {method}", lineno, source)
                records[method] = MethodRecord(
                    method, _int_field(parts[1], lineno, source), _int_field(parts[2], lineno, source)
                )
            else:
                try:
                    kind = InternalEventKind(parts[1])
                except ValueError:
                    raise TraceFormatError(f"unknown event kind {parts[1]!r}", lineno, source) from None
                events.append(
                    InternalEvent(method, kind, _int_field(parts[2], lineno, source), process)
                )
        except TraceFormatError:
            raise
        except ValueError as exc:
            raise TraceFormatError(str(exc), lineno, source) from exc
    try:
        return ProcessTrace(process, records, tuple(events) if events is not None else None)
    except TraceIntegrityError as exc:
        raise TraceFormatError(str(exc), None, source) from exc


def read_trace(path: str | os.PathLike) -> ProcessTrace:
    path = Path(path)
    return parse_trace(path.read_bytes(), source=str(path))


def write_trace(trace: ProcessTrace, path: str | os.PathLike) -> None:
    Path(path).write_bytes(serialize_trace(trace))


def gather(paths: Iterable[str | os.PathLike]) -> list[Path]:
    """Expand directories to the ``*.trace`` files they contain (sorted)."""
    found: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(p.glob(f"*{TRACE_SUFFIX}")))
        else:
            found.append(p)
    return found


@dataclass(frozen=True)
class TraceCorpus:
    run_id: str
    traces: Mapping[str, ProcessTrace]

    @property
    def processes(self) -> list[str]:
        return sorted(self.traces)

    def record_count(self) -> int:
        return sum(len(t.records) for t in self.traces.values())

    def methods(self) -> set[str]:
        return {m for t in self.traces.values() for m in t.records}


class DuplicateProcessError(ValueError):
    pass


def merge(traces: Iterable[ProcessTrace], run_id: str = "run") -> TraceCorpus:
    table: dict[str, ProcessTrace] = {}
    for t in traces:
        if t.process in table:
            raise DuplicateProcessError(f"process {t.process!r} appears twice")
        table[t.process] = t
    if not table:
        raise ValueError("merge needs at least one trace")
    return TraceCorpus(run_id, MappingProxyType(table))


def load_corpus(paths: Iterable[str | os.PathLike], run_id: str = "run") -> TraceCorpus:
    return merge((read_trace(p) for p in gather(paths)), run_id=run_id)
