"""Brute-force happens-before oracle.

Built from the complete per-process event logs of a harness run: internal
events plus one communication event per frame sent and per frame header
received. The happens-before relation is the transitive closure of program
order (the order events were logged in one process) and send -> receive
pairs. Impact sets are then answered by graph reachability alone; no clock
value takes part in the decision.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

from ..model import (
    CommunicationEventKind,
    ImpactSet,
    InternalEvent,
    InternalEventKind,
    ProcessTrace,
)


@dataclass(frozen=True)
class CommEvent:
    """A frame leaving or entering a process.

    ``channel`` names one direction of one connection; the n-th SEND and the
    n-th RECEIVE on the same channel are the two ends of one message.
    """

    kind: CommunicationEventKind
    channel: tuple
    index: int
    clock: int
    process: str


LogEntry = Union[InternalEvent, CommEvent]


class OracleError(RuntimeError):
    pass


class HappensBeforeOracle:
    def __init__(self, logs: Mapping[str, Sequence[LogEntry]]):
        self.nodes: list[LogEntry] = []
        succ: list[list[int]] = []
        sends: dict[tuple, int] = {}
        recvs: dict[tuple, int] = {}
        for process in sorted(logs):
            prev = None
            for entry in logs[process]:
                if entry.process != process:
                    raise OracleError(f"entry of {entry.process} logged under {process}")
                n = len(self.nodes)
                self.nodes.append(entry)
                succ.append([])
                if prev is not None:
                    succ[prev].append(n)
                prev = n
                if isinstance(entry, CommEvent):
                    key = (entry.channel, entry.index)
                    table = sends if entry.kind is CommunicationEventKind.SEND else recvs
                    if key in table:
                        raise OracleError(f"duplicate {entry.kind.value} for {key}")
                    table[key] = n
        for key, r in recvs.items():
            if key not in sends:
                raise OracleError(f"receive without a send: {key}")
            succ[sends[key]].append(r)
        self.succ = succ
        self.order = self._topological_order()
        # desc[n]: bitset of nodes strictly after n
        desc = [0] * len(self.nodes)
        for n in reversed(self.order):
            acc = 0
            for s in succ[n]:
                acc |= desc[s] | (1 << s)
            desc[n] = acc
        self.descendants = desc

        self._exit_mask: dict[str, int] = defaultdict(int)
        self._exit_mask_by_proc: dict[tuple[str, str], int] = defaultdict(int)
        self._first_entries: dict[str, list[int]] = defaultdict(list)
        seen_entry: set[tuple[str, str]] = set()
        for n, e in enumerate(self.nodes):
            if not isinstance(e, InternalEvent):
                continue
            if e.kind is InternalEventKind.ENTRY:
                if (e.process, e.method) not in seen_entry:
                    seen_entry.add((e.process, e.method))
                    self._first_entries[e.method].append(n)
            else:
                self._exit_mask[e.method] |= 1 << n
                self._exit_mask_by_proc[(e.process, e.method)] |= 1 << n

    def _topological_order(self) -> list[int]:
        indeg = [0] * len(self.nodes)
        for outs in self.succ:
            for s in outs:
                indeg[s] += 1
        queue = deque(i for i, d in enumerate(indeg) if d == 0)
        order = []
        while queue:
            n = queue.popleft()
            order.append(n)
            for s in self.succ[n]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    queue.append(s)
        if len(order) != len(self.nodes):
            raise OracleError("event graph has a cycle")
        return order

    def happens_before(self, a: int, b: int) -> bool:
        return bool(self.descendants[a] >> b & 1)

    def internal_nodes(self) -> list[int]:
        return [i for i, e in enumerate(self.nodes) if isinstance(e, InternalEvent)]

    def executed(self, method: str) -> bool:
        return method in self._first_entries

    def _reach_from(self, query: str) -> int:
        starts = self._first_entries.get(query)
        if not starts:
            raise KeyError(query)
        acc = 0
        for n in starts:
            acc |= self.descendants[n]
        return acc

    def impact_set(self, query: str) -> set[str]:
        reach = self._reach_from(query)
        hit = {m for m, mask in self._exit_mask.items() if reach & mask}
        hit.add(query)
        return hit

    def impact_set_in(self, query: str, process: str) -> set[str]:
        """Methods whose exit events *in ``process``* happen after the query."""
        reach = self._reach_from(query)
        return {
            m
            for (p, m), mask in self._exit_mask_by_proc.items()
            if p == process and reach & mask
        }

    def clock_violations(self) -> list[tuple[int, int]]:
        """Ordered internal-event pairs whose stamps are not increasing.

        Pushes, along the topological order, the largest stamp of any internal
        event before each node. A node whose own stamp does not exceed it
        violates the clock condition against that predecessor.
        """
        best = [-1] * len(self.nodes)
        arg = [-1] * len(self.nodes)
        bad = []
        for n in self.order:
            e = self.nodes[n]
            if isinstance(e, InternalEvent) and best[n] >= e.timestamp:
                bad.append((arg[n], n))
            if isinstance(e, InternalEvent):
                carry, who = max((best[n], arg[n]), (e.timestamp, n))
            else:
                carry, who = best[n], arg[n]
            for s in self.succ[n]:
                if carry > best[s]:
                    best[s], arg[s] = carry, who
        return bad

    def clock_violations_pairwise(self) -> list[tuple[int, int]]:
        """Same audit by enumerating every ordered pair; quadratic."""
        internal = self.internal_nodes()
        return [
            (a, b)
            for a in internal
            for b in internal
            if self.happens_before(a, b) and not self.nodes[a].timestamp < self.nodes[b].timestamp
        ]


def oracle_impact_set(oracle: HappensBeforeOracle, query: str) -> set[str]:
    return oracle.impact_set(query)


def sequence_impact_set(traces: Iterable[ProcessTrace], query: str) -> ImpactSet:
    """Clock-based impact set evaluated on full event sequences rather than
    on the compressed records."""
    traces = list(traces)
    entries = [
        (ev.timestamp, t.process)
        for t in traces
        for ev in t.full_sequence
        if ev.method == query and ev.kind is InternalEventKind.ENTRY
    ]
    if not entries:
        raise KeyError(query)
    q, local_process = min(entries)
    local, remote = set(), set()
    for t in traces:
        hit = {ev.method for ev in t.full_sequence if ev.kind.is_exit and ev.timestamp > q}
        (local if t.process == local_process else remote).update(hit)
    return ImpactSet(query, local_process, local, remote)
