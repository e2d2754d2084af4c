"""Impact queries over a merged trace corpus.

A method ``m`` is impacted by query ``c`` when some return or returned-into
event of ``m`` carries a clock strictly greater than the earliest first-entry
stamp of ``c``. Because Lamport clocks only guarantee that happens-before
implies a smaller stamp, the result is a safe over-approximation across
processes and exact inside a single process.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, Optional, Sequence

from .model import ImpactSet
from .tracefile import TraceCorpus


class QueryNotExecutedError(KeyError):
    """The query method has no record in any process of the corpus."""

    def __str__(self):
        return f"query {self.args[0]!r} was not executed"


class _ProcessIndex:
    __slots__ = ("process", "stamps", "methods", "first_entry")

    def __init__(self, trace):
        self.process = trace.process
        ordered = sorted((r.last_return, r.method) for r in trace.records.values())
        self.stamps = [ts for ts, _ in ordered]
        self.methods = [m for _, m in ordered]
        self.first_entry = {m: r.first_entry for m, r in trace.records.items()}

    def after(self, q: int) -> frozenset:
        return frozenset(self.methods[bisect_right(self.stamps, q) :])


class CorpusIndex:
    """Pre-sorted view of a corpus; answers each query in O(log n + k)."""

    def __init__(self, corpus: TraceCorpus):
        self.corpus = corpus
        self._procs = [_ProcessIndex(corpus.traces[p]) for p in corpus.processes]

    def executed_methods(self) -> list[str]:
        return sorted({m for p in self._procs for m in p.first_entry})

    def origin(self, query: str) -> tuple[int, str]:
        """``(q, local_process)``: the smallest first entry of ``query`` and the
        process holding it (ties go to the lexicographically smallest id)."""
        hits = [(p.first_entry[query], p.process) for p in self._procs if query in p.first_entry]
        if not hits:
            raise QueryNotExecutedError(query)
        return min(hits)

    def impact_set(self, query: str) -> ImpactSet:
        q, local_process = self.origin(query)
        local: frozenset = frozenset()
        remote: set = set()
        for p in self._procs:
            hit = p.after(q)
            if p.process == local_process:
                local = hit
            else:
                remote |= hit
        return ImpactSet(query, local_process, local, remote)

    def mcov_set(self, query: str) -> ImpactSet:
        _, local_process = self.origin(query)
        local: frozenset = frozenset()
        remote: set = set()
        for p in self._procs:
            if p.process == local_process:
                local = frozenset(p.methods)
            else:
                remote.update(p.methods)
        return ImpactSet(query, local_process, local, remote)


def impact_set(corpus: TraceCorpus, query: str) -> ImpactSet:
    return CorpusIndex(corpus).impact_set(query)


def mcov_set(corpus: TraceCorpus, query: str) -> ImpactSet:
    return CorpusIndex(corpus).mcov_set(query)


def union_by_input_type(sets: Iterable[ImpactSet]) -> ImpactSet:
    """Union per-input impact sets of one query.

    The result's ``local_process`` is that of the first set.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one impact set")
    query = sets[0].query
    if any(s.query != query for s in sets):
        raise ValueError("impact sets belong to different queries")
    local = frozenset().union(*(s.local for s in sets))
    remote = frozenset().union(*(s.remote for s in sets))
    return ImpactSet(query, sets[0].local_process, local, remote)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class QueryEffectiveness:
    query: str
    local_process: str
    size_all: int
    size_local: int
    size_remote: int
    size_common: int
    mcov_all: int
    mcov_local: int
    mcov_remote: int

    @property
    def ratio_all(self) -> float:
        return _ratio(self.size_all, self.mcov_all)

    @property
    def ratio_local(self) -> float:
        return _ratio(self.size_local, self.mcov_local)

    @property
    def ratio_remote(self) -> float:
        return _ratio(self.size_remote, self.mcov_remote)

    # composition of the impact set, as fractions of size_all
    @property
    def local_only(self) -> float:
        return _ratio(self.size_local - self.size_common, self.size_all)

    @property
    def remote_only(self) -> float:
        return _ratio(self.size_remote - self.size_common, self.size_all)

    @property
    def common(self) -> float:
        return _ratio(self.size_common, self.size_all)

    @classmethod
    def from_sets(cls, dist: ImpactSet, cov: ImpactSet) -> "QueryEffectiveness":
        return cls(
            dist.query,
            dist.local_process,
            len(dist.all),
            len(dist.local),
            len(dist.remote),
            len(dist.common),
            len(cov.all),
            len(cov.local),
            len(cov.remote),
        )


METRICS = ("ratio_all", "ratio_local", "ratio_remote", "local_only", "remote_only", "common")


@dataclass(frozen=True)
class EffectivenessReport:
    rows: Sequence[QueryEffectiveness]
    means: dict = field(default_factory=dict)


def effectiveness(
    corpus: TraceCorpus,
    queries: Optional[Iterable[str]] = None,
    index: Optional[CorpusIndex] = None,
) -> EffectivenessReport:
    """Per-query size ratios against MCov plus composition, with means.

    ``queries`` defaults to every executed method.
    """
    index = index or CorpusIndex(corpus)
    queries = list(queries) if queries is not None else index.executed_methods()
    if not queries:
        raise ValueError("empty query set")
    rows = [
        QueryEffectiveness.from_sets(index.impact_set(q), index.mcov_set(q)) for q in queries
    ]
    means = {m: fmean(getattr(r, m) for r in rows) for m in METRICS}
    return EffectivenessReport(rows, means)
