"""Exit criteria. Each test reports one PASS/FAIL line in the terminal summary."""

import random
import time

import pytest

from distea.clock import ClockCell, RecvState, feed_bytes
from distea.impact import CorpusIndex, effectiveness
from distea.model import InternalEvent, InternalEventKind, ProcessTrace, compress
from distea.sim import (
    example_e,
    parse_script,
    random_script_generator,
    run_scripts,
    sequence_impact_set,
    serialize_script,
)
from distea.tracefile import parse_trace, serialize_trace

from conftest import GETMAX_IMPACT, GOLDEN_CLIENT, GOLDEN_SERVER

CAMPAIGN_RUNS = 1000
FRAMER_CASES = 10_000
ROUND_TRIPS = 1000


def rows(trace):
    return [(e.method, e.kind, e.timestamp) for e in trace.full_sequence]


def test_ac01_golden_golden(criterion):
    criterion("AC1 example E reproduces every golden example timestamp (mem, any seed, < 1 s)")
    start = time.perf_counter()
    for seed in (0, 1, 7, 12345):
        r = run_scripts(example_e(), "mem", seed)
        assert rows(r.corpus.traces["S"]) == GOLDEN_SERVER
        assert rows(r.corpus.traces["C"]) == GOLDEN_CLIENT
    s = {(m, k.value): ts for m, k, ts in rows(r.corpus.traces["S"])}
    c = {(m, k.value): ts for m, k, ts in rows(r.corpus.traces["C"])}
    assert s[("S::getMax", "E")] == 10
    assert c[("C::compute", "X")] == 14
    assert time.perf_counter() - start < 1.0


def test_ac02_worked_impact_set(criterion):
    criterion("AC2 S::getMax impact set = {S::getMax,S::serve,S::main,C::compute,C::main}, local 3 / remote 2")
    start = time.perf_counter()
    corpus = run_scripts(example_e(), "mem", 0).corpus
    s = CorpusIndex(corpus).impact_set("S::getMax")
    assert s.all == GETMAX_IMPACT
    assert s.local == {"S::getMax", "S::serve", "S::main"}
    assert s.remote == {"C::compute", "C::main"}
    assert time.perf_counter() - start < 1.0


def test_ac03_effectiveness_ratio(criterion):
    criterion("AC3 S::getMax all-ratio against MCov = 5/8")
    corpus = run_scripts(example_e(), "mem", 0).corpus
    (row,) = effectiveness(corpus, ["S::getMax"]).rows
    assert (row.size_all, row.mcov_all) == (5, 8)
    assert row.ratio_all == 5 / 8


@pytest.fixture(scope="module")
def campaign():
    """Run the random campaign once; collect violations per audit."""
    out = {"safety": [], "local": [], "clock": [], "compress": [], "queries": 0, "sizes": set()}
    start = time.perf_counter()
    for seed in range(CAMPAIGN_RUNS):
        programs = random_script_generator(seed)
        out["sizes"].add(len(programs))
        r = run_scripts(programs, "mem", seed)
        oracle = r.oracle()
        if oracle.clock_violations():
            out["clock"].append(seed)
        idx = CorpusIndex(r.corpus)
        traces = list(r.corpus.traces.values())
        for t in traces:
            if compress(t.full_sequence) != dict(t.records):
                out["compress"].append((seed, t.process))
        for q in idx.executed_methods():
            out["queries"] += 1
            dist, cov = idx.impact_set(q), idx.mcov_set(q)
            truth = oracle.impact_set(q)
            if not (truth <= dist.all <= cov.all):
                out["safety"].append((seed, q))
            if oracle.impact_set_in(q, dist.local_process) != dist.local:
                out["local"].append((seed, q))
            if sequence_impact_set(traces, q) != dist:
                out["compress"].append((seed, q))
    out["elapsed"] = time.perf_counter() - start
    return out


def test_ac04_oracle_safety(criterion, campaign):
    criterion(f"AC4 oracle <= clock-based set <= MCov and exact local restriction over {CAMPAIGN_RUNS} runs (< 60 s)")
    assert campaign["sizes"] <= {2, 3, 4} and len(campaign["sizes"]) > 1
    assert campaign["queries"] > CAMPAIGN_RUNS
    assert campaign["safety"] == []
    assert campaign["local"] == []
    assert campaign["elapsed"] < 60.0


def test_ac05_clock_condition(criterion, campaign):
    criterion("AC5 happens-before implies strictly increasing Lamport stamps in every run")
    assert campaign["clock"] == []


def test_ac06_compression_equivalence(criterion, campaign):
    criterion("AC6 impact sets from two-timestamp records equal those from full sequences")
    assert campaign["compress"] == []


def test_ac07_framer_fuzz(criterion):
    criterion(f"AC7 framer fuzz: {FRAMER_CASES} re-segmented frame sequences byte-identical (< 30 s)")
    rng = random.Random(2024)
    start = time.perf_counter()
    bad = 0
    header_splits = spanning = 0
    for _ in range(FRAMER_CASES):
        frames = [
            (rng.getrandbits(rng.choice((4, 16, 64))), rng.randbytes(rng.choice((0, 1, 3, 17, 60))))
            for _ in range(rng.randint(1, 6))
        ]
        stream = b"".join((16 + len(p)).to_bytes(8, "big") + c.to_bytes(8, "big") + p for c, p in frames)
        bounds = [0] + sorted(rng.sample(range(1, len(stream)), min(len(stream) - 1, rng.randint(0, 10)))) + [len(stream)]
        starts = {0}
        pos = 0
        for c, p in frames:
            pos += 16 + len(p)
            starts.add(pos)
        header_splits += any(any(s < b < s + 16 for s in starts) for b in bounds)
        spanning += any(any(a < s < b for s in starts) for a, b in zip(bounds, bounds[1:]))
        state, cell = RecvState(), ClockCell("R")
        applied = []
        out = bytearray()
        for a, b in zip(bounds, bounds[1:]):
            payload, _ = feed_bytes(state, cell, stream[a:b], lambda i, ts, before: applied.append((i, ts)))
            out += payload
        if bytes(out) != b"".join(p for _, p in frames) or applied != [(i, c) for i, (c, _) in enumerate(frames)]:
            bad += 1
    assert header_splits > FRAMER_CASES // 4 and spanning > FRAMER_CASES // 4
    assert bad == 0
    assert time.perf_counter() - start < 30.0


def test_ac08_transport_agreement(criterion):
    criterion("AC8 example E over loopback TCP gives traces identical to in-memory (< 5 s)")
    start = time.perf_counter()
    tcp = run_scripts(example_e(), "tcp", 0, timeout=5.0)
    mem = run_scripts(example_e(), "mem", 0)
    assert tcp.traces_raw == mem.traces_raw
    assert time.perf_counter() - start < 5.0


def _random_trace(rng, i):
    process = f"P{i}"
    ts = rng.randint(0, 100)
    events = []
    names = [f"{rng.choice('ABC')}::m{j}" for j in range(rng.randint(0, 12))]
    for name in names:
        events.append(InternalEvent(name, InternalEventKind.ENTRY, ts, process))
        for _ in range(rng.randint(1, 3)):
            ts += rng.randint(1, 9)
            kind = rng.choice((InternalEventKind.RETURN, InternalEventKind.RETURNED_INTO, InternalEventKind.ENTRY))
            events.append(InternalEvent(name, kind, ts, process))
        ts += 1
        events.append(InternalEvent(name, InternalEventKind.RETURN, ts, process))
        ts += rng.randint(1, 5)
    seq = tuple(events) if rng.random() < 0.5 else None
    return ProcessTrace(process, compress(events), seq)


def test_ac09_round_trips(criterion):
    criterion(f"AC9 trace and script serialize/parse identity over >= {ROUND_TRIPS} cases each")
    rng = random.Random(99)
    traces = [_random_trace(rng, i) for i in range(ROUND_TRIPS)]
    assert all(parse_trace(serialize_trace(t)) == t for t in traces)
    scripts = [p for seed in range(ROUND_TRIPS) for p in random_script_generator(seed)][:ROUND_TRIPS * 2]
    assert len(scripts) >= ROUND_TRIPS
    assert all(parse_script(serialize_script(p)) == p for p in scripts)
