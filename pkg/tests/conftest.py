import pytest

from distea.model import InternalEvent, InternalEventKind, ProcessTrace, compress
from distea.tracefile import merge

E, X, I = InternalEventKind.ENTRY, InternalEventKind.RETURN, InternalEventKind.RETURNED_INTO

# Full method-event sequences of the two-process example, transcribed by hand
# from the published table (communication rows omitted: they carry no stamp).
GOLDEN_SERVER = [
    ("S::main", E, 0), ("S::init", E, 1), ("S::init", I, 2), ("S::init", X, 3),
    ("S::main", I, 4), ("S::serve", E, 5), ("S::getMax", E, 10), ("S::getMax", I, 11),
    ("S::getMax", X, 12), ("S::serve", I, 13), ("S::serve", X, 14), ("S::main", I, 15),
    ("S::main", X, 16),
]
GOLDEN_CLIENT = [
    ("C::main", E, 0), ("C::init", E, 1), ("C::init", I, 2), ("C::init", X, 3),
    ("C::main", I, 4), ("C::compute", E, 5), ("C::shuffle", E, 6), ("C::shuffle", I, 7),
    ("C::shuffle", X, 8), ("C::compute", I, 9), ("C::compute", X, 14), ("C::main", I, 15),
    ("C::main", X, 16),
]
GETMAX_IMPACT = {"S::getMax", "S::serve", "S::main", "C::compute", "C::main"}


def golden_trace(process, rows):
    seq = tuple(InternalEvent(m, k, ts, process) for m, k, ts in rows)
    return ProcessTrace(process, compress(seq), seq)


@pytest.fixture
def golden_corpus():
    return merge([golden_trace("S", GOLDEN_SERVER), golden_trace("C", GOLDEN_CLIENT)])


ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Register the label of an acceptance criterion; its outcome is reported
    in the terminal summary."""
    labels = []
    yield labels.append
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    ACCEPTANCE[request.node.name] = (status, labels[0] if labels else request.node.name)


@pytest.hookimpl(hookwrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, (status, label) in sorted(ACCEPTANCE.items()):
        terminalreporter.write_line(f"[{status}] {label}")
