import io
import subprocess
import sys

import pytest

from distea.cli import main
from distea.sim import example_e_paths
from distea.tracefile import read_trace

from conftest import GOLDEN_CLIENT, GOLDEN_SERVER


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture
def traces(tmp_path):
    scripts = [str(p) for p in example_e_paths()]
    code, _ = run("run", *scripts, "--transport", "mem", "--seed", "1", "--out-dir", str(tmp_path))
    assert code == 0
    return tmp_path


def test_run_writes_golden(traces):
    s = read_trace(traces / "S.trace")
    c = read_trace(traces / "C.trace")
    assert [(e.method, e.kind, e.timestamp) for e in s.full_sequence] == GOLDEN_SERVER
    assert [(e.method, e.kind, e.timestamp) for e in c.full_sequence] == GOLDEN_CLIENT


def test_run_same_seed_byte_identical(traces, tmp_path_factory):
    other = tmp_path_factory.mktemp("again")
    scripts = [str(p) for p in example_e_paths()]
    run("run", *scripts, "--seed", "1", "--out-dir", str(other))
    for name in ("S.trace", "C.trace"):
        assert (traces / name).read_bytes() == (other / name).read_bytes()


def test_run_missing_script(tmp_path):
    code, _ = run("run", str(tmp_path / "missing.script"), "--out-dir", str(tmp_path))
    assert code == 2


def test_usage_error_exit_code():
    assert run("frobnicate")[0] == 2
    assert run("query")[0] == 2


def test_query_lines(traces):
    code, out = run("query", str(traces), "-q", "S::getMax", "--format", "lines", "--baseline", "mcov")
    assert code == 0
    lines = [ln.split("\t") for ln in out.splitlines()]
    members = [m for q, sub, m in lines if sub == "all"]
    # ordered by the stamp of each method's last exit, then name
    assert members == ["S::getMax", "C::compute", "S::serve", "C::main", "S::main"]
    assert {m for q, sub, m in lines if sub == "local"} == {"S::getMax", "S::serve", "S::main"}
    assert {m for q, sub, m in lines if sub == "remote"} == {"C::compute", "C::main"}
    assert ["S::getMax", "ratio-all", "5/8"] in lines


def test_query_failure(traces):
    code, out = run("query", str(traces), "-q", "S::getMax", "-q", "S::never", "--format", "lines")
    assert code == 1
    assert "S::never\terror\tnot-executed" in out.splitlines()


def test_query_file(traces, tmp_path):
    qf = tmp_path / "q.txt"
    qf.write_text("# queries\nS::getMax\n\nC::shuffle\n")
    code, out = run("query", str(traces), "--query-file", str(qf))
    assert code == 0 and "C::shuffle" in out and "S::getMax" in out


def test_query_bad_trace(tmp_path):
    bad = tmp_path / "bad.trace"
    bad.write_text("not a trace\n")
    assert run("query", str(bad), "-q", "x")[0] == 2


def test_report(traces):
    code, out = run("report", str(traces), "--format", "lines")
    assert code == 0
    lines = out.splitlines()
    header, rows, mean = lines[0].split("\t"), lines[1:-1], lines[-1]
    assert len(rows) == 8
    col = header.index("ratio_all")
    ratios = [float(r.split("\t")[col]) for r in rows]
    assert all(0 < x <= 1 for x in ratios)
    assert dict(zip(header, rows[[r.split("\t")[0] for r in rows].index("S::getMax")].split("\t")))["ratio_all"] == "0.625000"
    assert mean.startswith("mean")
    assert run("report", str(traces), "--format", "lines")[1] == out
    assert run("report", str(traces))[0] == 0


def test_report_single_process(traces):
    code, out = run("report", str(traces / "S.trace"), "--format", "lines")
    header = out.splitlines()[0].split("\t")
    for row in out.splitlines()[1:-1]:
        vals = dict(zip(header, row.split("\t")))
        assert vals["size_remote"] == "0" and float(vals["ratio_remote"]) == 0.0


def test_merge_summary(traces):
    code, out = run("merge", str(traces))
    assert code == 0 and out.splitlines()[-1] == "total\t8"


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "distea", "demo", "--out-dir", str(tmp_path)],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert "5/8" in proc.stdout
