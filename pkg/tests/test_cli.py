import csv
import json

import numpy as np
import pytest

from shapecomplex.cli import TRACE_HEADER, main, merge_traces, read_trace
from shapecomplex.exceptions import ParseError
from shapecomplex.fields import read_fld
from shapecomplex.problem import SolverConfig, load_problem, save_problem

from problems import tiny_problem


@pytest.fixture
def annulus_dir(tmp_path):
    out = tmp_path / "annulus"
    assert main(["synth", "annulus", "--size", "16", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_synth_writes_problem_truth_and_image(annulus_dir):
    p = load_problem(annulus_dir / "problem.json")
    assert p.grid.dims == (16, 16)
    truth = read_fld(annulus_dir / "truth.fld")
    assert set(np.unique(truth)) <= set(p.hierarchy.leaves)
    assert read_fld(annulus_dir / "image.fld").shape == (16, 16)


@pytest.mark.parametrize("solver", ["al", "pf"])
def test_solve_converges_and_writes_artifacts(annulus_dir, tmp_path, solver):
    out = tmp_path / f"run_{solver}"
    code = main(["solve", "--config", str(annulus_dir / "problem.json"), "--solver", solver,
                 "--max-iters", "20000", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True and summary["solver"] == solver
    assert summary["config"]["max_iters"] == 20000
    for name in ("background", "wall", "interior"):
        assert read_fld(out / f"u_{name}.fld").shape == (16, 16)
    assert read_fld(out / "labels.fld").shape == (16, 16)
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == TRACE_HEADER
    assert len(rows) - 1 == summary["iterations"]
    if solver == "pf":
        assert summary["max_G"] is None and rows[1][2] == "nan"


def test_not_converged_exit_code_keeps_artifacts(annulus_dir, tmp_path):
    out = tmp_path / "short"
    assert main(["solve", "--config", str(annulus_dir / "problem.json"), "--max-iters", "1",
                 "--out", str(out)]) == 2
    assert json.loads((out / "summary.json").read_text())["converged"] is False
    assert (out / "labels.fld").exists() and (out / "trace.csv").exists()


@pytest.mark.parametrize("argv", [
    [],
    ["solve"],
    ["solve", "--config", "x.json"],
    ["frobnicate"],
    ["synth", "annulus"],
    ["synth", "annulus", "--size", "8", "--out", "OUT"],
    ["synth", "annulus", "--threads", "0", "--out", "OUT"],
    ["solve", "--config", "missing.json", "--out", "OUT"],
    ["solve", "--config", "CFG", "--solver", "xx", "--out", "OUT"],
    ["solve", "--config", "CFG", "--tau", "-1", "--out", "OUT"],
])
def test_usage_and_io_errors_exit_1(tmp_path, annulus_dir, argv):
    argv = [a.replace("OUT", str(tmp_path / "o")).replace("CFG", str(annulus_dir / "problem.json"))
            for a in argv]
    assert main(argv) == 1


def test_verify_pass_and_fail(tmp_path):
    p = tiny_problem(0, config=SolverConfig(max_iters=5000))
    cfg = save_problem(p, tmp_path / "tiny")
    out = tmp_path / "v"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["pass"] is True and verdict["gap"] == pytest.approx(0.0, abs=1e-9)
    assert main(["verify", "--config", cfg, "--max-iters", "1"]) == 3


def test_verify_too_large_is_an_error(annulus_dir):
    assert main(["verify", "--config", str(annulus_dir / "problem.json")]) == 1


def _trace(path, n):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for i in range(1, n + 1):
            w.writerow([i, 10.0 / i, 0.5 / i, 0.1 / i])
    return str(path)


def test_report_single_trace_passes_through(tmp_path, capsys):
    t = _trace(tmp_path / "a.csv", 3)
    assert main(["report", t]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["run_id", "iter", "metric", "value"]
    assert len(rows) == 1 + 3 * 3
    assert {r[0] for r in rows[1:]} == {"a"}
    assert rows[1] == ["a", "1", "energy", "10.0"]


def test_report_merges_traces_of_different_lengths(tmp_path):
    a = _trace(tmp_path / "a.csv", 2)
    (tmp_path / "runB").mkdir()
    b = _trace(tmp_path / "runB" / "trace.csv", 5)
    out = tmp_path / "merged.csv"
    assert main(["report", a, b, "--out", str(out)]) == 0
    rows = list(csv.reader(out.read_text().splitlines()))[1:]
    assert sum(r[0] == "a" for r in rows) == 6
    assert sum(r[0] == "runB" for r in rows) == 15
    assert max(int(r[1]) for r in rows if r[0] == "a") == 2


def test_report_run_ids(tmp_path):
    a = _trace(tmp_path / "a.csv", 1)
    rows = merge_traces([a], ["first"])
    assert {r[0] for r in rows} == {"first"}
    assert main(["report", a, "--run-id", "x", "--run-id", "y"]) == 1


@pytest.mark.parametrize("content", ["", "iter,energy\n1,2\n", "iter,energy,max_G,max_du\n",
                                     "iter,energy,max_G,max_du\n1,x,0,0\n"])
def test_report_rejects_bad_traces(tmp_path, content):
    path = tmp_path / "t.csv"
    path.write_text(content)
    with pytest.raises(ParseError):
        read_trace(path)
    assert main(["report", str(path)]) == 1


def test_solve_summaries_are_reproducible(annulus_dir, tmp_path):
    docs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        main(["solve", "--config", str(annulus_dir / "problem.json"), "--threads", "1",
              "--max-iters", "300", "--out", str(out)])
        doc = json.loads((out / "summary.json").read_text())
        doc.pop("wall_time")
        docs.append(json.dumps(doc, sort_keys=True))
        assert (out / "labels.fld").read_bytes() == (tmp_path / "r0" / "labels.fld").read_bytes()
    assert docs[0] == docs[1]
