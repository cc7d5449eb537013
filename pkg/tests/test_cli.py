import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from lipcover.cli import BENCH_COLUMNS, EXIT_CODES, main, read_config_file
from lipcover.core import IterationTrace, Status
from lipcover.io import TRACE_COLUMNS, read_trace_csv, summary_dict, trace_to_csv_text, write_trace_csv

SUMMARY_KEYS = {"status", "best_point", "best_value", "delta_global", "gamma", "oracle_calls",
                "iterations", "infeasible_queries", "subsolver_node_limit", "wall_ms", "notes",
                "config"}


class TestSolve:
    def test_minimum_exit_zero(self, tmp_path, capsys):
        trace, summary = tmp_path / "t.csv", tmp_path / "s.json"
        code = main(["solve", "--problem", "APXB-2", "--algorithm", "relax-project",
                     "--trace", str(trace), "--summary", str(summary)])
        assert code == 0
        assert "status=Minimum" in capsys.readouterr().out
        data = json.loads(summary.read_text())
        assert set(data) == SUMMARY_KEYS
        assert data["status"] == "Minimum" and data["infeasible_queries"] == 0
        assert data["config"]["problem"] == "APXB-2"
        rows = read_trace_csv(trace)
        assert len(rows) == data["iterations"]
        assert all(r.relax_point is not None for r in rows)

    def test_infeasible_exit_two(self, tmp_path):
        summary = tmp_path / "s.json"
        code = main(["solve", "--problem", "INF", "--budget", "5", "--summary", str(summary)])
        assert code == 2
        data = json.loads(summary.read_text())
        assert data["delta_global"] is None and data["gamma"] >= 0

    def test_budget_one_exit_three(self):
        assert main(["solve", "--problem", "APXB-1", "--budget", "1"]) == 3

    def test_custom_start(self, tmp_path):
        summary = tmp_path / "s.json"
        # three queries never reach the feasible set, so the budget ends with an infinite gap
        code = main(["solve", "--problem", "APXB-1", "--start", "-9.5", "--budget", "3",
                     "--summary", str(summary)])
        assert code == 2
        data = json.loads(summary.read_text())
        assert data["config"]["q1"] == [-9.5] and data["config"]["start"] == "custom"

    def test_help_exit_zero(self, capsys):
        assert main(["solve", "--help"]) == 0

    @pytest.mark.parametrize("argv", [
        ["solve", "--problem", "P9"],
        ["solve"],
        ["solve", "--problem", "P1", "--eta", "-1"],
        ["solve", "--problem", "APXB-2", "--algorithm", "relax-project", "--start", "10"],
        ["solve", "--problem", "APXB-1", "--start", "a,b"],
        [],
    ])
    def test_usage_errors_exit_one(self, argv):
        assert main(argv) == 1

    def test_exit_code_table(self):
        assert EXIT_CODES == {Status.MINIMUM: 0, Status.INFEASIBLE: 2, Status.BUDGET_EXHAUSTED: 3}


class TestConfigFile:
    def test_file_supplies_required_flags(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nproblem = APXB-2\nalgorithm=relax-project\nno-lp-bound=true\n")
        assert main(["--config", str(cfg), "solve"]) == 0

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("problem=APXB-1\nbudget=400\n")
        assert main(["--config", str(cfg), "solve", "--budget", "1"]) == 3

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus=1\n")
        assert main(["--config", str(cfg), "solve", "--problem", "P1"]) == 1

    def test_malformed(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("problem APXB-1\n")
        assert main(["--config", str(cfg), "solve"]) == 1
        assert main(["--config", str(tmp_path / "missing.cfg"), "solve"]) == 1

    def test_reader(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("--lip-j=3\n\nmax_nodes = 10 # cap\n")
        assert read_config_file(cfg) == {"lip_j": "3", "max_nodes": "10"}


class TestBudgetCommand:
    def test_values(self, capsys):
        assert main(["budget", "--d", "2", "--diam", str(20 * math.sqrt(2)), "--lip-j", "75",
                     "--eta", "0.1", "--lip-h", "6", "--delta", "1e-5"]) == 0
        out = capsys.readouterr().out
        assert "t_sufficient_unconstrained=1200001" in out
        assert "t_sufficient_constrained=961200001" in out

    def test_mu_convex(self, capsys):
        assert main(["budget", "--d", "1", "--diam", "1", "--lip-j", "1", "--eta", "1",
                     "--lip-h", "1", "--mu", "1", "--grad-j-max", "2", "--grad-h-max", "2"]) == 0
        out = capsys.readouterr().out
        assert "kappa=2.5" in out and "t_sufficient_mu_convex=3" in out

    def test_incomplete_mu(self):
        assert main(["budget", "--d", "1", "--diam", "1", "--lip-j", "1", "--eta", "1",
                     "--mu", "1"]) == 1


def test_bench_columns(tmp_path):
    out, traces = tmp_path / "bench.csv", tmp_path / "traces"
    assert main(["bench", "--problems", "APXB-2", "--out", str(out), "--trace-dir", str(traces)]) == 0
    rows = list(csv.reader(out.open(newline="")))
    assert rows[0] == BENCH_COLUMNS and len(BENCH_COLUMNS) == 8
    algos = [(r[1], r[2]) for r in rows[1:]]
    assert algos == [("constrained", "infeasible"), ("constrained", "feasible"),
                     ("relax-project", "feasible")]
    assert all(r[6] != "" and float(r[6]) <= 0.01 + 1e-6 for r in rows[1:])
    assert len(list(traces.iterdir())) == 3


def test_mountaincar_command(tmp_path, capsys):
    summary, per_query = tmp_path / "mc.json", tmp_path / "mc.csv"
    assert main(["mountaincar", "--summary", str(summary), "--out", str(per_query)]) == 0
    data = json.loads(summary.read_text())
    assert data["constrained"]["episodes"] == 110
    assert data["unconstrained"]["episodes"] == 110
    rows = list(csv.reader(per_query.open(newline="")))
    assert len(rows) == 21


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lipcover", "budget", "--d", "1", "--diam", "1",
                           "--lip-j", "1", "--eta", "1"], capture_output=True, text=True)
    assert proc.returncode == 0 and "t_sufficient_unconstrained=2" in proc.stdout


class TestTraceFormat:
    def record(self, k, relax=None):
        return IterationTrace(iter=k, query=np.array([0.1 * k, 1 / 3]), j_at_query=1e-17 * k,
                              h_at_query=-0.5, feasible_flag=True, within_delta_flag=False,
                              delta_global=math.inf, surrogate_lb=-math.inf, subsolver_nodes=7,
                              wall_ms=3, relax_point=relax, phase="main",
                              projection_clamped=False)

    def test_round_trip(self, tmp_path):
        recs = [self.record(1), self.record(2, relax=np.array([0.25, -1.0]))]
        path = tmp_path / "t.csv"
        write_trace_csv(path, recs)
        back = read_trace_csv(path)
        assert len(back) == 2
        for a, b in zip(recs, back):
            np.testing.assert_array_equal(a.query, b.query)
            assert a.j_at_query == b.j_at_query and b.delta_global == math.inf
            assert b.surrogate_lb == -math.inf
        assert back[0].relax_point is None
        np.testing.assert_array_equal(back[1].relax_point, [0.25, -1.0])

    def test_header(self):
        text = trace_to_csv_text([self.record(1)])
        assert text.splitlines()[0].split(",") == TRACE_COLUMNS
        assert "true" in text and "false" in text

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_trace_csv(path)

    def test_summary_nulls(self):
        from lipcover.core import RunOutcome
        d = summary_dict(RunOutcome(Status.INFEASIBLE, gamma=0.5), {"x": 1})
        assert set(d) == SUMMARY_KEYS
        assert d["best_point"] is None and d["delta_global"] is None and d["gamma"] == 0.5
        json.dumps(d, allow_nan=False)
