"""Command-line interface: exit codes, reports, and trace files."""

import json

import numpy as np
import pytest

import penaltyflow as pf
from penaltyflow.cli import EXIT_OK, EXIT_PARSE, EXIT_SOLVER, main


def _write_json(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _descent_qp(tmp_path):
    # interior optimum at (2, 0), constraint x0 >= -1 never active
    data = pf.QpData(H=np.eye(2), F=np.array([-2.0, 0.0]),
                     A=np.array([[-1.0, 0.0]]), B=np.array([-1.0]))
    p = tmp_path / "qp.json"
    pf.save_qp(data, p)
    return str(p)


def _knapsack_file(tmp_path):
    return _write_json(tmp_path, "knap.json",
                       {"n": 2, "H": [0.0, 0.0, 0.0, 0.0],
                        "F": [-1.0, -2.0], "A": [1.0, 1.0], "B": [1.0]})


class TestSolveQp:
    def test_converged_run_writes_trace_and_report(self, tmp_path, capsys):
        trace = tmp_path / "traj.csv"
        report = tmp_path / "report.txt"
        rc = main(["solve-qp", _descent_qp(tmp_path),
                   "--trace", str(trace), "--report", str(report)])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        assert out.startswith("status=converged")
        assert "stationarity=" in out
        assert trace.read_text().splitlines()[0] == \
            "t,rho,psi,g,f,fbar,x0,x1"
        assert report.read_text().startswith("status=converged")

    def test_budget_exhaustion_is_solver_failure(self, tmp_path, capsys):
        rc = main(["solve-qp", _descent_qp(tmp_path), "--max-steps", "5"])
        assert rc == EXIT_SOLVER
        assert "status=step_budget_exhausted" in capsys.readouterr().out

    def test_missing_file(self, tmp_path, capsys):
        rc = main(["solve-qp", str(tmp_path / "absent.json")])
        assert rc == EXIT_PARSE
        assert "error:" in capsys.readouterr().err


class TestBench:
    def test_small_sweep_passes(self, tmp_path, capsys):
        report = tmp_path / "bench.csv"
        rc = main(["bench", "--count", "2", "--n", "3", "--nc", "2",
                   "--report", str(report)])
        assert rc == EXIT_OK
        assert "all passed" in capsys.readouterr().out
        lines = report.read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("seed,n,nc,status")

    def test_trace_directory(self, tmp_path, capsys):
        trace_dir = tmp_path / "traces"
        rc = main(["bench", "--count", "1", "--n", "3", "--nc", "2",
                   "--report", str(tmp_path / "bench.csv"),
                   "--trace", str(trace_dir)])
        assert rc == EXIT_OK
        traj = (trace_dir / "traj_seed0.csv").read_text().splitlines()
        assert traj[0] == "t,psi,f_ratio"
        assert len(traj) > 1

    def test_oracle_bound_rejected_up_front(self, tmp_path, capsys):
        rc = main(["bench", "--count", "1", "--n", "2", "--nc", "26",
                   "--report", str(tmp_path / "bench.csv")])
        assert rc == EXIT_PARSE
        assert "exceeds the oracle bound" in capsys.readouterr().err

    def test_failing_seed_reported(self, tmp_path, capsys):
        rc = main(["bench", "--count", "1", "--n", "3", "--nc", "2",
                   "--max-steps", "5",
                   "--report", str(tmp_path / "bench.csv")])
        captured = capsys.readouterr()
        assert rc == EXIT_SOLVER
        assert "FAILING" in captured.out
        assert "failing seeds: 0" in captured.err


class TestMpc:
    def test_builtin_demo_short_run(self, capsys):
        rc = main(["mpc", "--steps", "5"])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        assert out.startswith("steps=5")
        assert "bounds_ok=True" in out
        assert "all_converged=True" in out

    def test_scenario_file_with_trace(self, tmp_path, capsys):
        doc = {
            "plant": {"n_xi": 2, "n_u": 1,
                      "A_d": [1.0, 0.1, 0.0, 1.0],
                      "B_d": [0.005, 0.1]},
            "horizon": 3,
            "u_max": 0.5,
            "Q": [1.0, 0.0, 0.0, 1.0],
            "R": [0.1],
            "P": [1.0, 0.0, 0.0, 1.0],
            "xi0": [0.2, 0.0],
            "steps": 4,
        }
        trace = tmp_path / "loop.csv"
        rc = main(["mpc", _write_json(tmp_path, "s.json", doc),
                   "--trace", str(trace)])
        assert rc == EXIT_OK
        lines = trace.read_text().splitlines()
        assert lines[0] == "k,xi0,xi1,u0,status,psi_final,g_final,steps"
        assert len(lines) == 5


class TestMinlp:
    def test_knapsack(self, tmp_path, capsys):
        report = tmp_path / "minlp.csv"
        rc = main(["minlp", _knapsack_file(tmp_path),
                   "--report", str(report)])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        assert "best=01" in out
        assert "gap=0.000000e+00" in out
        lines = report.read_text().splitlines()
        assert lines[0].startswith("s,x_s,f_original")
        assert lines[1].split(",")[1] == "01"

    def test_large_problem_skips_oracle(self, tmp_path, capsys):
        doc = {"n": 21, "H": [0.0] * 441, "F": [-1.0] * 21}
        rc = main(["minlp", _write_json(tmp_path, "b21.json", doc),
                   "--max-minima", "1",
                   "--report", str(tmp_path / "r.csv")])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        assert "best=" + "1" * 21 in out
        assert "gap=skipped" in out

    def test_infeasible_natives(self, tmp_path, capsys):
        doc = {"n": 2, "H": [0.0] * 4, "F": [0.0, 0.0],
               "A": [1.0, 1.0], "B": [-1.0]}
        rc = main(["minlp", _write_json(tmp_path, "binf.json", doc),
                   "--rho-max", "10.0",
                   "--report", str(tmp_path / "r.csv")])
        assert rc == EXIT_SOLVER
        assert "no native-feasible" in capsys.readouterr().err

    def test_malformed_file(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{oops")
        rc = main(["minlp", str(p), "--report", str(tmp_path / "r.csv")])
        assert rc == EXIT_PARSE
        assert "error:" in capsys.readouterr().err


class TestCheckGrads:
    def test_seeded_qp(self, capsys):
        rc = main(["check-grads", "--n", "4", "--nc", "3",
                   "--points", "3"])
        assert rc == EXIT_OK
        assert "worst relative deviation" in capsys.readouterr().out

    def test_qp_from_file(self, tmp_path, capsys):
        rc = main(["check-grads", _descent_qp(tmp_path), "--points", "2"])
        assert rc == EXIT_OK

    def test_binary_kind_needs_file(self, capsys):
        rc = main(["check-grads", "--kind", "binary"])
        assert rc == EXIT_PARSE
        assert "needs an input file" in capsys.readouterr().err

    def test_binary_from_file(self, tmp_path, capsys):
        rc = main(["check-grads", _knapsack_file(tmp_path),
                   "--kind", "binary", "--points", "3"])
        assert rc == EXIT_OK

    def test_unattainable_tolerance(self, capsys):
        rc = main(["check-grads", "--n", "3", "--nc", "2",
                   "--points", "2", "--tol", "1e-300"])
        assert rc == EXIT_SOLVER


class TestParser:
    def test_no_subcommand(self, capsys):
        assert main([]) == EXIT_PARSE

    def test_unknown_flag(self, capsys):
        assert main(["bench", "--does-not-exist"]) == EXIT_PARSE
