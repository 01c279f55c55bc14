import json
import subprocess
import sys

import pytest

from evrp_ohd.cli import (
    COLUMNS,
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_USAGE,
    THREADS_ENV,
    SweepSpec,
    main,
    read_report,
    run_sweep,
)
from evrp_ohd.instances import read_instance, read_solution

SMALL = ["--extent", "60", "--range-conventional", "200", "--range-electric", "150",
         "--max-conventional", "2", "--max-electric", "2"]


@pytest.fixture
def five(tmp_path):
    path = tmp_path / "five.json"
    assert main(["gen", "--n", "5", "--ohd", "0.4", "--seed", "3", "--out", str(path), *SMALL]) == EXIT_OK
    return path


def test_gen_counts_ohd_customers(tmp_path, capsys):
    out = tmp_path / "i.json"
    assert main(["gen", "--n", "20", "--ohd", "0.2", "--seed", "1", "--out", str(out)]) == EXIT_OK
    assert len(read_instance(out).customers_ohd) == 4
    line = capsys.readouterr().out
    assert "n=20" in line and "ohd=4" in line and "volume=" in line


def test_gen_rejects_bad_ratio(tmp_path, capsys):
    assert main(["gen", "--n", "5", "--ohd", "1.5", "--out", str(tmp_path / "x.json")]) == EXIT_USAGE
    assert "outside" in capsys.readouterr().err


def test_missing_subcommand_is_usage_error():
    assert main([]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_OK


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        main(["gen", "--n", "12", "--ohd", "0.5", "--seed", "9", "--out", str(p)])
    assert a.read_bytes() == b.read_bytes()


def test_exact_solve_then_validate(five, tmp_path, capsys):
    sol = tmp_path / "s.json"
    assert main(["solve", "--in", str(five), "--method", "exact", "--out", str(sol)]) == EXIT_OK
    summary = capsys.readouterr().out.strip()
    fields = dict(kv.split("=", 1) for kv in summary.split())
    assert fields["method"] == "exact" and fields["feasible"] == "1"
    assert {"purchase", "travel", "trucks", "electric", "evse", "wall"} <= set(fields)
    assert main(["validate", "--instance", str(five), "--solution", str(sol)]) == EXIT_OK


def test_vns_solve_is_reproducible(five, tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["solve", "--in", str(five), "--method", "vns", "--seed", "7", "--out", str(p)]) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_lexicographic_override(five, tmp_path, capsys):
    sol = tmp_path / "s.json"
    assert main(["solve", "--in", str(five), "--objective", "lex", "--out", str(sol)]) == EXIT_OK
    assert "mode=lexicographic" in capsys.readouterr().out


def test_exact_refuses_big_instances(tmp_path, capsys):
    big = tmp_path / "big.json"
    main(["gen", "--n", "50", "--out", str(big)])
    code = main(["solve", "--in", str(big), "--method", "exact", "--out", str(tmp_path / "s.json")])
    assert code == EXIT_USAGE
    assert "limit" in capsys.readouterr().err


def test_exact_infeasible_exit_code(tmp_path, capsys):
    inst = tmp_path / "i.json"
    main(["gen", "--n", "4", "--seed", "2", "--out", str(inst), "--extent", "60",
          "--range-conventional", "5", "--range-electric", "5"])
    code = main(["solve", "--in", str(inst), "--method", "exact", "--out", str(tmp_path / "s.json")])
    assert code == EXIT_INFEASIBLE
    assert "feasible=0" in capsys.readouterr().out


def test_vns_infeasible_exit_code(tmp_path, capsys):
    inst = tmp_path / "i.json"
    main(["gen", "--n", "4", "--seed", "2", "--out", str(inst), "--extent", "60",
          "--range-conventional", "5", "--range-electric", "5"])
    sol = tmp_path / "s.json"
    assert main(["solve", "--in", str(inst), "--out", str(sol)]) == EXIT_INFEASIBLE
    assert "feasible=0" in capsys.readouterr().out
    assert read_solution(sol).trucks


def test_tampered_solution_reports_coverage(five, tmp_path, capsys):
    sol = tmp_path / "s.json"
    main(["solve", "--in", str(five), "--method", "exact", "--out", str(sol)])
    doc = json.loads(sol.read_text())
    doc.pop("objective")
    truck = next(t for t in doc["trucks"] if t["day_route"])
    truck["day_route"].pop()
    sol.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["validate", "--instance", str(five), "--solution", str(sol)]) == EXIT_INFEASIBLE
    assert "constraint=4" in capsys.readouterr().out


def test_out_of_range_location_is_structural(five, tmp_path, capsys):
    sol = tmp_path / "s.json"
    sol.write_text(json.dumps({"schema_version": "1.0", "kind": "solution", "evse_count": 0, "trucks": [
        {"engine": "conventional", "day_route": [1, 2, 3, 4, 5, 99], "night_route": [], "recharge_time": 0}]}))
    assert main(["validate", "--instance", str(five), "--solution", str(sol)]) == EXIT_USAGE
    assert "99" in capsys.readouterr().err


def test_threads_env_is_checked(five, tmp_path, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "zero")
    assert main(["validate", "--instance", str(five), "--solution", str(five)]) == EXIT_USAGE


def tiny_spec(**kw):
    params = dict(customer_count=6, ohd_ratios=(0.0, 1.0), ev_ranges=(150,), seeds=(1,),
                  base={"plane_extent": 60, "range_conventional": 200}, max_steps=30)
    params.update(kw)
    return SweepSpec(**params)


def test_sweep_row_counts_and_header():
    text = run_sweep(tiny_spec())
    assert text.startswith("# ")
    assert "30 MPH" in text and "Limitation" in text
    rows = read_report(text)
    assert [r["row"] for r in rows] == ["cell", "cell", "mean", "mean"]
    assert list(rows[0]) == COLUMNS
    for r in rows:
        assert int(float(r["routes"])) >= int(float(r["trucks"]))
    day_only = rows[0]
    assert day_only["ev_ratio_pct"] == "0.000" and day_only["routes"] == day_only["trucks"]


def test_sweep_bytes_repeat(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"customer_count": 6, "ohd_ratios": [0.5], "ev_ranges": [150, 200],
                                "seeds": [0, 1], "base": {"plane_extent": 60}, "max_steps": 20}))
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        assert main(["sweep", "--spec", str(spec), "--out", str(out)]) == EXIT_OK
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert len(read_report(outs[0].read_text())) == 4 + 2


def test_sweep_worker_count_does_not_change_output():
    spec = tiny_spec(seeds=(0, 1))
    assert run_sweep(spec, threads=2) == run_sweep(spec, threads=1)


def test_sweep_timing_column_is_opt_in():
    text = run_sweep(tiny_spec(ohd_ratios=(0.0,)), timing=True)
    assert "wall_s" in read_report(text)[0]


def test_sweep_marks_infeasible_cells():
    rows = read_report(run_sweep(tiny_spec(base={"plane_extent": 60, "range_conventional": 5}, ev_ranges=(5,))))
    assert rows[0]["feasible"] == "no"
    assert rows[-1]["feasible"] == "0/1" and rows[-1]["objective"] == ""


def test_sweep_spec_rejects_unknown_keys(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"ratios": [0.1]}))
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "o.csv")]) == EXIT_USAGE


def test_sweep_flag_validation(tmp_path):
    assert main(["sweep", "--ratios", "0.1,2", "--out", str(tmp_path / "o.csv")]) == EXIT_USAGE


def test_module_entry_point(five):
    done = subprocess.run([sys.executable, "-m", "evrp_ohd.cli", "validate", "--instance", str(five),
                           "--solution", str(five)], capture_output=True, text=True)
    assert done.returncode == EXIT_USAGE
