import json

import pytest

from htmsim import cli
from htmsim.harness import (CSV_FIELDS, RunSpec, StatsRecord, abort_ratio_mean, default_grid,
                            format_csv, run_experiment, run_once, run_specs, sweep)

HEADER = ("workload,threads,counters,duration,sync,fp,seed,commits,aborts_total,aborts_inval,"
          "aborts_dwng,aborts_presc,aborts_capacity,aborts_overflow,app_failures,cycles,"
          "throughput_per_kcycle,oracle_ok")

SMALL = RunSpec("counters", threads=2, counters=2, ops=64)


def test_csv_header_is_exact():
    assert ",".join(CSV_FIELDS) == HEADER


def test_one_record_gives_header_and_row():
    (rec,) = run_experiment(SMALL)
    lines = format_csv([rec]).splitlines()
    assert lines[0] == HEADER and len(lines) == 2
    row = dict(zip(CSV_FIELDS, lines[1].split(",")))
    assert row["workload"] == "counters" and row["fp"] == "token" and row["oracle_ok"] == "1"
    assert int(row["commits"]) == 64


def test_empty_csv_rejected():
    with pytest.raises(ValueError):
        format_csv([])


def test_throughput_rounded_to_three_places():
    rec = StatsRecord("counters", 2, 2, "short", "htm", "token", 0, commits=1, cycles=3)
    assert rec.throughput_per_kcycle == 333.333
    assert "333.333" in format_csv([rec])
    assert StatsRecord("queue", 2, 0, "", "htm", "none", 0).throughput_per_kcycle == 0.0


def test_commits_equal_total_for_counters():
    (rec,) = run_experiment(SMALL.replace(ops=1024))
    assert rec.commits == 1024 and rec.oracle_ok
    assert rec.per_thread_successes == [512, 512]
    assert rec.aborts_total == (rec.aborts_inval + rec.aborts_dwng + rec.aborts_capacity
                                + rec.aborts_overflow + rec.aborts_interrupt)


@pytest.mark.parametrize("workload", ["queue", "dlist"])
def test_other_workloads_leave_counter_columns_blank(workload):
    (rec,) = run_experiment(RunSpec(workload, threads=2, ops=32))
    assert rec.oracle_ok and rec.commits >= 32
    assert (rec.counters, rec.duration) == (0, "")


def test_reps_use_consecutive_seeds():
    recs = run_experiment(SMALL.replace(seed=7, reps=3))
    assert [r.seed for r in recs] == [7, 8, 9]


def test_sweep_single_value_matches_direct_run():
    a = sweep("threads", [4], SMALL)
    b = run_experiment(SMALL.replace(threads=4))
    assert format_csv(a) == format_csv(b)


def test_sweep_rejects_unknown_axis():
    with pytest.raises(ValueError):
        sweep("l1_size", [1], SMALL)


def test_parallel_and_serial_runs_agree():
    specs = [SMALL, SMALL.replace(counters=3)]
    assert format_csv(run_specs(specs, jobs=2)) == format_csv(run_specs(specs, jobs=1))


def test_rerun_is_byte_identical():
    specs = [SMALL.replace(threads=4, reps=2), RunSpec("queue", 4, ops=64)]
    assert format_csv(run_specs(specs)) == format_csv(run_specs(specs))


def test_spec_validation():
    with pytest.raises(ValueError):
        RunSpec("stack")
    with pytest.raises(ValueError):
        RunSpec(fp="lottery")
    with pytest.raises(ValueError):
        RunSpec(reps=0)
    assert RunSpec(fp="sorted-seq").fp == "sorted"


def test_default_grid_shape():
    grid = default_grid()
    assert len(grid) == 24
    assert sum(s.workload == "counters" for s in grid) == 18
    assert all(s.reps == 3 and s.ops == 1024 for s in grid)


def test_abort_ratio_mean_filters():
    rows = [StatsRecord("counters", 8, k, "short", "htm", "token", 0, commits=10,
                        aborts_total=10 * k) for k in (2, 3)]
    assert abort_ratio_mean(rows, counters=3) == 3.0
    assert abort_ratio_mean(rows, counters=4) is None


def test_cycle_limit_error_names_the_run():
    with pytest.raises(Exception) as info:
        run_once(SMALL.replace(cycle_limit=50))
    assert "counters n=2" in str(info.value)


# --- command line -------------------------------------------------------------

def test_cli_counters_csv(capsys):
    assert cli.main(["counters", "--threads", "2", "--ops", "64"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == HEADER and len(out) == 2


def test_cli_json_and_out_file(tmp_path):
    path = tmp_path / "r.json"
    assert cli.main(["queue", "--ops", "32", "--json", "--out", str(path)]) == 0
    (row,) = json.loads(path.read_text())
    assert row["workload"] == "queue" and row["oracle_ok"] is True
    assert "token_requests" in row and "per_thread_successes" in row


def test_cli_sweep_axis(capsys):
    assert cli.main(["sweep", "--axis", "counters", "--values", "2,3", "--ops", "32"]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert [r.split(",")[2] for r in rows] == ["2", "3"]


def test_cli_cycle_limit_exit_code(capsys):
    code = cli.main(["counters", "--fp", "none", "--threads", "4", "--cycle-limit", "100"])
    assert code == cli.EXIT_CYCLE_LIMIT
    assert "cycle limit" in capsys.readouterr().err


def test_cli_oracle_violation_exit_code(monkeypatch, capsys):
    real = cli.run_once

    def broken(spec, rep=0):
        rec, system = real(spec, rep)
        rec.verdicts["counters"] = ["counter 0 = 1, expected 2"]
        return rec, system

    monkeypatch.setattr(cli, "run_once", broken)
    assert cli.main(["counters", "--ops", "16"]) == cli.EXIT_ORACLE
    assert "oracle violation" in capsys.readouterr().err


def test_cli_trace_goes_to_stderr(capsys):
    assert cli.main(["counters", "--ops", "4", "--trace"]) == 0
    err = capsys.readouterr().err
    assert "GetS" in err and "GetX" in err


def test_cli_config_file(tmp_path, capsys):
    cfg = tmp_path / "m.toml"
    cfg.write_text("commit_write_latency = 3\n")
    assert cli.main(["counters", "--ops", "16", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.count("\n") == 2


def test_cli_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--axis", "threads", "--values", "2,4", "--ops", "64", "--reps", "2"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
