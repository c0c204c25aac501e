import os

import pytest

from infw.cli import main, split_roster
from infw.trace import read_trace


@pytest.fixture
def inst_dir(tmp_path):
    out = tmp_path / "inst"
    assert main(["generate", "--m", "30", "--n", "25", "--r", "2", "--snr", "5", "--rho", "0.4",
                 "--seed", "7", "--out", str(out)]) == 0
    return out


def test_generate_writes_files(inst_dir):
    assert sorted(os.listdir(inst_dir)) == ["meta.txt", "observed.txt"]


def test_solve_prints_summary(inst_dir, tmp_path, capsys):
    trace = tmp_path / "t.csv"
    rc = main(["solve", "--input", str(inst_dir), "--method", "if", "--gamma1", "0",
               "--gamma2", "inf", "--gap", "3.1623e-3", "--delta", "1", "--delta-units",
               "normalized", "--out", str(trace)])
    assert rc == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    for key in ("f=", "B=", "gap=", "rank=", "seconds="):
        assert key in line
    assert read_trace(trace).summary["reason"] == "gap"


def test_solve_is_deterministic(inst_dir, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["solve", "--input", str(inst_dir), "--delta", "0.5", "--max-iters", "40",
                     "--out", str(p)]) == 0
    a, b = (read_trace(p) for p in paths)
    assert [(r.f, r.B, r.rank) for r in a.records] == [(r.f, r.B, r.rank) for r in b.records]


@pytest.mark.parametrize("argv, needle", [
    (["solve", "--method", "if", "--gamma1", "2", "--gamma2", "1", "--delta", "1"], "gamma1"),
    (["solve", "--delta", "0"], "--delta"),
    (["solve", "--delta", "-2"], "--delta"),
    (["solve", "--input", "/nonexistent/x", "--delta", "1"], "not found"),
    (["solve", "--frobnicate"], "unrecognized"),
    (["solve", "--gamma2", "lots"], "inf"),
    (["solve", "--method", "newton"], "invalid choice"),
])
def test_user_errors_exit_1(argv, needle, inst_dir, capsys):
    if "--input" not in argv:
        argv = argv + ["--input", str(inst_dir)]
    assert main(argv) == 1
    err = capsys.readouterr().err
    assert needle in err
    assert len(err.strip().splitlines()) == 1


def test_config_file_merge(inst_dir, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("method=if-rank\ndelta=0.5\nmax-iters=30\n")
    assert main(["solve", "--input", str(inst_dir), "--config", str(cfg), "--method", "fw"]) == 0
    out = capsys.readouterr().out
    assert "method=fw" in out and "delta=0.5" in out
    cfg.write_text("wibble=3\n")
    assert main(["solve", "--input", str(inst_dir), "--config", str(cfg)]) == 1


def test_internal_error_exit_2(inst_dir, monkeypatch):
    import infw.cli as cli

    def boom(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(cli, "run_solver", boom)
    assert main(["solve", "--input", str(inst_dir), "--delta", "1"]) == 2


def test_select_delta_command(inst_dir, tmp_path, capsys):
    out = tmp_path / "sel"
    assert main(["select-delta", "--input", str(inst_dir), "--grid", "0.2,0.4,0.8",
                 "--budget", "30", "--out", str(out)]) == 0
    assert "selected delta=" in capsys.readouterr().out
    assert os.path.exists(out / "meta.txt")
    assert main(["select-delta", "--input", str(inst_dir), "--grid", "0.4,0.2"]) == 1


def test_bench_command(tmp_path):
    out = tmp_path / "bench"
    rc = main(["bench", "--m", "30", "--n", "25", "--r", "2", "--snr", "5", "--rho", "0.4",
               "--samples", "2", "--methods", "fw,if-(0,inf)", "--delta", "1",
               "--delta-units", "normalized", "--out", str(out)])
    assert rc == 0
    assert os.path.exists(out / "report.txt")
    assert len(os.listdir(out / "traces")) == 4


def test_split_roster():
    assert split_roster("fw,if-(0,inf), if-(1,1),away") == ("fw", "if-(0,inf)", "if-(1,1)", "away")
