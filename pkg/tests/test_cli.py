import csv
import subprocess
import sys

import pytest

from twospecies.cli import EXIT_NOINPUT, EXIT_SOFTWARE, execute, main, parse_args
from twospecies import engine


def test_parse_simulate():
    cfg = parse_args(["simulate", "--rho", "uniform:0,1", "--eta", "uniform:2,3", "--n", "50", "--t", "10", "--out", "d/"])
    assert (cfg.command, cfg.n, cfg.horizon) == ("simulate", 50, 10.0)


def test_parse_converge():
    cfg = parse_args(["converge", "--n-list", "25,50,100,200", "--p", "1", "--t", "5"])
    assert cfg.n_list == (25, 50, 100, 200) and cfg.p == 1.0 and cfg.horizon == 5.0


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--rho", "uniform:0,1", "--eta", "uniform:2,3", "--n", "0"],
        ["simulate", "--bogus"],
        ["converge", "--n-list", "50,25"],
        ["simulate", "--x", "0,1"],
    ],
)
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        parse_args(argv)
    assert exc.value.code == 2


def test_unreadable_file(tmp_path):
    code = main(["simulate", "--rho", f"cdf:{tmp_path}/missing.txt", "--eta", "uniform:0,1", "--n", "3"])
    assert code == EXIT_NOINPUT


def test_head_on_simulation(tmp_path, capsys):
    assert main(["simulate", "--x", "0", "--y", "1", "--out", str(tmp_path), "--sample", "0.1"]) == 0
    out = capsys.readouterr().out
    assert "events=1" in out and "final_energy=0 " in out and "t_stationary=0.5" in out
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "species", "index", "position"]
    assert ["0.5", "x", "0", "0.5"] in rows


def test_census_paired(tmp_path):
    assert main(["census", "--rho", "uniform:0,1", "--eta", "uniform:0,1", "--n-list", "4", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "census.csv").read_text().splitlines()[1] == "4,0,0,0,0.0"


def test_oracle_compare(capsys):
    assert main(["oracle-compare", "--x=-2,-1", "--y=0,1"]) == 0
    assert "ok" in capsys.readouterr().out


def test_invariant_violation_exit_70(monkeypatch, capsys):
    def broken(*a, **k):
        raise engine.EngineInvariantError("same-species separation", "forced")

    monkeypatch.setattr(engine, "run", broken)
    assert execute(parse_args(["simulate", "--x", "0", "--y", "1"])) == EXIT_SOFTWARE
    assert "same-species separation" in capsys.readouterr().err


def test_deterministic_outputs(tmp_path):
    for d in ("a", "b"):
        main(["simulate", "--rho", "uniform:0,1", "--eta", "uniform:0.5,2", "--n", "12", "--out", str(tmp_path / d)])
    for name in ("trace.csv", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "twospecies", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "oracle-compare" in proc.stdout
