import csv
import json

import pytest

from lqgne.cli import main, parse_x0s


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_solve_writes_trajectory(tmp_path):
    assert main(["solve", "two_agent_scalar", "--N", "30", "--x0", "1", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "traj_N30_x0_1.0.csv")
    assert len(rows) == 1 + 31
    assert rows[0][:4] == ["k", "x[0]", "u[0][0]", "u[1][0]"]
    assert rows[-1][2] == ""   # no input at k = N
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["verdict"]["certified"] is True


def test_solve_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["solve", "--game", "two_agent_scalar", "--N", "10", "--out", str(tmp_path / d)]) == 0
    name = "traj_N10_x0_1.0.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_infeasible_exit_code(tmp_path):
    assert main(["solve", "two_agent_scalar", "--x0", "10", "--out", str(tmp_path)]) == 1


def test_missing_game_file(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 3
    assert "nope.yaml" in capsys.readouterr().err


def test_bad_horizon_list(tmp_path):
    assert main(["solve", "two_agent_scalar", "--N", "", "--out", str(tmp_path)]) == 3


def test_turnpike_sweep_rows(tmp_path):
    code = main(["turnpike-sweep", "two_agent_scalar", "--N", "10,20", "--x0", "-1,0,1",
                 "--eps", "0.05", "--penalty", "none", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "turnpike.csv")
    assert len(rows) == 1 + 3 * 2


def test_learn_and_penalty(tmp_path):
    assert main(["learn", "two_agent_scalar", "--N", "20", "--imax", "1", "--out", str(tmp_path / "l")]) == 0
    assert len(read_csv(tmp_path / "l" / "learn.csv")) == 1 + 2
    assert main(["penalty", "two_agent_scalar", "--N", "20", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "summary.json").exists()


def test_parse_x0s():
    assert [x.tolist() for x in parse_x0s("-1,0,1", 1)] == [[-1.0], [0.0], [1.0]]
    assert [x.tolist() for x in parse_x0s("1,2;3,4", 2)] == [[1.0, 2.0], [3.0, 4.0]]
