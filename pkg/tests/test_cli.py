"""Tests for the command-line harness."""

import csv
import json

import pytest

from gridroute.cli import main
from gridroute.regions import fig1_fixture, parse_region, serialize_region


@pytest.fixture
def fig1_file(tmp_path):
    path = tmp_path / "fig1.region"
    path.write_text(serialize_region(fig1_fixture()), encoding="utf-8")
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


class TestRoute:
    def test_route_fig1_fifo(self, fig1_file, tmp_path, capsys):
        out = tmp_path / "report"
        code = main(
            ["route", "--region", str(fig1_file), "--policy", "fifo", "--iterations", "5", "--out", str(out)]
        )
        assert code == 0
        trend = read_csv(out / "trend.csv")
        assert len(trend) == 7  # header + iterations 0..5
        assert trend[0][0] == "iteration"
        summary = read_csv(out / "summary.csv")
        assert summary[1][summary[0].index("drv_total")] == "0"
        assert "drv=0" in capsys.readouterr().out

    def test_route_incomplete_exits_one(self, fig1_file, tmp_path):
        out = tmp_path / "report"
        code = main(
            ["route", "--region", str(fig1_file), "--policy", "fifo", "--iterations", "1", "--out", str(out)]
        )
        assert code == 1
        violations = read_csv(out / "violations.csv")
        assert len(violations) > 1

    def test_route_exhaustive_policy(self, fig1_file, tmp_path):
        out = tmp_path / "report"
        code = main(
            ["route", "--region", str(fig1_file), "--policy", "exhaustive", "--iterations", "2", "--out", str(out)]
        )
        assert code == 0

    def test_missing_file_exits_two(self, tmp_path, capsys):
        code = main(["route", "--region", str(tmp_path / "nope.region"), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_iteration_flag_bounds(self, fig1_file, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["route", "--region", str(fig1_file), "--iterations", "66", "--out", str(tmp_path / "o")])
        assert exc.value.code == 2


class TestGen:
    def test_fixture_round_trips(self, tmp_path):
        out = tmp_path / "fig1.region"
        assert main(["gen", "--fixture", "fig1", "--out", str(out)]) == 0
        region = parse_region(out.read_text(encoding="utf-8"))
        assert region == fig1_fixture()

    def test_generated_file_is_deterministic(self, tmp_path):
        a = tmp_path / "a.region"
        b = tmp_path / "b.region"
        args = ["gen", "--seed", "9", "--dim", "5", "5", "2", "--nets", "3"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_fixture(self, tmp_path, capsys):
        assert main(["gen", "--fixture", "fig9", "--out", str(tmp_path / "x")]) == 2


class TestBench:
    def test_generated_bench_writes_table(self, tmp_path):
        out = tmp_path / "bench"
        code = main(
            [
                "bench",
                "--generate", "3",
                "--gen-dim", "5", "5", "2",
                "--gen-nets", "3",
                "--policies", "fifo,min-hpwl",
                "--iterations", "2",
                "--seed", "5",
                "--out", str(out),
            ]
        )
        assert code == 0
        rows = read_csv(out / "bench.csv")
        assert len(rows) == 7  # header + 3 regions x 2 policies
        assert rows[0][:3] == ["region", "policy", "status"]
        assert all(r[2] == "ok" for r in rows[1:])
        assert (out / "timings.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "bench"

    def test_region_failure_recorded_run_continues(self, tmp_path, fig1_file):
        bad = tmp_path / "bad.region"
        bad.write_text("region broken\ndim 0 0 0\nend\n", encoding="utf-8")
        listing = tmp_path / "set.txt"
        listing.write_text(f"{fig1_file.name}\n", encoding="utf-8")
        # a directory with one good and one bad file
        setdir = tmp_path / "set"
        setdir.mkdir()
        (setdir / "good.region").write_text(fig1_file.read_text(), encoding="utf-8")
        (setdir / "bad.region").write_text("region b\ndim 2 2 1\nnet 0\npin 0 ap 9 9 9\nend\n")
        code = main(["bench", "--regions", str(setdir), "--policies", "fifo", "--out", str(tmp_path / "o")])
        assert code == 2  # the bad file fails at load time

    def test_policy_error_recorded_per_row(self, tmp_path, fig1_file):
        out = tmp_path / "bench"
        code = main(
            ["bench", "--regions", str(fig1_file), "--policies", "fifo,exhaustive", "--gen-nets", "3", "--out", str(out)]
        )
        assert code == 0
        rows = read_csv(out / "bench.csv")
        assert [r[2] for r in rows[1:]] == ["ok", "ok"]


class TestServe:
    def test_iteration_count_cap(self):
        with pytest.raises(SystemExit) as exc:
            main(["serve", "--iteration-count", "66"])
        assert exc.value.code == 2

    def test_bad_region_set_exits_two(self, tmp_path, capsys):
        assert main(["serve", "--region-set", str(tmp_path / "missing")]) == 2

    def test_every_engine_parameter_has_a_flag(self):
        from gridroute.cli import build_parser

        parser = build_parser()
        serve_parser = parser._subparsers._group_actions[0].choices["serve"]
        flags = {opt for action in serve_parser._actions for opt in action.option_strings}
        expected = {
            "--region-set",       # testcase_name
            "--region-set-loop",  # testcase_loop
            "--clip-size",
            "--clip-location",
            "--clip-loop",
            "--iteration-count",
            "--thread-count",
            "--net-loop",
        }
        assert expected <= flags
