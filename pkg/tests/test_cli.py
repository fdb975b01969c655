from pathlib import Path

import pytest

from hoc import cli
from hoc.experiment import read_aggregate_csv


SMALL_RUN = """\
[experiment]
env = stochastic_dp
episodes = 200
num_runs = 2
base_seed = 3

[agent]
depth = 2
"""


class TestRunCommand:
    def test_run_writes_artifacts(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(SMALL_RUN)
        out = tmp_path / "results"
        code = cli.main(["run", str(cfg), "--out", str(out)])
        assert code == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == [
            "stochastic_dp_n2_aggregate.csv",
            "stochastic_dp_n2_curve.svg",
            "stochastic_dp_n2_run_3.csv",
            "stochastic_dp_n2_run_4.csv",
        ]
        series = read_aggregate_csv(out / "stochastic_dp_n2_aggregate.csv")
        assert len(series[0].mean) == 2
        assert "final window mean reward" in capsys.readouterr().out

    def test_seed_and_runs_overrides(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(SMALL_RUN)
        out = tmp_path / "results"
        code = cli.main(
            ["run", str(cfg), "--out", str(out), "--seed", "9",
             "--runs", "1", "--parallel", "2"]
        )
        assert code == 0
        assert (out / "stochastic_dp_n2_run_9.csv").exists()

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("[experiment]\nenv = mars\n")
        assert cli.main(["run", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "env" in err

    def test_missing_config_exits_2(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "nope.cfg")]) == 2


class TestPlotCommand:
    def test_plot_from_aggregate(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(SMALL_RUN)
        out = tmp_path / "results"
        cli.main(["run", str(cfg), "--out", str(out)])
        agg = out / "stochastic_dp_n2_aggregate.csv"
        code = cli.main(["plot", str(agg), "--out", str(tmp_path / "p.svg")])
        assert code == 0
        assert (tmp_path / "p.svg").read_text().startswith("<?xml")

    def test_missing_csv_exits_2(self, tmp_path):
        assert cli.main(["plot", str(tmp_path / "nope.csv")]) == 2


class TestVerifyCommand:
    def test_quick_suite_exits_zero_and_writes_report(self, tmp_path):
        out = tmp_path / "verification"
        code = cli.main(["verify", "--quick", "--out", str(out)])
        assert code == 0
        report = (out / "report.txt").read_text()
        for name in ("partition", "enumeration", "theorem1", "theorem2",
                     "n2_reduction", "monte_carlo"):
            assert f"[PASS] {name}" in report
        assert "FAIL" not in report
        residuals = (out / "residuals.csv").read_text().splitlines()
        assert residuals[0] == "check,passed,worst,seconds"
        assert len(residuals) == 11  # ten checks


class TestUsage:
    def test_no_command_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main([])
        assert exc.value.code == 2

    def test_unknown_command_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2
