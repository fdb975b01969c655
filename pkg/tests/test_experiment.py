import csv
from pathlib import Path

import numpy as np
import pytest

from hoc import experiment
from hoc.core import TopPolicy
from hoc.experiment import ConfigError, ExperimentSpec, parse_config


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


MINIMAL_DP3 = """\
[experiment]
env = stochastic_dp

[agent]
depth = 3
"""


class TestParseConfig:
    def test_minimal_config_fills_benchmark_defaults(self, tmp_path):
        spec = parse_config(write_config(tmp_path, MINIMAL_DP3))
        assert spec.env == "stochastic_dp"
        assert spec.num_runs == 10
        assert spec.episodes == 10_000
        assert spec.report_window == 100
        agent = spec.agent
        assert agent.depth == 3
        assert agent.options_per_level == (2, 2)
        assert agent.gamma == 0.99
        # published temperature ladder: 0.01 / 0.1 / 1.0 by model depth
        assert agent.temperature_per_level == (1.0, 1.0, 1.0)
        assert agent.lr_critic == 0.5
        assert agent.lr_policy == 1.0
        assert agent.lr_termination == 10.0
        assert agent.top_policy_mode is TopPolicy.EPSILON_GREEDY

    def test_depth_ladder_temperatures(self, tmp_path):
        for depth, temp in ((1, 0.01), (2, 0.1), (3, 1.0)):
            spec = parse_config(
                write_config(
                    tmp_path,
                    MINIMAL_DP3.replace("depth = 3", f"depth = {depth}"),
                    name=f"d{depth}.cfg",
                )
            )
            assert spec.agent.temperature_per_level == (temp,) * depth

    def test_depth_one_defaults_to_policy_gradient(self, tmp_path):
        spec = parse_config(
            write_config(tmp_path, MINIMAL_DP3.replace("depth = 3",
                                                       "depth = 1"))
        )
        assert spec.agent.top_policy_mode is TopPolicy.POLICY_GRADIENT
        assert spec.agent.options_per_level == ()

    def test_four_rooms_defaults(self, tmp_path):
        text = MINIMAL_DP3.replace("stochastic_dp", "four_rooms").replace(
            "depth = 3", "depth = 2"
        )
        spec = parse_config(write_config(tmp_path, text))
        assert spec.num_runs == 50
        assert spec.episodes == 20_000
        assert spec.agent.options_per_level == (4,)
        assert spec.agent.lr_termination == 0.25
        assert spec.agent.num_states == 104

    def test_gamma_out_of_range_names_bound(self, tmp_path):
        text = MINIMAL_DP3 + "gamma = 1.5\n"
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, text))
        assert any("[0, 1)" in e for e in err.value.errors)
        assert any("line 6" in e for e in err.value.errors)

    def test_empty_file_lists_all_required_keys(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, ""))
        joined = " ".join(err.value.errors)
        assert "env" in joined and "depth" in joined
        assert len(err.value.errors) == 2

    def test_unknown_keys_rejected_all_at_once(self, tmp_path):
        text = MINIMAL_DP3 + "bogus = 1\nanother = x\n"
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, text))
        assert sum("unknown key" in e for e in err.value.errors) == 2

    def test_type_mismatch_reports_line(self, tmp_path):
        text = MINIMAL_DP3.replace("depth = 3", "depth = three")
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, text))
        assert any("line 5" in e and "depth" in e for e in err.value.errors)

    def test_window_must_divide_episodes(self, tmp_path):
        text = MINIMAL_DP3 + "episodes = 150\nreport_window = 100\n"
        with pytest.raises(ConfigError):
            parse_config(write_config(tmp_path, text))

    def test_comments_and_overrides(self, tmp_path):
        text = """\
# benchmark run
[experiment]
env = stochastic_dp   # the decision chain
episodes = 400
num_runs = 2
base_seed = 9

[agent]
depth = 2
epsilon = 0.2
options_per_level = 3
use_advantage_baseline = true
"""
        spec = parse_config(write_config(tmp_path, text))
        assert spec.episodes == 400
        assert spec.base_seed == 9
        assert spec.agent.epsilon == 0.2
        assert spec.agent.options_per_level == (3,)
        assert spec.agent.use_advantage_baseline is True


def small_spec(tmp_path, label="dp_test", seed=5, runs=3):
    agent = experiment.default_agent("stochastic_dp", 2)
    return ExperimentSpec(
        env="stochastic_dp",
        agent=agent,
        num_runs=runs,
        episodes=300,
        report_window=100,
        base_seed=seed,
        output_dir=tmp_path / "out",
        label=label,
    )


class TestRunExperiment:
    def test_outputs_deterministic_and_parallel_invariant(self, tmp_path):
        spec_a = small_spec(tmp_path / "a")
        spec_b = small_spec(tmp_path / "b")
        experiment.run_experiment(spec_a, parallel=1)
        experiment.run_experiment(spec_b, parallel=2)
        for name in sorted(p.name for p in spec_a.output_dir.iterdir()):
            a = (spec_a.output_dir / name).read_bytes()
            b = (spec_b.output_dir / name).read_bytes()
            assert a == b, name

    def test_identical_seeds_identical_run_csvs(self, tmp_path):
        spec = small_spec(tmp_path, runs=1, seed=4)
        experiment.run_experiment(spec)
        first = (spec.output_dir / "dp_test_run_4.csv").read_bytes()
        spec2 = small_spec(tmp_path / "again", runs=1, seed=4)
        experiment.run_experiment(spec2)
        second = (spec2.output_dir / "dp_test_run_4.csv").read_bytes()
        assert first == second

    def test_aggregate_matches_recomputation_from_run_csvs(self, tmp_path):
        spec = small_spec(tmp_path)
        summary = experiment.run_experiment(spec)
        per_run = []
        for i in range(spec.num_runs):
            path = spec.output_dir / f"dp_test_run_{spec.base_seed + i}.csv"
            with open(path, newline="") as fh:
                rows = list(csv.DictReader(fh))
            rewards = np.array([float(r["reward"]) for r in rows])
            per_run.append(rewards.reshape(-1, 100).mean(axis=1))
        per_run = np.stack(per_run)
        np.testing.assert_allclose(summary.mean, per_run.mean(axis=0),
                                   atol=1e-12)
        np.testing.assert_allclose(summary.std, per_run.std(axis=0),
                                   atol=1e-12)
        # aggregate CSV round-trips
        series = experiment.read_aggregate_csv(
            spec.output_dir / "dp_test_aggregate.csv"
        )
        assert len(series) == 1
        np.testing.assert_allclose(series[0].mean, summary.mean, atol=1e-12)

    def test_switch_counts_match_step_records(self, tmp_path):
        # The CSV switch columns must equal the number of steps whose
        # refreshed option differs, per level, recounted from the
        # pure-Python learner's step records.
        from hoc.envs import StochasticDP
        from hoc.learn import Learner

        spec = small_spec(tmp_path, runs=1, seed=11)
        experiment.run_experiment(spec)
        path = spec.output_dir / "dp_test_run_11.csv"
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        learner = Learner(spec.agent, seed=11)
        env = StochasticDP()
        for ep, row in enumerate(rows):
            log = learner.run_episode(env, step_cap=spec.step_cap,
                                      record_steps=True)
            switches = sum(
                1 for rec in log.records if 1 in rec.switched_levels
            )
            assert int(row["switches_l1"]) == switches
            assert int(row["steps"]) == log.steps

    def test_csv_schema(self, tmp_path):
        spec = small_spec(tmp_path, runs=1)
        experiment.run_experiment(spec)
        with open(spec.output_dir / "dp_test_run_5.csv", newline="") as fh:
            header = next(csv.reader(fh))
        assert header == ["episode", "steps", "reward", "switches_l1"]
        with open(spec.output_dir / "dp_test_aggregate.csv", newline="") as fh:
            header = next(csv.reader(fh))
        assert header == ["agent", "metric", "checkpoint", "episodes",
                          "mean", "std"]

    def test_failure_removes_partial_files(self, tmp_path, monkeypatch):
        spec = small_spec(tmp_path)
        calls = {"n": 0}
        orig = experiment._write_run_csv

        def explode(path, spec_, res):
            calls["n"] += 1
            if calls["n"] == 2:
                raise OSError("disk full")
            orig(path, spec_, res)

        monkeypatch.setattr(experiment, "_write_run_csv", explode)
        with pytest.raises(OSError):
            experiment.run_experiment(spec)
        leftovers = list(spec.output_dir.glob("*.csv"))
        assert leftovers == []
