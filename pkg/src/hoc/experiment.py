"""Experiment harness: config files, multi-seed sweeps, CSV artifacts.

Config files are UTF-8 ``key = value`` lines under ``[experiment]`` and
``[agent]`` headers; unknown keys are rejected and every error is reported
with its line number in one pass.  Defaults reproduce the tabular benchmark
protocol: discount 0.99, per-environment learning rates and temperatures,
4 options for depth 2, 2 options per level for deeper agents, and the
reporting cadence of windowed means every ``report_window`` episodes.

Outputs per experiment: one CSV per run (episode, steps, reward, switches
per level) and one aggregate CSV (agent, checkpoint, episodes, mean, std of
the environment's headline metric).  Every file is written atomically and
every byte is determined by the spec plus ``base_seed``, regardless of
``--parallel``.
"""

from __future__ import annotations

import csv
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import fast
from .core import HierarchyConfig, TopPolicy

ENV_NAMES = ("four_rooms", "stochastic_dp")

# Headline learning-curve metric per environment.
ENV_METRIC = {"four_rooms": "steps", "stochastic_dp": "reward"}

ENV_SIZES = {"four_rooms": (104, 4), "stochastic_dp": (12, 2)}

# Benchmark defaults per (environment, depth): learning rates and the
# temperature shared by all levels.  Depths above 3 reuse the depth-3 values
# (no published setting exists for them; flagged in the docs).
#
# The published settings leave the policy-gradient baseline, the termination
# regularizer eta, and the critic initialization unstated.  The values below
# are what the benchmarks need to learn at all under the published rates:
# four-rooms agents use the variance-reduction baseline and a small eta
# (without them the all-positive update scale saturates the intra-option
# policies and curves degrade); stochastic-DP agents keep the literal raw-Q
# update but start the critics optimistically at half the maximal episode
# reward (without it the 0.01 side reward traps every depth-2 run).
_AGENT_DEFAULTS = {
    "four_rooms": {
        1: dict(lr_critic=0.01, lr_policy=0.01, lr_termination=0.0, temp=0.1,
                baseline=True, eta=0.0, critic_init=0.0),
        2: dict(lr_critic=0.5, lr_policy=0.5, lr_termination=0.25, temp=1.0,
                baseline=True, eta=0.01, critic_init=0.0),
        3: dict(lr_critic=0.5, lr_policy=0.5, lr_termination=0.25, temp=1.0,
                baseline=True, eta=0.01, critic_init=0.0),
    },
    "stochastic_dp": {
        1: dict(lr_critic=0.25, lr_policy=0.25, lr_termination=0.0, temp=0.01,
                baseline=False, eta=0.0, critic_init=0.5),
        2: dict(lr_critic=0.5, lr_policy=0.1, lr_termination=0.01, temp=0.1,
                baseline=False, eta=0.0, critic_init=0.5),
        3: dict(lr_critic=0.5, lr_policy=1.0, lr_termination=10.0, temp=1.0,
                baseline=False, eta=0.0, critic_init=0.5),
    },
}

_EXPERIMENT_DEFAULTS = {
    "four_rooms": dict(num_runs=50, episodes=20_000),
    "stochastic_dp": dict(num_runs=10, episodes=10_000),
}


@dataclass
class ExperimentSpec:
    """A fully resolved experiment: environment, agent, sweep protocol."""

    env: str
    agent: HierarchyConfig
    num_runs: int
    episodes: int
    report_window: int = 100
    base_seed: int = 0
    output_dir: Path = Path("hoc_runs")
    step_cap: int = 10_000
    label: str = ""

    def __post_init__(self):
        if self.env not in ENV_NAMES:
            raise ValueError(f"unknown env {self.env!r}")
        if self.num_runs < 1:
            raise ValueError("num_runs must be >= 1")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not 1 <= self.report_window <= self.episodes:
            raise ValueError("report_window must divide the episode budget")
        if self.episodes % self.report_window != 0:
            raise ValueError("report_window must divide episodes evenly")
        if not self.label:
            self.label = f"{self.env}_n{self.agent.depth}"

    @property
    def metric(self) -> str:
        return ENV_METRIC[self.env]


class ConfigError(ValueError):
    """Config file rejected; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


def default_agent(env: str, depth: int, **overrides) -> HierarchyConfig:
    """The benchmark agent for an environment at a given depth."""
    if env not in ENV_NAMES:
        raise ValueError(f"unknown env {env!r}")
    base = _AGENT_DEFAULTS[env][min(depth, 3)]
    s_count, a_count = ENV_SIZES[env]
    if depth == 1:
        options: tuple[int, ...] = ()
    elif depth == 2:
        options = (4,)
    else:
        options = (2,) * (depth - 1)
    kwargs = dict(
        depth=depth,
        options_per_level=options,
        num_actions=a_count,
        num_states=s_count,
        gamma=0.99,
        temperature_per_level=(base["temp"],) * depth,
        lr_critic=base["lr_critic"],
        lr_policy=base["lr_policy"],
        lr_termination=base["lr_termination"],
        epsilon=0.1,
        eta=base["eta"],
        top_policy_mode=(
            TopPolicy.POLICY_GRADIENT if depth == 1 else TopPolicy.EPSILON_GREEDY
        ),
        use_advantage_baseline=base["baseline"],
        critic_init=base["critic_init"],
    )
    kwargs.update(overrides)
    return HierarchyConfig(**kwargs)


_EXP_KEYS = {
    "env": str,
    "num_runs": int,
    "episodes": int,
    "report_window": int,
    "base_seed": int,
    "output_dir": str,
    "step_cap": int,
    "label": str,
}

_AGENT_KEYS = {
    "depth": int,
    "options_per_level": "int_list",
    "gamma": float,
    "temperature_per_level": "float_list",
    "lr_critic": float,
    "lr_policy": float,
    "lr_termination": float,
    "epsilon": float,
    "eta": float,
    "top_policy_mode": str,
    "use_advantage_baseline": "bool",
    "critic_init": float,
}

_RANGE_CHECKS = {
    ("agent", "gamma"): (lambda v: 0.0 <= v < 1.0, "must lie in [0, 1)"),
    ("agent", "epsilon"): (lambda v: 0.0 <= v <= 1.0, "must lie in [0, 1]"),
    ("agent", "eta"): (lambda v: v >= 0.0, "must be >= 0"),
    ("agent", "depth"): (lambda v: v >= 1, "must be >= 1"),
    ("experiment", "num_runs"): (lambda v: v >= 1, "must be >= 1"),
    ("experiment", "episodes"): (lambda v: v >= 1, "must be >= 1"),
    ("experiment", "report_window"): (lambda v: v >= 1, "must be >= 1"),
    ("experiment", "step_cap"): (lambda v: v >= 1, "must be >= 1"),
}


def parse_config(path) -> ExperimentSpec:
    """Parse and validate an experiment config file.

    Raises :class:`ConfigError` carrying every invalid line, unknown key,
    type mismatch, and out-of-range value at once, each with its line number.
    """
    text = Path(path).read_text(encoding="utf-8")
    errors: list[str] = []
    values: dict[tuple[str, str], object] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("experiment", "agent"):
                errors.append(f"line {lineno}: unknown section [{section}]")
                section = None
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value")
            continue
        if section is None:
            errors.append(f"line {lineno}: key outside a [section]")
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        schema = _EXP_KEYS if section == "experiment" else _AGENT_KEYS
        if key not in schema:
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]")
            continue
        parsed = _parse_value(schema[key], val)
        if parsed is None:
            errors.append(
                f"line {lineno}: {key} expects {_type_name(schema[key])}, "
                f"got {val!r}"
            )
            continue
        check = _RANGE_CHECKS.get((section, key))
        if check and not check[0](parsed):
            errors.append(f"line {lineno}: {key} {check[1]}, got {val!r}")
            continue
        values[(section, key)] = parsed

    env = values.get(("experiment", "env"))
    depth = values.get(("agent", "depth"))
    if env is None:
        errors.append("missing required key: env in [experiment]")
    elif env not in ENV_NAMES:
        errors.append(f"env must be one of {ENV_NAMES}, got {env!r}")
        env = None
    if depth is None:
        errors.append("missing required key: depth in [agent]")
    mode = values.get(("agent", "top_policy_mode"))
    if mode is not None:
        try:
            values[("agent", "top_policy_mode")] = TopPolicy(mode)
        except ValueError:
            errors.append(
                f"top_policy_mode must be one of "
                f"{[m.value for m in TopPolicy]}, got {mode!r}"
            )
    if errors:
        raise ConfigError(errors)

    agent_overrides = {
        key: val for (sec, key), val in values.items() if sec == "agent"
    }
    agent_overrides.pop("depth")
    if "options_per_level" in agent_overrides:
        agent_overrides["options_per_level"] = tuple(
            agent_overrides["options_per_level"]
        )
    if "temperature_per_level" in agent_overrides:
        agent_overrides["temperature_per_level"] = tuple(
            agent_overrides["temperature_per_level"]
        )
    try:
        agent = default_agent(env, depth, **agent_overrides)
    except (ValueError, TypeError) as exc:
        raise ConfigError([f"agent: {exc}"]) from exc

    exp_kwargs = dict(_EXPERIMENT_DEFAULTS[env])
    for (sec, key), val in values.items():
        if sec == "experiment" and key != "env":
            exp_kwargs[key] = val
    if "output_dir" in exp_kwargs:
        exp_kwargs["output_dir"] = Path(exp_kwargs["output_dir"])
    try:
        return ExperimentSpec(env=env, agent=agent, **exp_kwargs)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


def _parse_value(kind, val: str):
    try:
        if kind is str:
            return val
        if kind is int:
            return int(val)
        if kind is float:
            return float(val)
        if kind == "bool":
            if val.lower() in ("true", "yes", "1"):
                return True
            if val.lower() in ("false", "no", "0"):
                return False
            return None
        if kind == "int_list":
            return [int(x) for x in val.replace(",", " ").split()]
        if kind == "float_list":
            return [float(x) for x in val.replace(",", " ").split()]
    except ValueError:
        return None
    return None


def _type_name(kind) -> str:
    if kind == "int_list":
        return "a list of integers"
    if kind == "float_list":
        return "a list of reals"
    if kind == "bool":
        return "a boolean"
    return kind.__name__


@dataclass
class RunSummary:
    """Windowed learning-curve aggregate across a sweep's runs."""

    label: str
    metric: str
    episodes_at_checkpoint: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    final_mean: float
    # Per level: total switches / total steps across all runs.
    switch_rates: list[float] = field(default_factory=list)
    per_run_final: np.ndarray = field(default_factory=lambda: np.zeros(0))
    per_run_windowed: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


def _run_one(args) -> dict:
    spec, run_index = args
    seed = spec.base_seed + run_index
    res = fast.run_learning(
        spec.agent, spec.env, seed, spec.episodes, step_cap=spec.step_cap
    )
    return {
        "seed": seed,
        "steps": res.steps,
        "reward": res.reward,
        "switches": res.switches,
        "terminations": res.terminations,
    }


def run_experiment(
    spec: ExperimentSpec, parallel: int = 1, write_files: bool = True
) -> RunSummary:
    """Execute a sweep: one run per seed, per-run CSVs, aggregate CSV.

    Seeds are ``base_seed .. base_seed + num_runs - 1``.  Runs are
    independent, so outputs do not depend on ``parallel``.  On failure, any
    files already written by this invocation are removed.
    """
    jobs = [(spec, i) for i in range(spec.num_runs)]
    if parallel > 1 and spec.num_runs > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    written: list[Path] = []
    try:
        out_dir = spec.output_dir
        if write_files:
            out_dir.mkdir(parents=True, exist_ok=True)
            for res in results:
                path = out_dir / f"{spec.label}_run_{res['seed']}.csv"
                _write_run_csv(path, spec, res)
                written.append(path)
        summary = summarize(spec, results)
        if write_files:
            path = out_dir / f"{spec.label}_aggregate.csv"
            write_aggregate_csv(path, [summary])
            written.append(path)
        return summary
    except BaseException:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise


def summarize(spec: ExperimentSpec, results: list[dict]) -> RunSummary:
    """Windowed means every ``report_window`` episodes, across runs."""
    window = spec.report_window
    n_checkpoints = spec.episodes // window
    metric_key = spec.metric
    per_run = np.stack(
        [
            res[metric_key].reshape(n_checkpoints, window).mean(axis=1)
            for res in results
        ]
    )
    mean = per_run.mean(axis=0)
    std = per_run.std(axis=0)  # population std; runs are the whole population
    episodes_at = np.arange(1, n_checkpoints + 1) * window
    total_steps = sum(int(res["steps"].sum()) for res in results)
    n_levels = spec.agent.depth - 1
    switch_rates = []
    for level in range(n_levels):
        switches = sum(int(res["switches"][:, level].sum()) for res in results)
        switch_rates.append(switches / total_steps if total_steps else 0.0)
    return RunSummary(
        label=spec.label,
        metric=metric_key,
        episodes_at_checkpoint=episodes_at,
        mean=mean,
        std=std,
        final_mean=float(mean[-1]),
        switch_rates=switch_rates,
        per_run_final=per_run[:, -1].copy(),
        per_run_windowed=per_run,
    )


def _write_run_csv(path: Path, spec: ExperimentSpec, res: dict) -> None:
    n_levels = spec.agent.depth - 1
    header = ["episode", "steps", "reward"] + [
        f"switches_l{j}" for j in range(1, n_levels + 1)
    ]
    rows = []
    for ep in range(spec.episodes):
        row = [
            str(ep + 1),
            str(int(res["steps"][ep])),
            _fmt(res["reward"][ep]),
        ]
        row += [str(int(res["switches"][ep, j])) for j in range(n_levels)]
        rows.append(row)
    _atomic_write_csv(path, header, rows)


def write_aggregate_csv(path: Path, summaries: list[RunSummary]) -> None:
    """Long-format aggregate: one row per (agent, checkpoint)."""
    header = ["agent", "metric", "checkpoint", "episodes", "mean", "std"]
    rows = []
    for s in summaries:
        for i in range(len(s.mean)):
            rows.append(
                [
                    s.label,
                    s.metric,
                    str(i + 1),
                    str(int(s.episodes_at_checkpoint[i])),
                    _fmt(s.mean[i]),
                    _fmt(s.std[i]),
                ]
            )
    _atomic_write_csv(path, header, rows)


def read_aggregate_csv(path) -> list[RunSummary]:
    """Inverse of :func:`write_aggregate_csv` (plot input)."""
    groups: dict[str, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            g = groups.setdefault(
                row["agent"],
                {"metric": row["metric"], "episodes": [], "mean": [], "std": []},
            )
            g["episodes"].append(int(row["episodes"]))
            g["mean"].append(float(row["mean"]))
            g["std"].append(float(row["std"]))
    out = []
    for label, g in groups.items():
        mean = np.array(g["mean"])
        out.append(
            RunSummary(
                label=label,
                metric=g["metric"],
                episodes_at_checkpoint=np.array(g["episodes"]),
                mean=mean,
                std=np.array(g["std"]),
                final_mean=float(mean[-1]) if len(mean) else float("nan"),
            )
        )
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def _atomic_write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
