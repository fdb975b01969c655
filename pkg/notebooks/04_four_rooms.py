# Four rooms with a hidden goal that moves every episode.
#
# No stationary policy can aim at the goal (it is invisible and resampled
# each episode), so what the agents actually learn is an exploration policy.
# Temporal abstraction is what helps here: options sweep rooms instead of
# dithering cell by cell.  This is a scaled-down run (10 seeds, 6k episodes);
# the full benchmark protocol lives in the acceptance suite.

import numpy as np

from hoc import experiment, plotting
from hoc.envs import FourRooms
from hoc.learn import Learner
from hoc.rng import TraceRng

env = FourRooms()
env.reset(TraceRng(7))
print("the arena (A agent, G goal):")
print(env.render())
print()

summaries = []
for depth in (1, 2, 3):
    spec = experiment.ExperimentSpec(
        env="four_rooms",
        agent=experiment.default_agent("four_rooms", depth),
        num_runs=8,
        episodes=4_000,
        base_seed=0,
        output_dir="runs/four_rooms_demo",
        label=f"depth {depth}",
    )
    summary = experiment.run_experiment(spec, write_files=False)
    summaries.append(summary)
    switch = ", ".join(
        f"l{j + 1}={r:.3f}" for j, r in enumerate(summary.switch_rates)
    )
    print(
        f"depth {depth}: episode length first window "
        f"{summary.mean[0]:.0f} -> final {summary.final_mean:.0f} steps"
        + (f"  (option switches per step: {switch})" if switch else "")
    )

plotting.emit_plot(summaries, "runs/four_rooms_demo/curves.svg")
print("\nwrote runs/four_rooms_demo/curves.svg")

# A peek at what a trained depth-2 agent's options look like: roll one
# episode and print how long each option ran before terminating.
agent = experiment.default_agent("four_rooms", 2)
learner = Learner(agent, seed=1)
for _ in range(800):
    learner.run_episode(env)
log = learner.run_episode(env, record_steps=True)
durations = []
run = 0
for rec in log.records:
    run += 1
    if 1 in rec.terminated_levels:
        durations.append(run)
        run = 0
mean_duration = float(np.mean(durations)) if durations else float(log.steps)
print(
    f"sample episode after 800 training episodes: {log.steps} steps, "
    f"mean option duration {mean_duration:.1f}"
)
